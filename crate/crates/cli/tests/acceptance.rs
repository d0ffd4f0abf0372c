//! Acceptance checks. Prints one PASS/FAIL line per criterion, then fails
//! if any criterion failed.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use pocgen_core::explorer::{ApiKind, ExportedApi, SourceLoc};
use pocgen_core::llm::load_transcript;
use pocgen_core::prompt::Bm25Index;
use pocgen_core::refine::{score_attempt, AttemptRecord};
use pocgen_core::report_store::VulnClass;
use pocgen_core::taint::{
    build_code_model, check_path, find_taint_paths, render_taint_report, resolve_entry, sink_spec, CodeModel, TaintPath, TaintStep, Tier,
};
use pocgen_core::validator::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

type Check = fn() -> Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("{what} took {took:?}, limit {limit:?}"))
}

fn pocgen(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pocgen"))
        .args(args)
        .env_remove("POCGEN_LLM_KEY")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("pocgen {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

// ---------------------------------------------------------------------------
// 1. oracle decisions

const CWD: &str = "/sandbox/pkg";
const FIG3: &str = "async function exploit() {\n  const DateFormatter=require(\"php-date-formatter\");\n  const maliciousJson='{\"__proto__\": {\"exploited\": true}}';\n  const maliciousOptions=JSON.parse(maliciousJson);\n  const result=new DateFormatter(maliciousOptions);\n}\nawait exploit();";
const CHEAT: &str = "async function exploit() {\n  const payload = {};\n  payload.__proto__.exploited = true;\n}\nawait exploit();";

fn true_case(class: VulnClass) -> (ExecutionReport, &'static str) {
    let mut r = ExecutionReport::default();
    let mut source = "async function exploit() {\n  require(\"pkg\").run(input);\n}\nawait exploit();";
    match class {
        VulnClass::PathTraversal => r.fs_accesses.push(FsAccess {
            raw_path: "../../flag.txt".into(),
            normalized_path: "/flag.txt".into(),
            operation: "readFileSync".into(),
            vuln_fn_on_stack: true,
        }),
        VulnClass::PrototypePollution => {
            r.proto_exploited_present = true;
            source = FIG3;
        }
        VulnClass::CommandInjection => r.sentinel_hits.push(SentinelHit {
            marker_path: "/sandbox/pkg/genpoc.sentinel".into(),
            vuln_fn_on_stack: true,
        }),
        VulnClass::CodeInjection => r.seteuid_calls.push(SeteuidCall {
            argument: SETEUID_MARKER,
            vuln_fn_on_stack: true,
        }),
        VulnClass::ReDoS => r.regex_events.push(RegexEvent {
            duration_ms: 1600,
            source: RegexSource::Regex,
        }),
    }
    (r, source)
}

/// The class signal with stack attribution removed. Prototype pollution and
/// ReDoS signals carry no stack, so for them the report holds only an
/// unattributed sink event of another kind.
fn without_stack(class: VulnClass) -> ExecutionReport {
    let (mut r, _) = true_case(class);
    r.fs_accesses.iter_mut().for_each(|a| a.vuln_fn_on_stack = false);
    r.sentinel_hits.iter_mut().for_each(|h| h.vuln_fn_on_stack = false);
    r.seteuid_calls.iter_mut().for_each(|c| c.vuln_fn_on_stack = false);
    if matches!(class, VulnClass::PrototypePollution | VulnClass::ReDoS) {
        r = ExecutionReport::default();
        r.spawned.push(SpawnEvent {
            argv: vec!["/usr/bin/genpoc".into()],
            vuln_fn_on_stack: false,
        });
    }
    r
}

fn check_oracles() -> Result<String, String> {
    let start = Instant::now();
    let mut cases = 0;
    for class in VulnClass::ALL {
        let (report, source) = true_case(class);
        let v = validate(class, &report, source, CWD);
        ensure(v.outcome == Outcome::Valid, || format!("{class:?} true exploitation judged {:?}: {}", v.outcome, v.reason))?;
        cases += 1;

        let polluted = ExecutionReport {
            proto_exploited_present: true,
            ..ExecutionReport::default()
        };
        let slow = ExecutionReport {
            regex_events: vec![RegexEvent {
                duration_ms: REDOS_THRESHOLD_MS,
                source: RegexSource::Regex,
            }],
            ..ExecutionReport::default()
        };
        let adversarial = [("no stack", without_stack(class), source), ("cheat", polluted, CHEAT), ("1500 ms", slow, source)];
        for (name, report, source) in adversarial {
            let v = validate(class, &report, source, CWD);
            ensure(v.outcome == Outcome::Invalid, || format!("{class:?} {name}: judged {:?} ({})", v.outcome, v.reason))?;
            cases += 1;
        }
    }
    within(start, Duration::from_secs(1), "oracle suite")?;
    Ok(format!("{cases}/20 verdicts as expected in {:?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 2. taint suite

fn taint_cases() -> [(&'static str, VulnClass, ExportedApi, &'static str); 5] {
    [
        ("asset-reader", VulnClass::PathTraversal, ExportedApi::new("root.readAsset", ApiKind::Function, 2), "fs.readFileSync("),
        ("date-formatter-lite", VulnClass::PrototypePollution, ExportedApi::new("root", ApiKind::Constructor, 1), "target[key] ="),
        ("git-tag-lister", VulnClass::CommandInjection, ExportedApi::new("root.listTags", ApiKind::Function, 3), "exec(cmd"),
        ("djv", VulnClass::CodeInjection, ExportedApi::new("root.Environment.prototype.import", ApiKind::Method, 1), "new Function("),
        ("name-check", VulnClass::ReDoS, ExportedApi::new("root.isValidName", ApiKind::Function, 1), ".test(trimmed)"),
    ]
}

fn model(dir: &str) -> Result<CodeModel, String> {
    build_code_model(&fixtures().join("packages").join(dir)).map_err(|e| format!("{dir}: {e}"))
}

fn check_taint() -> Result<String, String> {
    let start = Instant::now();
    let mut steps = 0;
    for (dir, class, entry, sink) in taint_cases() {
        let model = model(dir)?;
        let paths = find_taint_paths(&model, &[entry.clone()], class, Tier::Extended);
        let path = paths.first().ok_or_else(|| format!("{dir}: no Extended path"))?;
        let f = resolve_entry(&model, &entry).ok_or_else(|| format!("{dir}: entry unresolved"))?;
        let signature = model.functions[f].start_line;
        ensure(path.steps[0].line == signature, || format!("{dir}: first step at line {} not {signature}", path.steps[0].line))?;
        let last = path.steps.last().expect("non-empty path");
        ensure(last.snippet.contains(sink), || format!("{dir}: last step `{}` is not the sink", last.snippet.trim()))?;
        check_path(&model, &sink_spec(class, Tier::Extended), path).map_err(|e| format!("{dir}: {e}"))?;
        steps += path.steps.len();
    }
    let djv = model("djv")?;
    let (_, class, entry, _) = taint_cases()[3].clone();
    let path = &find_taint_paths(&djv, &[entry], class, Tier::Extended)[0];
    let rendered = render_taint_report(path, &djv);
    let golden = std::fs::read_to_string(fixtures().join("golden/djv_taint_report.md")).map_err(|e| e.to_string())?;
    ensure(rendered == golden, || format!("djv report differs from golden:\n{rendered}"))?;
    within(start, Duration::from_secs(5), "taint suite")?;
    Ok(format!("5 fixtures, {steps} steps checked, djv golden identical, {:?}", start.elapsed()))
}

// ---------------------------------------------------------------------------
// 3. Strict ⊆ Extended

const EXPRS: [&str; 8] = ["{p}", "{p} + 'x'", "'-' + {p}", "path.join('/r', {p})", "{p}.trim()", "[{p}].join(' ')", "f{g}({p})", "'const'"];
const SINKS: [&str; 9] = [
    "exec({v})",
    "eval({v})",
    "fs.readFileSync({v})",
    "new RegExp({v})",
    "o[{v}][k] = 1",
    "o[{v}] = 1",
    "{v}.match(/a+$/)",
    "new Function('a', {v})",
    "f{g}({v})",
];

fn random_program(rng: &mut StdRng) -> String {
    let mut out = String::from("const fs = require('fs')\nconst path = require('path')\n");
    for i in 0..3 {
        out.push_str(&format!("function f{i}(a, b) {{\n"));
        let mut prev = "a".to_string();
        for j in 0..rng.gen_range(1..4) {
            let p = if rng.gen_bool(0.3) { "b".to_string() } else { prev.clone() };
            let g = rng.gen_range(0..3).to_string();
            let expr = EXPRS[rng.gen_range(0..EXPRS.len())].replace("{p}", &p).replace("{g}", &g);
            out.push_str(&format!("  const v{j} = {expr}\n"));
            let sink = SINKS[rng.gen_range(0..SINKS.len())].replace("{v}", &format!("v{j}")).replace("{g}", &g);
            out.push_str(&format!("  {sink}\n"));
            prev = format!("v{j}");
        }
        out.push_str("}\n");
    }
    out.push_str("module.exports = { f0, f1, f2 }\n");
    out
}

fn subset(model: &CodeModel, entries: &[ExportedApi], what: &str) -> Result<usize, String> {
    let mut n = 0;
    for class in VulnClass::ALL {
        let extended = find_taint_paths(model, entries, class, Tier::Extended);
        for p in find_taint_paths(model, entries, class, Tier::Strict) {
            ensure(extended.contains(&p), || format!("{what} {class:?}: strict path missing from Extended"))?;
            n += 1;
        }
    }
    Ok(n)
}

fn check_monotonicity() -> Result<String, String> {
    let mut strict_paths = 0;
    for (dir, ..) in taint_cases() {
        let model = model(dir)?;
        let entries: Vec<ExportedApi> = model
            .functions
            .iter()
            .map(|f| {
                let mut api = ExportedApi::new(&format!("root.{}", f.name), f.kind, f.arity());
                api.source_loc = Some(SourceLoc {
                    file: model.files[f.file].path.clone(),
                    start_line: f.start_line,
                    end_line: f.end_line,
                });
                api
            })
            .collect();
        strict_paths += subset(&model, &entries, dir)?;
    }
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let entries: Vec<ExportedApi> = (0..3).map(|i| ExportedApi::new(&format!("root.f{i}"), ApiKind::Function, 2)).collect();
    for i in 0..200 {
        let src = random_program(&mut rng);
        let model = CodeModel::from_sources("gen", &[("index.js".to_string(), src)]);
        ensure(model.functions.len() == 3, || format!("program {i} did not yield 3 functions"))?;
        strict_paths += subset(&model, &entries, &format!("program {i}"))?;
    }
    Ok(format!("5 fixtures and 200 generated programs, {strict_paths} strict paths all in Extended"))
}

// ---------------------------------------------------------------------------
// 4. BM25

fn reference_rank(docs: &[String], query: &str) -> Vec<usize> {
    let tokens = |text: &str| -> Vec<String> {
        text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    };
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokens(d)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut scored: Vec<(f64, usize)> = toks
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut s = 0.0;
            for term in tokens(query) {
                let df = toks.iter().filter(|d| d.contains(&term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let tf = d.iter().filter(|t| **t == term).count() as f64;
                s += idf * (tf * 2.2) / (tf + 1.2 * (0.25 + 0.75 * (d.len() as f64 / avg)));
            }
            (s, i)
        })
        .collect();
    let mut out = Vec::new();
    while !scored.is_empty() {
        let mut best = 0;
        for j in 1..scored.len() {
            if scored[j].0 > scored[best].0 || (scored[j].0 == scored[best].0 && scored[j].1 < scored[best].1) {
                best = j;
            }
        }
        out.push(scored.remove(best).1);
    }
    out
}

const VOCAB: [&str; 12] = [
    "prototype", "pollution", "command", "injection", "path", "traversal", "merge", "exec", "regex", "denial", "service", "file",
];

fn random_text(rng: &mut StdRng) -> String {
    let seps = [" ", ", ", ". ", "-", "\n"];
    (0..rng.gen_range(0..12))
        .map(|_| format!("{}{}", VOCAB[rng.gen_range(0..VOCAB.len())], seps[rng.gen_range(0..seps.len())]))
        .collect()
}

fn check_bm25() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(0xb325);
    for i in 0..50 {
        let docs: Vec<String> = (0..rng.gen_range(1..10)).map(|_| random_text(&mut rng)).collect();
        let query = random_text(&mut rng);
        let got = Bm25Index::new(&docs).rank(&query);
        let want = reference_rank(&docs, &query);
        ensure(got == want, || format!("corpus {i}: rank {got:?}, reference {want:?}"))?;
    }
    Ok("50 randomized corpora, exact rank agreement".into())
}

// ---------------------------------------------------------------------------
// 5. refinement determinism and budget

const ERRORS: [&str; 5] = [
    "TypeError: listTags is not a function",
    "ReferenceError: exploit is not defined",
    "Error: Cannot find module 'pkg'",
    "SyntaxError: Unexpected token '}'",
    "RangeError: Maximum call stack size exceeded",
];
const FILES: [&str; 3] = ["index.js", "lib/a.js", "lib/b.js"];

struct RandomReport {
    errors: Vec<(usize, bool)>,
    coverage: Vec<(usize, u32)>,
    report: ExecutionReport,
}

fn random_report(rng: &mut StdRng) -> RandomReport {
    let mut r = RandomReport {
        errors: Vec::new(),
        coverage: Vec::new(),
        report: ExecutionReport::default(),
    };
    for _ in 0..rng.gen_range(0..5) {
        let (base, located) = (rng.gen_range(0..ERRORS.len()), rng.gen_bool(0.5));
        let message = if located {
            format!("{} at /tmp/sbx-{}/pkg/index.js:{}:{}", ERRORS[base], rng.gen_range(0..99), rng.gen_range(1..400), rng.gen_range(1..80))
        } else {
            ERRORS[base].to_string()
        };
        r.errors.push((base, located));
        r.report.errors.push(ErrorRecord {
            message,
            stack: String::new(),
        });
    }
    for _ in 0..rng.gen_range(0..12) {
        let (f, line) = (rng.gen_range(0..FILES.len()), rng.gen_range(1..20));
        let key = if rng.gen_bool(0.5) {
            FILES[f].to_string()
        } else {
            format!("/sandbox/node_modules/pkg/{}", FILES[f])
        };
        r.coverage.push((f, line));
        r.report.coverage.entry(key).or_default().insert(line);
    }
    r
}

fn check_refinement() -> Result<String, String> {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = fixtures();
    let transcript = fx.join("replay/budget.transcript.jsonl");
    let out = pocgen(&[
        "run",
        "--mode",
        "replay",
        "--report",
        path_str(&fx.join("reports/git-tag-lister.json")),
        "--workdir",
        path_str(work.path()),
        "--package-dir",
        path_str(&fx.join("packages/git-tag-lister")),
        "--exploits",
        path_str(&fx.join("exploits.jsonl")),
        "--transcript",
        path_str(&transcript),
        "--executions",
        path_str(&fx.join("replay/budget.executions.jsonl")),
    ])?;
    let outcome: Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure(outcome["status"] == "budget_exhausted", || format!("status {}", outcome["status"]))?;
    ensure(outcome["stop_reason"] == "max_refinements", || format!("stop reason {}", outcome["stop_reason"]))?;
    let attempts = outcome["attempts"].as_array().cloned().unwrap_or_default();
    ensure(attempts.len() == 30, || format!("{} attempts", attempts.len()))?;
    ensure(attempts[29]["iteration"] == 30, || format!("last iteration {}", attempts[29]["iteration"]))?;

    let entries = load_transcript(&transcript).map_err(|e| e.to_string())?;
    let generations: Vec<&str> = entries.iter().filter(|e| e.request.purpose == "generate").map(|e| e.request_digest.as_str()).collect();
    let distinct: BTreeSet<&str> = generations.iter().copied().collect();
    ensure(generations.len() == 30 && distinct.len() == 30, || format!("{} generation requests, {} distinct", generations.len(), distinct.len()))?;

    let mut rng = StdRng::seed_from_u64(0x5c0e);
    for i in 0..1000 {
        let steps: Vec<(usize, u32)> = (0..rng.gen_range(0..8)).map(|_| (rng.gen_range(0..FILES.len()), rng.gen_range(1..20))).collect();
        let path = TaintPath {
            entry: ExportedApi::new("root.f", ApiKind::Function, 1),
            vuln_class: VulnClass::CommandInjection,
            steps: steps
                .iter()
                .map(|(f, line)| TaintStep {
                    file: FILES[*f].into(),
                    line: *line,
                    snippet: String::new(),
                    tainted_symbol: "x".into(),
                    justification: Default::default(),
                })
                .collect(),
            sink_kind: "exec".into(),
        };
        let prev = random_report(&mut rng);
        let cur = random_report(&mut rng);
        let record = |r: &RandomReport, p: Option<&AttemptRecord>| {
            let verdict = validate(VulnClass::CommandInjection, &r.report, "", "/tmp");
            AttemptRecord::new(p, String::new(), String::new(), r.report.clone(), verdict, &path)
        };
        let with_prev = rng.gen_bool(0.8);
        let prev_record = with_prev.then(|| record(&prev, None));
        let cur_record = record(&cur, prev_record.as_ref());

        let old: BTreeSet<(usize, bool)> = if with_prev { prev.errors.iter().copied().collect() } else { BTreeSet::new() };
        let now: BTreeSet<(usize, bool)> = cur.errors.iter().copied().collect();
        let covered: BTreeSet<(usize, u32)> = cur.coverage.iter().copied().collect();
        let expected = (now.difference(&old).count() + steps.iter().filter(|s| covered.contains(s)).count()) as f64;
        let got = score_attempt(prev_record.as_ref(), &cur_record, &path);
        ensure(got == expected, || format!("pair {i}: score {got}, oracle {expected}"))?;
    }
    Ok("stopped at iteration 30 (max_refinements), 30 distinct generation requests, 1000 score pairs agree".into())
}

// ---------------------------------------------------------------------------
// 6. dataset builder

fn expected_dataset() -> BTreeMap<&'static str, (&'static str, &'static str)> {
    let cwe = "cwe_map";
    let pat = "pattern_match";
    BTreeMap::from([
        ("GHSA-cwe22-0000-0000", ("path_traversal", cwe)),
        ("GHSA-cwe35-0000-0000", ("path_traversal", cwe)),
        ("GHSA-cwe1321-0000-0000", ("prototype_pollution", cwe)),
        ("GHSA-cwe77-0000-0000", ("command_injection", cwe)),
        ("GHSA-cwe78-0000-0000", ("command_injection", cwe)),
        ("GHSA-cwe94-0000-0000", ("code_injection", cwe)),
        ("GHSA-cwe95-0000-0000", ("code_injection", cwe)),
        ("GHSA-cwe96-0000-0000", ("code_injection", cwe)),
        ("GHSA-cwe97-0000-0000", ("code_injection", cwe)),
        ("GHSA-cwe98-0000-0000", ("code_injection", cwe)),
        ("GHSA-cwe99-0000-0000", ("code_injection", cwe)),
        ("GHSA-cwe400-0000-0000", ("redos", cwe)),
        ("GHSA-cwe730-0000-0000", ("redos", cwe)),
        ("GHSA-cwe1333-0000-0000", ("redos", cwe)),
        ("GHSA-pat00-0000-0000", ("path_traversal", pat)),
        ("GHSA-pat01-0000-0000", ("prototype_pollution", pat)),
        ("GHSA-pat02-0000-0000", ("prototype_pollution", pat)),
        ("GHSA-pat03-0000-0000", ("command_injection", pat)),
        ("GHSA-pat04-0000-0000", ("command_injection", pat)),
        ("GHSA-pat05-0000-0000", ("command_injection", pat)),
        ("SNYK-JS-PAT06", ("command_injection", pat)),
        ("SNYK-JS-PAT07", ("code_injection", pat)),
        ("SNYK-JS-PAT08", ("code_injection", pat)),
        ("SNYK-JS-PAT09", ("code_injection", pat)),
        ("SNYK-JS-PAT10", ("redos", pat)),
        ("SNYK-JS-PAT11", ("redos", pat)),
    ])
}

fn check_dataset() -> Result<String, String> {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = work.path().join("dataset.jsonl");
    let adv = fixtures().join("advisories");
    let inputs = ["ghsa", "snyk"].iter().map(|d| std::fs::read_dir(adv.join(d)).map(|r| r.count()).unwrap_or(0)).sum::<usize>();
    ensure(inputs == 30, || format!("{inputs} advisories in the fixture set"))?;
    pocgen(&["dataset", "build", "--ghsa", path_str(&adv.join("ghsa")), "--snyk", path_str(&adv.join("snyk")), "--out", path_str(&out)])?;
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let mut got = BTreeMap::new();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let id = v["report"]["id"].as_str().unwrap_or_default().to_string();
        let entry = (v["vuln_class"].as_str().unwrap_or_default().to_string(), v["method"].as_str().unwrap_or_default().to_string());
        ensure(got.insert(id.clone(), entry).is_none(), || format!("{id} emitted twice"))?;
    }
    let want: BTreeMap<String, (String, String)> =
        expected_dataset().into_iter().map(|(k, (c, m))| (k.to_string(), (c.to_string(), m.to_string()))).collect();
    ensure(got == want, || format!("records differ: got {got:?}"))?;
    Ok(format!("30 advisories in, {} classified records out", got.len()))
}

// ---------------------------------------------------------------------------
// 7. replay end-to-end

fn corpus_run(workdir: &Path) -> Result<String, String> {
    let fx = fixtures();
    let ledger = workdir.join("ledger.jsonl");
    pocgen(&[
        "corpus",
        "--mode",
        "replay",
        "--file",
        path_str(&fx.join("reports/fixtures.jsonl")),
        "--workdir",
        path_str(workdir),
        "--ledger",
        path_str(&ledger),
        "--replay-dir",
        path_str(&fx.join("replay")),
        "--packages",
        path_str(&fx.join("packages")),
        "--exploits",
        path_str(&fx.join("exploits.jsonl")),
        "--jobs",
        "3",
    ])?;
    std::fs::read_to_string(&ledger).map_err(|e| e.to_string())
}

fn check_replay() -> Result<String, String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = corpus_run(a.path())?;
    let lines: Vec<Value> = first.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect::<Result<_, String>>()?;
    ensure(lines.len() == 5, || format!("{} ledger lines", lines.len()))?;
    for l in &lines {
        ensure(l["status"] == "exploit_generated", || format!("{}: {}", l["package_name"], l["status"]))?;
    }
    let second = corpus_run(b.path())?;
    ensure(first == second, || "ledgers of two replay runs differ".into())?;
    Ok("5/5 exploit_generated without a harness, rerun byte-identical".into())
}

// ---------------------------------------------------------------------------

#[test]
fn primary_acceptance_criteria() {
    let criteria: [(&str, Check); 7] = [
        ("oracle-decision suite", check_oracles),
        ("taint suite", check_taint),
        ("strict subset of extended", check_monotonicity),
        ("bm25 equivalence", check_bm25),
        ("refinement determinism and budget", check_refinement),
        ("dataset builder", check_dataset),
        ("replay end-to-end", check_replay),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL [{}] {name}: {why}", i + 1);
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
