mod common;

use std::collections::BTreeSet;

use common::*;
use pocgen_core::explorer::PackageSource;
use pocgen_core::llm::Gateway;
use pocgen_core::pipeline::*;
use pocgen_core::refine::StopReason;
use pocgen_core::report_store::VulnClass;
use pocgen_core::validator::{ExecutionReport, Outcome};

/// Regenerates the checked-in replay files from the scripted model and
/// harness. Run with `cargo test -p pocgen-core --test pipeline -- --ignored`.
#[test]
#[ignore]
fn record_replay_fixtures() {
    std::fs::create_dir_all(replay_dir()).unwrap();
    for name in FIXTURES {
        let dir = tempfile::tempdir().unwrap();
        let outcome = record(name, dir.path(), &transcript_path(name), &executions_path(name));
        assert_eq!(outcome.status, PipelineStatus::ExploitGenerated, "{name}: {outcome:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let outcome = record_with(
        "git-tag-lister",
        dir.path(),
        &transcript_path(BUDGET_FIXTURE),
        &executions_path(BUDGET_FIXTURE),
        ScriptedProvider::new("root.listTags", failing_exploit),
        ScriptedRunner::new(|_, _| crash("TypeError: cb is not a function")),
    );
    assert_eq!(outcome.status, PipelineStatus::BudgetExhausted);
}

#[test]
fn replay_generates_exploits_for_all_fixtures() {
    for name in FIXTURES {
        let dir = tempfile::tempdir().unwrap();
        let outcome = replay(name, dir.path());
        assert_eq!(outcome.status, PipelineStatus::ExploitGenerated, "{name}: {outcome:?}");
        assert_eq!(outcome.exploit_text.as_deref(), Some(exploit(name)));
        assert_eq!(outcome.target.as_deref(), Some(target(name)));
        assert_eq!(outcome.attempts.len(), 1);
        assert_eq!(outcome.attempts[0].outcome, Outcome::Valid);
        assert!(outcome.tokens_in > 0 && outcome.tokens_out > 0);
    }
}

#[test]
fn replay_reruns_are_byte_identical() {
    for name in FIXTURES {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let first = serde_json::to_string(&replay(name, a.path())).unwrap();
        let second = serde_json::to_string(&replay(name, b.path())).unwrap();
        assert_eq!(first, second, "{name}");
    }
}

#[test]
fn prototype_pollution_exploit_parses_json_payload() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = replay("date-formatter-lite", dir.path());
    assert_eq!(outcome.vuln_class, Some(VulnClass::PrototypePollution));
    let code = outcome.exploit_text.unwrap();
    assert!(code.contains("JSON.parse("));
    assert!(code.contains("__proto__"));
    assert!(code.contains("new DateFormatter("));
}

#[test]
fn missing_package_is_an_install_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config("asset-reader", dir.path());
    config.package_source = PackageSource::LocalDir(dir.path().join("nowhere"));
    let mut gateway = Gateway::replay(Vec::new());
    let runner = ScriptedRunner::new(|_, _| ExecutionReport::default());
    let outcome = run_pipeline(&load_report("asset-reader"), &config, &mut gateway, &runner, &FixedClock(0.0));
    assert_eq!(outcome.status, PipelineStatus::InstallError);
    assert!(outcome.error.is_some());
    assert!(outcome.attempts.is_empty());
}

/// Records a run whose every generation fails with the same error, then
/// replays the recording. With `distinct` each generation returns a new
/// exploit.
fn failing_run(distinct: bool) -> (PipelineOutcome, Vec<pocgen_core::llm::ChatExchange>) {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let provider = ScriptedProvider::new("root.listTags", move |n| failing_exploit(if distinct { n } else { 0 }));
    let mut gateway = Gateway::live(Box::new(provider), Some(transcript.clone()));
    let runner = ScriptedRunner::new(|_, _| crash("TypeError: cb is not a function"));
    let report = load_report("git-tag-lister");
    let workdir = dir.path().join("work");
    let live = run_pipeline(&report, &config("git-tag-lister", &workdir), &mut gateway, &runner, &FixedClock(0.0));

    let entries = pocgen_core::llm::load_transcript(&transcript).unwrap();
    let mut replayed = Gateway::replay(entries.clone());
    let replay_runner = pocgen_core::sandbox::ReplayRunner::new(runner.recorded());
    let again = run_pipeline(&report, &config("git-tag-lister", &workdir), &mut replayed, &replay_runner, &FixedClock(0.0));
    assert_eq!(serde_json::to_string(&live).unwrap(), serde_json::to_string(&again).unwrap());
    assert_eq!(replayed.remaining(), 0);
    (again, entries)
}

fn assert_unique_generations(entries: &[pocgen_core::llm::ChatExchange]) -> usize {
    let digests: Vec<&str> = entries
        .iter()
        .filter(|e| e.request.purpose == "generate")
        .map(|e| e.request_digest.as_str())
        .collect();
    let unique: BTreeSet<&str> = digests.iter().copied().collect();
    assert_eq!(unique.len(), digests.len(), "duplicate generation request");
    digests.len()
}

#[test]
fn failing_generations_exhaust_the_refinement_budget() {
    let (outcome, entries) = failing_run(true);
    assert_eq!(outcome.status, PipelineStatus::BudgetExhausted);
    assert_eq!(outcome.stop_reason, Some(StopReason::MaxRefinements));
    assert_eq!(outcome.attempts.len(), 30);
    assert_eq!(outcome.attempts.last().unwrap().iteration, 30);
    assert!(outcome.exploit_text.is_none());
    assert!(outcome.attempts.iter().all(|a| a.outcome != Outcome::Valid));
    assert!(outcome.attempts[0].refiner.is_none());
    assert!(outcome.attempts[1..].iter().all(|a| a.refiner.is_some()));
    // no attempt scores, so the queue rotates through every refiner
    assert!(outcome.attempts.iter().all(|a| a.score == 0.0 || a.refiner.is_none()));
    let kinds: BTreeSet<String> = outcome.attempts.iter().filter_map(|a| a.refiner).map(|k| format!("{k:?}")).collect();
    assert_eq!(kinds.len(), 6, "{kinds:?}");
    assert_eq!(assert_unique_generations(&entries), 30);
    for purpose in ["missing_decl", "debugger"] {
        assert!(entries.iter().any(|e| e.request.purpose == purpose), "{purpose}");
    }
}

#[test]
fn checked_in_budget_transcript_replays_to_exhaustion() {
    let dir = tempfile::tempdir().unwrap();
    let mut gateway = Gateway::replay_file(&transcript_path(BUDGET_FIXTURE)).unwrap();
    let runner = pocgen_core::sandbox::ReplayRunner::from_file(&executions_path(BUDGET_FIXTURE)).unwrap();
    let outcome = run_pipeline(&load_report("git-tag-lister"), &config("git-tag-lister", dir.path()), &mut gateway, &runner, &FixedClock(0.0));
    assert_eq!(outcome.status, PipelineStatus::BudgetExhausted);
    assert_eq!(outcome.stop_reason, Some(StopReason::MaxRefinements));
    assert_eq!(outcome.attempts.len(), 30);
    assert_eq!(gateway.remaining(), 0);
    assert_eq!(runner.remaining(), 0);
    let entries = pocgen_core::llm::load_transcript(&transcript_path(BUDGET_FIXTURE)).unwrap();
    assert_eq!(assert_unique_generations(&entries), 30);
}

#[test]
fn repeated_prompts_are_skipped_not_resent() {
    let (outcome, entries) = failing_run(false);
    assert_eq!(outcome.status, PipelineStatus::Failed);
    assert!(outcome.attempts.len() < 30);
    let hashes: BTreeSet<&str> = outcome.attempts.iter().map(|a| a.prompt_hash.as_str()).collect();
    assert_eq!(hashes.len(), outcome.attempts.len());
    assert_eq!(assert_unique_generations(&entries), outcome.attempts.len());
}

#[test]
fn token_budget_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let provider = ScriptedProvider::new("root.listTags", failing_exploit);
    let mut gateway = Gateway::live(Box::new(provider), None);
    let runner = ScriptedRunner::new(|_, _| crash("TypeError: nope"));
    let mut config = config("git-tag-lister", dir.path());
    config.limits.max_tokens_in = 5_000;
    let outcome = run_pipeline(&load_report("git-tag-lister"), &config, &mut gateway, &runner, &FixedClock(0.0));
    assert_eq!(outcome.status, PipelineStatus::BudgetExhausted);
    assert_eq!(outcome.stop_reason, Some(StopReason::TokenBudget));
    assert!(outcome.attempts.len() < 30);
}

#[test]
fn time_budget_stops_before_generation() {
    let dir = tempfile::tempdir().unwrap();
    let mut gateway = Gateway::replay_file(&transcript_path("asset-reader")).unwrap();
    let runner = ScriptedRunner::new(|_, _| ExecutionReport::default());
    let outcome = run_pipeline(&load_report("asset-reader"), &config("asset-reader", dir.path()), &mut gateway, &runner, &FixedClock(4000.0));
    assert_eq!(outcome.status, PipelineStatus::BudgetExhausted);
    assert_eq!(outcome.stop_reason, Some(StopReason::TimeBudget));
    assert!(outcome.attempts.is_empty());
    assert_eq!(outcome.elapsed_seconds, 4000.0);
}

#[test]
fn corpus_run_isolates_failures_and_keeps_order() {
    let mut reports: Vec<_> = FIXTURES.iter().map(|n| load_report(n)).collect();
    let mut broken = load_report("asset-reader");
    broken.id = "GHSA-broken".into();
    reports.insert(2, broken);
    let mut ghost = load_report("name-check");
    ghost.id = "GHSA-panics".into();
    reports.push(ghost);

    let root = tempfile::tempdir().unwrap();
    let run = |jobs| {
        run_corpus(&reports, jobs, |report| {
            if report.id == "GHSA-panics" {
                panic!("harness exploded");
            }
            if report.id == "GHSA-broken" {
                return Err("no transcript".into());
            }
            let name = report.package_name.as_str();
            let workdir = root.path().join(format!("{jobs}-{name}"));
            Ok(PipelineEnv {
                config: config(name, &workdir),
                gateway: Gateway::replay_file(&transcript_path(name)).map_err(|e| e.to_string())?,
                runner: Box::new(pocgen_core::sandbox::ReplayRunner::from_file(&executions_path(name)).map_err(|e| e.to_string())?),
                clock: Box::new(FixedClock(0.0)),
            })
        })
    };
    let outcomes = run(4);
    let ids: Vec<&str> = outcomes.iter().map(|o| o.report_id.as_str()).collect();
    let expected: Vec<&str> = reports.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, expected);
    assert_eq!(outcomes[2].status, PipelineStatus::Failed);
    assert_eq!(outcomes[2].error.as_deref(), Some("no transcript"));
    assert!(outcomes[6].error.as_deref().unwrap().contains("harness exploded"));
    let summary = summarize(&outcomes);
    assert_eq!(summary.reports, 7);
    assert_eq!(summary.by_status[&PipelineStatus::ExploitGenerated], 5);
    assert_eq!(summary.by_status[&PipelineStatus::Failed], 2);

    let a = root.path().join("a.jsonl");
    let b = root.path().join("b.jsonl");
    write_ledger(&a, &outcomes).unwrap();
    write_ledger(&b, &run(1)).unwrap();
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn empty_corpus_gives_empty_ledger() {
    let outcomes = run_corpus(&[], 2, |_| -> Result<PipelineEnv, String> { unreachable!() });
    assert!(outcomes.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.jsonl");
    write_ledger(&path, &outcomes).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    let s = summarize(&outcomes);
    assert_eq!((s.reports, s.tokens_in, s.tokens_out), (0, 0, 0));
}
