//! End-to-end exploit generation for one report, and corpus runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::explorer::{
    batch_candidates, enumerate_exports, install_package, rank_candidates, ExportedApi, PackageSource, DEFAULT_BATCH_SIZE,
};
use crate::llm::{ChatRequest, Gateway, GatewayError, TokenLimits};
use crate::prompt::{build_initial_prompt, shrink_prompt, ExploitCorpus, PromptBundle, PromptInputs, DEFAULT_PROMPT_TOKENS, SIMILAR_EXPLOITS};
use crate::refine::{
    apply_refiner, enforce_budgets, extract_exploit, initial_state, next_refiner, register_attempt, register_initial, register_skip,
    score_attempt, should_skip, AttemptRecord, BudgetCheck, BudgetLimits, RefineContext, RefinerKind, StopReason,
};
use crate::report_store::{classify, ClassificationError, ClassificationMethod, ClassifiedReport, VulnClass, VulnReport};
use crate::sandbox::{exploit_digest, HarnessError, HarnessRunner, RunContext, DEFAULT_TIMEOUT_MS};
use crate::snippets::{extract_doc_blocks, filter_and_summarize, mine_test_callsites};
use crate::taint::{build_code_model, find_taint_paths, hybrid_taint, render_taint_report, resolve_entry, CodeModel, TaintPath, Tier};
use crate::validator::{llm_confirm, trigger_goal, validate, Check, ExecutionReport, Outcome, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStatus {
    ExploitGenerated,
    Failed,
    InstallError,
    NoTaintPath,
    BudgetExhausted,
}

/// Analysis tier that produced the taint path used for generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaintSource {
    Strict,
    Extended,
    Hybrid,
}

/// One generation round as recorded in the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub iteration: u32,
    /// Refiner that produced the prompt; `None` for the initial prompt.
    pub refiner: Option<RefinerKind>,
    pub prompt_hash: String,
    pub exploit_sha256: String,
    pub outcome: Outcome,
    pub reason: String,
    pub new_errors: usize,
    pub covered_steps: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub report_id: String,
    pub package_name: String,
    pub status: PipelineStatus,
    pub vuln_class: Option<VulnClass>,
    pub classification: Option<ClassificationMethod>,
    pub target: Option<String>,
    pub taint_source: Option<TaintSource>,
    pub exploit_text: Option<String>,
    pub stop_reason: Option<StopReason>,
    pub error: Option<String>,
    pub attempts: Vec<AttemptSummary>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub elapsed_seconds: f64,
}

impl PipelineOutcome {
    fn new(report: &VulnReport) -> Self {
        Self {
            report_id: report.id.clone(),
            package_name: report.package_name.clone(),
            status: PipelineStatus::Failed,
            vuln_class: None,
            classification: None,
            target: None,
            taint_source: None,
            exploit_text: None,
            stop_reason: None,
            error: None,
            attempts: Vec::new(),
            tokens_in: 0,
            tokens_out: 0,
            elapsed_seconds: 0.0,
        }
    }
}

/// Seconds since the pipeline started.
pub trait Clock: Send + Sync {
    fn elapsed_secs(&self) -> f64;
}

pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn elapsed_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// A clock that never advances, for replay runs.
pub struct FixedClock(pub f64);

impl Clock for FixedClock {
    fn elapsed_secs(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Install location and sandbox directory of the exploit runs.
    pub workdir: PathBuf,
    pub package_source: PackageSource,
    /// Version to install; derived from the affected range when absent.
    pub package_version: Option<String>,
    pub limits: BudgetLimits,
    pub batch_size: usize,
    pub prompt_tokens: usize,
    pub timeout_ms: u64,
    pub corpus: Arc<ExploitCorpus>,
    /// Ask the model to confirm a runtime-valid exploit.
    pub confirm_with_llm: bool,
}

impl PipelineConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        Self {
            workdir: workdir.into(),
            package_source: PackageSource::Registry,
            package_version: None,
            limits: BudgetLimits::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            prompt_tokens: DEFAULT_PROMPT_TOKENS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            corpus: Arc::new(ExploitCorpus::new(Vec::new())),
            confirm_with_llm: true,
        }
    }
}

/// A concrete version inside `range`: the bound of `<=X`, `=X` or a bare
/// version. Other ranges give `None` and the registry's latest is used.
pub fn version_from_range(range: &str) -> Option<String> {
    let r = range.trim();
    let v = r.strip_prefix("<=").or_else(|| r.strip_prefix('=')).unwrap_or(r).trim();
    let plain = !v.is_empty() && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '+');
    (plain && v.starts_with(|c: char| c.is_ascii_digit())).then(|| v.to_string())
}

/// Why a run ended before a valid exploit.
struct Halt {
    status: PipelineStatus,
    error: Option<String>,
    stop: Option<StopReason>,
}

impl Halt {
    fn failed(msg: impl Into<String>) -> Self {
        Self {
            status: PipelineStatus::Failed,
            error: Some(msg.into()),
            stop: None,
        }
    }

    fn budget(reason: StopReason) -> Self {
        Self {
            status: PipelineStatus::BudgetExhausted,
            error: None,
            stop: Some(reason),
        }
    }
}

impl From<GatewayError> for Halt {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Budget { .. } => Halt::budget(StopReason::TokenBudget),
            other => Halt::failed(other.to_string()),
        }
    }
}

impl From<ClassificationError> for Halt {
    fn from(e: ClassificationError) -> Self {
        match e {
            ClassificationError::Gateway(g) => g.into(),
            other => Halt::failed(other.to_string()),
        }
    }
}

struct Run<'a> {
    config: &'a PipelineConfig,
    gateway: &'a mut Gateway,
    runner: &'a dyn HarnessRunner,
    clock: &'a dyn Clock,
    outcome: PipelineOutcome,
}

/// Everything fixed once the taint path is chosen.
struct Target {
    classified: ClassifiedReport,
    model: CodeModel,
    path: TaintPath,
    run: RunContext,
}

/// Runs the whole pipeline for one report. Every failure ends up in the
/// returned outcome.
pub fn run_pipeline(
    report: &VulnReport,
    config: &PipelineConfig,
    gateway: &mut Gateway,
    runner: &dyn HarnessRunner,
    clock: &dyn Clock,
) -> PipelineOutcome {
    let mut run = Run {
        config,
        gateway,
        runner,
        clock,
        outcome: PipelineOutcome::new(report),
    };
    run.gateway.set_limits(TokenLimits {
        max_tokens_in: config.limits.max_tokens_in,
        max_tokens_out: config.limits.max_tokens_out,
    });
    let result = run.execute(report);
    let mut outcome = run.outcome;
    match result {
        Ok(exploit) => {
            outcome.status = PipelineStatus::ExploitGenerated;
            outcome.exploit_text = Some(exploit);
        }
        Err(h) => {
            outcome.status = h.status;
            outcome.error = h.error;
            outcome.stop_reason = h.stop;
        }
    }
    let usage = run.gateway.usage();
    outcome.tokens_in = usage.tokens_in;
    outcome.tokens_out = usage.tokens_out;
    outcome.elapsed_seconds = run.clock.elapsed_secs();
    tracing::info!(report = %outcome.report_id, status = ?outcome.status, attempts = outcome.attempts.len(), "pipeline finished");
    outcome
}

impl Run<'_> {
    fn execute(&mut self, report: &VulnReport) -> Result<String, Halt> {
        let classified = classify(report, self.gateway)?;
        self.outcome.vuln_class = Some(classified.vuln_class);
        self.outcome.classification = Some(classified.method);
        self.gateway.set_class(classified.vuln_class);

        let version = match &self.config.package_source {
            PackageSource::LocalDir(_) => self.config.package_version.clone().unwrap_or_default(),
            PackageSource::Registry => self
                .config
                .package_version
                .clone()
                .or_else(|| version_from_range(&report.affected_range))
                .unwrap_or_default(),
        };
        let package_dir = install_package(&report.package_name, &version, &self.config.workdir, &self.config.package_source).map_err(|e| Halt {
            status: PipelineStatus::InstallError,
            error: Some(e.to_string()),
            stop: None,
        })?;
        let model = build_code_model(&package_dir).map_err(|e| Halt::failed(e.to_string()))?;
        let enumeration = enumerate_exports(&package_dir, &model, self.runner);
        if enumeration.apis.is_empty() {
            return Err(Halt {
                status: PipelineStatus::NoTaintPath,
                error: Some(enumeration.load_error.unwrap_or_else(|| "package exports no functions".into())),
                stop: None,
            });
        }
        let ranking = rank_candidates(report, &enumeration.apis, self.gateway)?;
        let (path, source) = self.find_path(&classified, &model, &batch_candidates(&ranking, self.config.batch_size))?;
        self.outcome.taint_source = Some(source);
        self.outcome.target = Some(path.entry.access_path.clone());
        let run = self.run_context(&report.package_name, &path.entry, classified.vuln_class);
        let target = Target {
            classified,
            model,
            path,
            run,
        };
        let base = self.initial_prompt(&target, &package_dir)?;
        self.refinement_loop(&target, base)
    }

    fn run_context(&self, package_name: &str, api: &ExportedApi, class: VulnClass) -> RunContext {
        RunContext {
            sandbox_dir: self.config.workdir.clone(),
            package_name: package_name.to_string(),
            target_access_path: api.access_path.clone(),
            vuln_class: class,
            debug_expressions: Vec::new(),
            timeout_ms: self.config.timeout_ms,
        }
    }

    /// Strict, then Extended, then the probe-guided tier, batch by batch.
    fn find_path(&mut self, classified: &ClassifiedReport, model: &CodeModel, batches: &[Vec<ExportedApi>]) -> Result<(TaintPath, TaintSource), Halt> {
        let class = classified.vuln_class;
        for batch in batches {
            for (tier, source) in [(Tier::Strict, TaintSource::Strict), (Tier::Extended, TaintSource::Extended)] {
                if let Some(p) = find_taint_paths(model, batch, class, tier).into_iter().next() {
                    return Ok((p, source));
                }
            }
            if let Some(p) = self.probe(classified, model, &batch[0])? {
                return Ok((p, TaintSource::Hybrid));
            }
        }
        Err(Halt {
            status: PipelineStatus::NoTaintPath,
            error: None,
            stop: None,
        })
    }

    /// One generation round without a taint path, executed to collect
    /// coverage for the hybrid tier.
    fn probe(&mut self, classified: &ClassifiedReport, model: &CodeModel, entry: &ExportedApi) -> Result<Option<TaintPath>, Halt> {
        let source = resolve_entry(model, entry)
            .map(|f| {
                let info = &model.functions[f];
                let file = model.file_of(info);
                let body: Vec<&str> = (info.start_line..=info.end_line).map(|n| file.line(n)).collect();
                format!("Function located in {}/{}:\n```js\n{}\n```", model.package_name, file.path, body.join("\n"))
            })
            .unwrap_or_else(|| "No source is available for this function.".into());
        let bundle = build_initial_prompt(
            PromptInputs {
                classified,
                target: entry,
                taint_text: &source,
                snippets: &[],
                similar: &[],
                trigger_goal: trigger_goal(classified.vuln_class),
            },
            self.config.prompt_tokens,
        );
        let answer = self.gateway.chat(ChatRequest::user(bundle.text()).with_purpose("probe"))?;
        let Some(exploit) = extract_exploit(&answer.text) else { return Ok(None) };
        let ctx = self.run_context(&classified.report.package_name, entry, classified.vuln_class);
        let runner = self.runner;
        let mut exec = |code: &str| runner.run(&ctx, code).unwrap_or_else(|e| ExecutionReport::crashed(e.to_string()));
        let hybrid = hybrid_taint(entry, &exploit, &mut exec, model, classified.vuln_class);
        if let Some(e) = hybrid.error {
            tracing::info!(entry = %entry.access_path, error = %e, "probe produced no coverage");
        }
        Ok(hybrid.paths.into_iter().next())
    }

    fn initial_prompt(&mut self, t: &Target, package_dir: &Path) -> Result<PromptBundle, Halt> {
        let report = &t.classified.report;
        let mut snippets = mine_test_callsites(&t.model, &t.path.entry);
        let blocks = extract_doc_blocks(package_dir);
        snippets.extend(filter_and_summarize(&blocks, &report.package_name, &t.path.entry, self.gateway)?);
        let similar = if self.config.corpus.entries.is_empty() {
            Vec::new()
        } else {
            self.config.corpus.similar(report, SIMILAR_EXPLOITS)
        };
        let taint_text = render_taint_report(&t.path, &t.model);
        Ok(build_initial_prompt(
            PromptInputs {
                classified: &t.classified,
                target: &t.path.entry,
                taint_text: &taint_text,
                snippets: &snippets,
                similar: &similar,
                trigger_goal: trigger_goal(t.classified.vuln_class),
            },
            self.config.prompt_tokens,
        ))
    }

    fn check_budget(&self, iteration: u32) -> Result<(), Halt> {
        let usage = self.gateway.usage();
        match enforce_budgets(self.clock.elapsed_secs(), usage.tokens_in, usage.tokens_out, iteration, &self.config.limits) {
            BudgetCheck::Continue => Ok(()),
            BudgetCheck::Stop(reason) => Err(Halt::budget(reason)),
        }
    }

    fn refinement_loop(&mut self, t: &Target, mut base: PromptBundle) -> Result<String, Halt> {
        let class = t.classified.vuln_class;
        let mut state = initial_state(class);
        self.check_budget(state.iteration)?;
        let mut last = self.attempt(t, &base, None)?;
        register_initial(&mut state, &base.content_hash);
        self.record(&state, None, &last, score_attempt(None, &last, &t.path));
        loop {
            if last.verdict.is_valid() {
                return Ok(last.exploit_text);
            }
            self.check_budget(state.iteration)?;
            base = shrink_prompt(&base, &t.classified.report.package_name, &t.path.entry, class, &last.exploit_text, &last.execution);
            let ctx = RefineContext {
                model: &t.model,
                path: &t.path,
                target: &t.path.entry,
                class,
                runner: self.runner,
                run: &t.run,
            };
            let mut skips = 0;
            let (kind, bundle) = loop {
                let Some(kind) = next_refiner(&mut state) else {
                    return Err(Halt::failed("refiner queue is empty"));
                };
                let bundle = apply_refiner(kind, &ctx, &last, &base, self.gateway)?;
                if should_skip(&state, &bundle) {
                    register_skip(&mut state, kind);
                    skips += 1;
                    if skips >= state.queue.len() {
                        return Err(Halt::failed("every refiner reproduced an earlier prompt"));
                    }
                    continue;
                }
                break (kind, bundle);
            };
            let current = self.attempt(t, &bundle, Some(&last))?;
            let score = score_attempt(Some(&last), &current, &t.path);
            register_attempt(&mut state, kind, score, &bundle.content_hash);
            self.record(&state, Some(kind), &current, score);
            last = current;
        }
    }

    fn record(&mut self, state: &crate::refine::RefinerState, refiner: Option<RefinerKind>, a: &AttemptRecord, score: f64) {
        self.outcome.attempts.push(AttemptSummary {
            iteration: state.iteration,
            refiner,
            prompt_hash: a.prompt_hash.clone(),
            exploit_sha256: exploit_digest(&a.exploit_text),
            outcome: a.verdict.outcome,
            reason: a.verdict.reason.clone(),
            new_errors: a.new_errors,
            covered_steps: a.covered_steps,
            score,
        });
    }

    /// Generate, execute and validate once.
    fn attempt(&mut self, t: &Target, bundle: &PromptBundle, prev: Option<&AttemptRecord>) -> Result<AttemptRecord, Halt> {
        let class = t.classified.vuln_class;
        let answer = self.gateway.chat(ChatRequest::user(bundle.text()).with_purpose("generate"))?;
        let exploit = extract_exploit(&answer.text).unwrap_or_default();
        let report = if exploit.is_empty() {
            ExecutionReport::crashed("the answer contained no exploit code")
        } else {
            match self.runner.run(&t.run, &exploit) {
                Ok(r) => r,
                Err(e @ (HarnessError::Unavailable | HarnessError::Spawn(_) | HarnessError::ReplayMiss)) => {
                    return Err(Halt::failed(format!("exploit execution: {e}")))
                }
                Err(e) => ExecutionReport::crashed(e.to_string()),
            }
        };
        let cwd = t.run.sandbox_dir.to_string_lossy().replace('\\', "/");
        let mut verdict = validate(class, &report, &exploit, &cwd);
        if verdict.is_valid() && self.config.confirm_with_llm {
            let confirmed = llm_confirm(&t.classified.report.description(), &exploit, self.gateway)?;
            verdict.checks.push(Check {
                name: "llm_confirm".into(),
                passed: confirmed,
            });
            if !confirmed {
                verdict = Verdict {
                    outcome: Outcome::Invalid,
                    reason: "the model judged that the exploit does not trigger the reported vulnerability".into(),
                    checks: verdict.checks,
                };
            }
        }
        Ok(AttemptRecord::new(prev, bundle.content_hash.clone(), exploit, report, verdict, &t.path))
    }
}

// ---------------------------------------------------------------------------
// corpus runs

/// Per-report resources of a corpus run.
pub struct PipelineEnv {
    pub config: PipelineConfig,
    pub gateway: Gateway,
    pub runner: Box<dyn HarnessRunner>,
    pub clock: Box<dyn Clock>,
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs every report on up to `jobs` threads. A report whose setup fails or
/// whose pipeline panics gets a `Failed` outcome; the others are unaffected.
/// Outcomes are in input order.
pub fn run_corpus<F>(reports: &[VulnReport], jobs: usize, make_env: F) -> Vec<PipelineOutcome>
where
    F: Fn(&VulnReport) -> Result<PipelineEnv, String> + Sync,
{
    let one = |report: &VulnReport| {
        let result = catch_unwind(AssertUnwindSafe(|| {
            let mut env = make_env(report)?;
            Ok::<_, String>(run_pipeline(report, &env.config, &mut env.gateway, env.runner.as_ref(), env.clock.as_ref()))
        }));
        let error = match result {
            Ok(Ok(outcome)) => return outcome,
            Ok(Err(e)) => e,
            Err(p) => format!("pipeline panicked: {}", panic_message(p.as_ref())),
        };
        let mut outcome = PipelineOutcome::new(report);
        outcome.error = Some(error);
        outcome
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| reports.par_iter().map(one).collect()),
        Err(e) => {
            tracing::warn!(error = %e, "thread pool unavailable; running sequentially");
            reports.iter().map(one).collect()
        }
    }
}

/// Writes one JSON line per outcome.
pub fn write_ledger(path: &Path, outcomes: &[PipelineOutcome]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for o in outcomes {
        serde_json::to_writer(&mut out, o)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub reports: usize,
    pub by_status: BTreeMap<PipelineStatus, usize>,
    pub mean_attempts: f64,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

pub fn summarize(outcomes: &[PipelineOutcome]) -> CorpusSummary {
    let mut by_status = BTreeMap::new();
    for o in outcomes {
        *by_status.entry(o.status).or_insert(0) += 1;
    }
    let attempts: usize = outcomes.iter().map(|o| o.attempts.len()).sum();
    CorpusSummary {
        reports: outcomes.len(),
        by_status,
        mean_attempts: if outcomes.is_empty() { 0.0 } else { attempts as f64 / outcomes.len() as f64 },
        tokens_in: outcomes.iter().map(|o| o.tokens_in).sum(),
        tokens_out: outcomes.iter().map(|o| o.tokens_out).sum(),
    }
}
