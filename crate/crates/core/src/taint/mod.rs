//! Source-to-sink taint paths for candidate functions.
//!
//! The built-in analysis is flow-insensitive inside a function and
//! context-insensitive across calls. Two tiers share one search: Strict
//! follows conservative propagation rules into a short sink list, Extended
//! adds property reads, concatenation, `JSON.parse` and key iteration.

pub mod external;
mod flow;
pub mod model;
pub mod render;
mod search;
pub mod sinks;

use serde::{Deserialize, Serialize};

use crate::explorer::{ApiKind, ExportedApi};
use crate::report_store::VulnClass;
use crate::validator::{ExecutionReport, ExitStatus};

pub use external::{ExternalAnalyzer, ExternalError};
pub use model::{build_code_model, CodeModel, FunctionInfo, ModelError};
pub use render::{marked_lines, merge_windows, render_annotated, render_taint_report, CONTEXT_LINES};
pub use search::{MAX_CALL_DEPTH, MAX_PATHS_PER_ENTRY};
pub use sinks::{sink_spec, Rule, SinkSpec, Tier};

use search::{RawPath, Searcher};

/// Why a step follows the one before it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Justification {
    /// Parameter of the entry function.
    Source,
    /// Intra-procedural propagation.
    Rule { rule: Rule },
    /// The symbol is used inside a callback created at this line.
    Capture,
    /// The symbol flows into an argument of a call into the package.
    CallArg { callee: String, rule: Rule },
    /// Parameter of the called function.
    Param { callee: String },
    /// The symbol reaches a sink.
    Sink { sink: String },
    /// Produced by an external analyzer; not replayable.
    #[default]
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaintStep {
    pub file: String,
    pub line: u32,
    /// The source line verbatim.
    pub snippet: String,
    /// Symbol carrying the taint when this line is reached.
    pub tainted_symbol: String,
    #[serde(default)]
    pub justification: Justification,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaintPath {
    pub entry: ExportedApi,
    pub vuln_class: VulnClass,
    pub steps: Vec<TaintStep>,
    pub sink_kind: String,
}

impl TaintPath {
    /// `(file, line)` of every step, in order.
    pub fn locations(&self) -> Vec<(&str, u32)> {
        self.steps.iter().map(|s| (s.file.as_str(), s.line)).collect()
    }

    fn order_key(&self) -> (usize, Vec<(String, u32, String)>) {
        (
            self.steps.len(),
            self.steps
                .iter()
                .map(|s| (s.file.clone(), s.line, s.tainted_symbol.clone()))
                .collect(),
        )
    }
}

/// Model function an exported API refers to.
pub fn resolve_entry(model: &CodeModel, api: &ExportedApi) -> Option<usize> {
    if let Some(loc) = &api.source_loc {
        let hit = model.functions.iter().find(|f| {
            f.start_line == loc.start_line && path_matches(&model.files[f.file].path, &loc.file)
        });
        if let Some(f) = hit {
            return Some(f.id);
        }
    }
    let chain = api.member_chain();
    if chain.is_empty() {
        return model
            .functions
            .iter()
            .find(|f| f.export_names.iter().any(|e| e == "module.exports"))
            .map(|f| f.id);
    }
    let name = api.terminal_name();
    let exported = model.functions.iter().find(|f| {
        f.export_names.iter().any(|e| {
            e.strip_prefix("module.exports.")
                .or_else(|| e.strip_prefix("exports."))
                .is_some_and(|rest| rest == chain.join("."))
        })
    });
    if let Some(f) = exported {
        if api.kind != ApiKind::Constructor || f.kind == ApiKind::Constructor {
            return Some(f.id);
        }
    }
    let by_kind = |f: &&FunctionInfo| match api.kind {
        ApiKind::Constructor => {
            (f.kind == ApiKind::Constructor && f.class_name.as_deref() == Some(name))
                || (f.kind != ApiKind::Constructor && f.name == name)
        }
        _ => f.name == name && f.kind != ApiKind::Constructor,
    };
    // Prefer a function whose class or owner matches the parent segment.
    let parent = chain.iter().rev().filter(|s| **s != "prototype").nth(1).copied();
    let candidates: Vec<&FunctionInfo> = model.functions.iter().filter(by_kind).collect();
    candidates
        .iter()
        .find(|f| parent.is_some() && (f.class_name.as_deref() == parent || f.owner.as_deref() == parent))
        .or_else(|| candidates.first())
        .map(|f| f.id)
}

/// Whether a model path and an externally reported path name the same file.
pub fn path_matches(model_path: &str, other: &str) -> bool {
    let other = other.replace('\\', "/");
    other == model_path || other.ends_with(&format!("/{model_path}"))
}

fn attach(entry: &ExportedApi, class: VulnClass, raw: RawPath) -> TaintPath {
    TaintPath {
        entry: entry.clone(),
        vuln_class: class,
        steps: raw.steps,
        sink_kind: raw.sink_kind,
    }
}

fn paths_for(model: &CodeModel, func: usize, entry: &ExportedApi, class: VulnClass, tier: Tier) -> Vec<TaintPath> {
    let strict_spec = sink_spec(class, Tier::Strict);
    let strict: Vec<TaintPath> = Searcher::new(model, &strict_spec)
        .paths_from(func)
        .into_iter()
        .map(|r| attach(entry, class, r))
        .collect();
    if tier == Tier::Strict {
        return strict;
    }
    let ext_spec = sink_spec(class, Tier::Extended);
    let mut out = strict;
    for p in Searcher::new(model, &ext_spec).paths_from(func) {
        if out.len() >= MAX_PATHS_PER_ENTRY {
            break;
        }
        let p = attach(entry, class, p);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out.sort_by_cached_key(TaintPath::order_key);
    out
}

/// Taint paths from the parameters of each entry in `batch`, at most
/// [`MAX_PATHS_PER_ENTRY`] per entry, shortest first. Every Strict path for
/// an entry is also returned by Extended.
pub fn find_taint_paths(model: &CodeModel, batch: &[ExportedApi], class: VulnClass, tier: Tier) -> Vec<TaintPath> {
    let mut out = Vec::new();
    for api in batch {
        let Some(func) = resolve_entry(model, api) else {
            tracing::debug!(api = %api.access_path, "entry not found in code model");
            continue;
        };
        out.extend(paths_for(model, func, api, class, tier));
    }
    out
}

/// Replays the justification records of `path` against the model and the
/// sink set it was produced under.
pub fn check_path(model: &CodeModel, spec: &SinkSpec, path: &TaintPath) -> Result<(), String> {
    let first = path.steps.first().ok_or("empty path")?;
    let last = path.steps.last().ok_or("empty path")?;
    // A source can only collapse with a fact on the signature line.
    if matches!(
        first.justification,
        Justification::Param { .. } | Justification::External
    ) {
        return Err("first step is not a source".into());
    }
    let entry = resolve_entry(model, &path.entry).ok_or("entry does not resolve")?;
    let mut func = &model.functions[entry];
    if first.line != func.start_line || !path_matches(&model.files[func.file].path, &first.file) {
        return Err(format!("first step {}:{} is not the entry signature", first.file, first.line));
    }
    match &last.justification {
        Justification::Sink { sink } if *sink == path.sink_kind => {}
        _ => return Err("last step does not reach the recorded sink".into()),
    }
    if spec.pattern_by_label(&path.sink_kind).is_none() {
        return Err(format!("sink {} not in the active sink set", path.sink_kind));
    }
    for (i, step) in path.steps.iter().enumerate() {
        let (_, file) = model.file(&step.file).ok_or_else(|| format!("unknown file {}", step.file))?;
        if file.line(step.line) != step.snippet {
            return Err(format!("snippet mismatch at {}:{}", step.file, step.line));
        }
        if i == 0 {
            continue;
        }
        let facts = &model.facts[func.id];
        let in_func = func.contains_line(step.line) && model.files[func.file].path == step.file;
        let ok = match &step.justification {
            Justification::Source | Justification::External => false,
            Justification::Rule { rule } => {
                in_func && spec.allows(*rule) && facts.bindings.iter().any(|b| b.line == step.line)
            }
            Justification::Capture => {
                in_func
                    && facts
                        .bindings
                        .iter()
                        .map(|b| &b.scope)
                        .chain(facts.calls.iter().map(|c| &c.scope))
                        .chain(facts.writes.iter().map(|w| &w.scope))
                        .any(|s| s.contains(&step.line))
            }
            Justification::CallArg { callee, rule } => {
                in_func
                    && spec.allows(Rule::CallArgToParam)
                    && (*rule == Rule::Assignment || spec.allows(*rule))
                    && facts
                        .calls
                        .iter()
                        .any(|c| c.line == step.line && c.name.as_deref() == Some(callee.as_str()))
                    && matches!(path.steps.get(i + 1).map(|s| &s.justification), Some(Justification::Param { .. }))
            }
            Justification::Param { callee } => {
                let target = model.functions.iter().find(|f| {
                    model.files[f.file].path == step.file
                        && f.start_line == step.line
                        && (f.name == *callee || f.class_name.as_deref() == Some(callee.as_str()))
                });
                match target {
                    Some(t) if t.param_names.iter().flatten().any(|n| *n == step.tainted_symbol) => {
                        func = t;
                        true
                    }
                    _ => false,
                }
            }
            Justification::Sink { sink } => {
                in_func
                    && i == path.steps.len() - 1
                    && (facts.calls.iter().any(|c| c.line == step.line)
                        || facts.writes.iter().any(|w| w.line == step.line))
                    && spec
                        .pattern_by_label(sink)
                        .and_then(|p| p.callee())
                        .is_none_or(|n| step.snippet.contains(n))
            }
        };
        if !ok {
            return Err(format!(
                "step {} at {}:{} ({:?}) is not justified",
                i, step.file, step.line, step.justification
            ));
        }
    }
    Ok(())
}

/// Result of the coverage-guided tier.
#[derive(Debug, Clone, Default)]
pub struct HybridOutcome {
    pub paths: Vec<TaintPath>,
    /// Covered functions, by id, in model order.
    pub covered: Vec<usize>,
    pub error: Option<String>,
    pub report: Option<ExecutionReport>,
}

/// Functions whose bodies executed according to `report`.
pub fn covered_functions(model: &CodeModel, report: &ExecutionReport) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (path, lines) in &report.coverage {
        for (file_idx, file) in model.files.iter().enumerate() {
            if !path_matches(&file.path, path) {
                continue;
            }
            for &line in lines {
                if let Some(f) = model.function_at(file_idx, line) {
                    if !out.contains(&f.id) {
                        out.push(f.id);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Runs the probe exploit and searches from the parameters of every
/// function it covered, using the Extended tier.
pub fn hybrid_taint(
    entry: &ExportedApi,
    probe_exploit: &str,
    run: &mut dyn FnMut(&str) -> ExecutionReport,
    model: &CodeModel,
    class: VulnClass,
) -> HybridOutcome {
    let report = run(probe_exploit);
    if report.exit == ExitStatus::Crashed && report.coverage.values().all(|l| l.is_empty()) {
        let msg = report
            .errors
            .first()
            .map(|e| e.message.clone())
            .unwrap_or_else(|| "probe crashed".into());
        return HybridOutcome {
            error: Some(msg),
            report: Some(report),
            ..Default::default()
        };
    }
    let covered = covered_functions(model, &report);
    let entry_fn = resolve_entry(model, entry);
    let mut paths = Vec::new();
    for &f in &covered {
        let api = if entry_fn == Some(f) {
            entry.clone()
        } else {
            let info = &model.functions[f];
            let segs = match info.kind {
                ApiKind::Method => format!(
                    "root.{}.prototype.{}",
                    info.class_name.as_deref().unwrap_or(""),
                    info.name
                ),
                ApiKind::Constructor => format!("root.{}", info.class_name.as_deref().unwrap_or(&info.name)),
                ApiKind::Function => format!("root.{}", info.qualified_name()),
            };
            let mut api = ExportedApi::new(&segs, info.kind, info.arity());
            api.source_loc = Some(crate::explorer::SourceLoc {
                file: model.files[info.file].path.clone(),
                start_line: info.start_line,
                end_line: info.end_line,
            });
            api
        };
        for p in paths_for(model, f, &api, class, Tier::Extended) {
            if !paths.contains(&p) {
                paths.push(p);
            }
        }
    }
    paths.sort_by_cached_key(TaintPath::order_key);
    paths.truncate(MAX_PATHS_PER_ENTRY);
    HybridOutcome {
        paths,
        covered,
        error: None,
        report: Some(report),
    }
}
