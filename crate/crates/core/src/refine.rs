//! Prompt refinement: refiners, their priority queue, prompt deduplication
//! and budgets.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::explorer::ExportedApi;
use crate::llm::{ChatRequest, Gateway, GatewayError, ToolDeclaration};
use crate::prompt::{PromptBundle, SectionId};
use crate::report_store::VulnClass;
use crate::sandbox::{DebugExpression, HarnessRunner, RunContext};
use crate::taint::{path_matches, render_annotated, CodeModel, TaintPath, TaintStep};
use crate::validator::{trigger_goal, ExecutionReport, ExitStatus, Verdict};

/// Items accepted from one tool-call round.
pub const MAX_TOOL_ITEMS: usize = 10;
const MAX_ERRORS_SHOWN: usize = 5;
const MAX_STACK_LINES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinerKind {
    Body,
    MissingDecl,
    Error,
    Coverage,
    Debugger,
    SinkValues,
}

impl RefinerKind {
    pub const ALL: [RefinerKind; 6] = [
        RefinerKind::Body,
        RefinerKind::MissingDecl,
        RefinerKind::Error,
        RefinerKind::Coverage,
        RefinerKind::Debugger,
        RefinerKind::SinkValues,
    ];

    /// Sink-value hooks exist for file-system, process and code-evaluation sinks.
    pub fn applicable(self, class: VulnClass) -> bool {
        self != RefinerKind::SinkValues
            || matches!(
                class,
                VulnClass::PathTraversal | VulnClass::CommandInjection | VulnClass::CodeInjection
            )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub kind: RefinerKind,
    pub score: f64,
    pub counter: u64,
}

/// Refiner queue, prompt hashes already sent and generations so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinerState {
    pub queue: Vec<QueueEntry>,
    pub used_prompt_hashes: BTreeSet<String>,
    pub iteration: u32,
    next_counter: u64,
}

pub fn initial_state(class: VulnClass) -> RefinerState {
    let mut state = RefinerState {
        queue: Vec::new(),
        used_prompt_hashes: BTreeSet::new(),
        iteration: 0,
        next_counter: 0,
    };
    for kind in RefinerKind::ALL.into_iter().filter(|k| k.applicable(class)) {
        state.push(kind, 0.0);
    }
    state
}

impl RefinerState {
    fn push(&mut self, kind: RefinerKind, score: f64) {
        self.queue.push(QueueEntry {
            kind,
            score,
            counter: self.next_counter,
        });
        self.next_counter += 1;
    }

    /// Kinds currently queued, in no particular order.
    pub fn kinds(&self) -> Vec<RefinerKind> {
        self.queue.iter().map(|e| e.kind).collect()
    }
}

/// Pops the highest-scored refiner; equal scores go to the earliest
/// inserted. `None` when the queue is empty.
pub fn next_refiner(state: &mut RefinerState) -> Option<RefinerKind> {
    let best = state
        .queue
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.score.total_cmp(&b.score).then(b.counter.cmp(&a.counter)))
        .map(|(i, _)| i)?;
    Some(state.queue.remove(best).kind)
}

/// Books a generation from the initial prompt.
pub fn register_initial(state: &mut RefinerState, prompt_hash: &str) {
    state.used_prompt_hashes.insert(prompt_hash.to_string());
    state.iteration += 1;
}

/// Puts `kind` back with `score` after a generation from its prompt.
pub fn register_attempt(state: &mut RefinerState, kind: RefinerKind, score: f64, prompt_hash: &str) {
    state.push(kind, score);
    state.used_prompt_hashes.insert(prompt_hash.to_string());
    state.iteration += 1;
}

/// Puts `kind` back with score zero after its prompt was skipped as a
/// duplicate. Does not count as an iteration.
pub fn register_skip(state: &mut RefinerState, kind: RefinerKind) {
    state.push(kind, 0.0);
}

pub fn should_skip(state: &RefinerState, bundle: &PromptBundle) -> bool {
    state.used_prompt_hashes.contains(&bundle.content_hash)
}

// ---------------------------------------------------------------------------
// scoring

/// One generated exploit and what happened when it ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub prompt_hash: String,
    pub exploit_text: String,
    pub execution: ExecutionReport,
    pub verdict: Verdict,
    pub new_errors: usize,
    pub covered_steps: usize,
}

impl AttemptRecord {
    pub fn new(
        prev: Option<&AttemptRecord>,
        prompt_hash: String,
        exploit_text: String,
        execution: ExecutionReport,
        verdict: Verdict,
        path: &TaintPath,
    ) -> Self {
        let new_errors = new_error_count(prev.map(|p| &p.execution), &execution);
        let covered_steps = covered_step_count(path, &execution);
        Self {
            prompt_hash,
            exploit_text,
            execution,
            verdict,
            new_errors,
            covered_steps,
        }
    }
}

static ABS_PATH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:[A-Za-z]:)?(?:[\\/][\w.@+-]+)+").unwrap());
static LINE_COL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r":\d+(?::\d+)?\b|\b(?i:line) \d+").unwrap());

/// Error identity: the message with absolute paths and line numbers removed.
pub fn normalize_error(message: &str) -> String {
    let no_lines = LINE_COL.replace_all(message, "");
    let no_paths = ABS_PATH.replace_all(&no_lines, "<path>");
    no_paths.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn error_set(report: &ExecutionReport) -> BTreeSet<String> {
    report.errors.iter().map(|e| normalize_error(&e.message)).collect()
}

/// Distinct errors of `current` not seen in `prev`.
pub fn new_error_count(prev: Option<&ExecutionReport>, current: &ExecutionReport) -> usize {
    let now = error_set(current);
    match prev {
        None => now.len(),
        Some(p) => now.difference(&error_set(p)).count(),
    }
}

/// Taint-path steps whose line ran.
pub fn covered_step_count(path: &TaintPath, report: &ExecutionReport) -> usize {
    path.steps.iter().filter(|s| step_covered(s, report)).count()
}

fn step_covered(step: &TaintStep, report: &ExecutionReport) -> bool {
    report
        .coverage
        .iter()
        .any(|(file, lines)| path_matches(&step.file, file) && lines.contains(&step.line))
}

/// Priority of a refiner after its attempt: new errors plus covered steps.
pub fn score_attempt(prev: Option<&AttemptRecord>, current: &AttemptRecord, path: &TaintPath) -> f64 {
    (new_error_count(prev.map(|p| &p.execution), &current.execution) + covered_step_count(path, &current.execution)) as f64
}

// ---------------------------------------------------------------------------
// budgets

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetLimits {
    pub max_seconds: f64,
    pub max_tokens_in: u64,
    pub max_tokens_out: u64,
    pub max_refinements: u32,
}

impl Default for BudgetLimits {
    fn default() -> Self {
        Self {
            max_seconds: 3600.0,
            max_tokens_in: 300_000,
            max_tokens_out: 100_000,
            max_refinements: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TimeBudget,
    TokenBudget,
    MaxRefinements,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetCheck {
    Continue,
    Stop(StopReason),
}

pub fn enforce_budgets(elapsed_secs: f64, tokens_in: u64, tokens_out: u64, iteration: u32, limits: &BudgetLimits) -> BudgetCheck {
    if elapsed_secs > limits.max_seconds {
        BudgetCheck::Stop(StopReason::TimeBudget)
    } else if tokens_in > limits.max_tokens_in || tokens_out > limits.max_tokens_out {
        BudgetCheck::Stop(StopReason::TokenBudget)
    } else if iteration >= limits.max_refinements {
        BudgetCheck::Stop(StopReason::MaxRefinements)
    } else {
        BudgetCheck::Continue
    }
}

// ---------------------------------------------------------------------------
// exploit extraction

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z]*[^\n]*\n(.*?)```").unwrap());
static EXPLOIT_DEF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bfunction\s+exploit\s*\(|\bexploit\s*=\s*(?:async\s*)?(?:function\b|\()").unwrap());
static FN_EXPLOIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bfunction\s+exploit\s*\(").unwrap());
static EXPLOIT_CALL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bexploit\s*\(").unwrap());

/// The exploit code in a model answer: the first fenced block defining
/// `exploit`, else the longest fenced block. A missing top-level call of
/// `exploit` is appended.
pub fn extract_exploit(answer: &str) -> Option<String> {
    let blocks: Vec<&str> = FENCE.captures_iter(answer).map(|c| c.get(1).unwrap().as_str()).collect();
    let code = blocks
        .iter()
        .find(|b| EXPLOIT_DEF.is_match(b))
        .or_else(|| blocks.iter().max_by_key(|b| b.len()))?
        .trim_end();
    if code.trim().is_empty() {
        return None;
    }
    let mut code = code.to_string();
    let named_defs = FN_EXPLOIT.find_iter(&code).count();
    let calls = EXPLOIT_CALL.find_iter(&code).count() - named_defs;
    if EXPLOIT_DEF.is_match(&code) && calls == 0 {
        code.push_str("\nawait exploit();");
    }
    Some(code)
}

// ---------------------------------------------------------------------------
// refiners

/// Inputs a refiner may consult.
pub struct RefineContext<'a> {
    pub model: &'a CodeModel,
    pub path: &'a TaintPath,
    pub target: &'a ExportedApi,
    pub class: VulnClass,
    pub runner: &'a dyn HarnessRunner,
    pub run: &'a RunContext,
}

fn attempt_text(class: VulnClass, attempt: &AttemptRecord) -> String {
    format!(
        "## Previous attempt:\n```js\n{}\n```\nThis exploit did not {}. Reason: {}.",
        attempt.exploit_text.trim_end(),
        trigger_goal(class),
        attempt.verdict.reason
    )
}

fn with_addendum(base: &PromptBundle, class: VulnClass, attempt: &AttemptRecord, extra: Option<String>) -> PromptBundle {
    let mut text = attempt_text(class, attempt);
    if let Some(extra) = extra.filter(|e| !e.trim().is_empty()) {
        text.push('\n');
        text.push_str(&extra);
    }
    text.push_str("\nWrite an improved exploit following the task above.");
    let mut out = base.clone();
    out.set(SectionId::RefinerAddendum, text);
    out
}

fn source_section(path: &TaintPath, model: &CodeModel, note: &dyn Fn(&TaintStep) -> Option<String>) -> String {
    format!("## Source code:\n{}", render_annotated(path, model, note).trim_end())
}

/// Model functions owning at least one taint step, in path order.
fn owning_functions<'m>(model: &'m CodeModel, path: &TaintPath) -> Vec<&'m crate::taint::FunctionInfo> {
    let mut out: Vec<&crate::taint::FunctionInfo> = Vec::new();
    for s in &path.steps {
        let Some((idx, _)) = model.file(&s.file) else { continue };
        if let Some(f) = model.function_at(idx, s.line) {
            if !out.iter().any(|g| g.id == f.id) {
                out.push(f);
            }
        }
    }
    out
}

fn body_text(model: &CodeModel, path: &TaintPath) -> Option<String> {
    let funcs = owning_functions(model, path);
    if funcs.is_empty() {
        return None;
    }
    let mut out = String::from("## Full function bodies:");
    for f in funcs {
        let file = model.file_of(f);
        let body: Vec<&str> = (f.start_line..=f.end_line).map(|n| file.line(n)).collect();
        out.push_str(&format!(
            "\n`{}` in {}/{}:\n```js\n{}\n```",
            f.qualified_name(),
            model.package_name,
            file.path,
            body.join("\n")
        ));
    }
    Some(out)
}

fn error_text(report: &ExecutionReport) -> String {
    if report.errors.is_empty() {
        return match report.exit {
            ExitStatus::TimedOut => "## Errors:\nThe exploit timed out without throwing an error.".into(),
            _ => "## Errors:\nThe exploit finished without throwing an error.".into(),
        };
    }
    let mut out = String::from("## Errors thrown while running the exploit:");
    for e in report.errors.iter().take(MAX_ERRORS_SHOWN) {
        let stack: Vec<&str> = e.stack.lines().take(MAX_STACK_LINES).collect();
        out.push_str(&format!("\n```\n{}", e.message.trim_end()));
        if !stack.is_empty() {
            out.push('\n');
            out.push_str(&stack.join("\n"));
        }
        out.push_str("\n```");
    }
    out
}

fn sink_text(class: VulnClass, report: &ExecutionReport) -> String {
    let mut lines: Vec<String> = Vec::new();
    match class {
        VulnClass::PathTraversal => {
            for a in &report.fs_accesses {
                lines.push(format!("{} `{}` (resolves to `{}`)", a.operation, a.raw_path, a.normalized_path));
            }
        }
        VulnClass::CommandInjection => {
            for s in &report.spawned {
                lines.push(format!("spawn `{}`", s.argv.join(" ")));
            }
        }
        VulnClass::CodeInjection => {
            for c in &report.seteuid_calls {
                lines.push(format!("process.seteuid({})", c.argument));
            }
        }
        _ => {}
    }
    for v in &report.sink_values {
        lines.push(format!("{}: `{}`", v.sink_kind, v.value));
    }
    if lines.is_empty() {
        "## Values reaching the sinks:\nNo value reached a monitored sink.".into()
    } else {
        format!("## Values reaching the sinks:\n- {}", lines.join("\n- "))
    }
}

fn definitions_tool() -> ToolDeclaration {
    ToolDeclaration {
        name: "get_definitions".into(),
        description: "Returns the source definitions of identifiers used in the package code.".into(),
        parameters: json!({
            "type": "object",
            "properties": {"identifiers": {"type": "array", "items": {"type": "string"}}},
            "required": ["identifiers"]
        }),
    }
}

fn debugger_tool() -> ToolDeclaration {
    ToolDeclaration {
        name: "evaluate_expressions".into(),
        description: "Evaluates JavaScript expressions at lines of the taint path while the exploit runs.".into(),
        parameters: json!({
            "type": "object",
            "properties": {"expressions": {"type": "array", "items": {
                "type": "object",
                "properties": {"file": {"type": "string"}, "line": {"type": "integer"}, "expression": {"type": "string"}},
                "required": ["line", "expression"]
            }}},
            "required": ["expressions"]
        }),
    }
}

fn tool_args<'r>(response: &'r crate::llm::ChatResponse, tool: &str, field: &str) -> Vec<&'r Value> {
    response
        .tool_calls
        .iter()
        .filter(|c| c.name == tool)
        .filter_map(|c| c.arguments.get(field)?.as_array())
        .flatten()
        .collect()
}

fn declaration_regex(ident: &str) -> Regex {
    let id = regex::escape(ident);
    Regex::new(&format!(
        r"^\s*(?:export\s+)?(?:(?:const|let|var)\s+(?:{id}\b|[{{\[][^=]*\b{id}\b[^=]*[}}\]])\s*=|(?:async\s+)?function\s*\*?\s*{id}\s*\(|class\s+{id}\b)|^\s*(?:this\.|exports\.|module\.exports\.)?{id}\s*=[^=]"
    ))
    .expect("escaped identifier")
}

/// Source definition of `ident`: a whole function or class when the model
/// has one by that name, else the first declaring line.
pub fn definition_of(model: &CodeModel, ident: &str, prefer: &[&str]) -> Option<String> {
    let name = ident.trim().rsplit('.').next().unwrap_or("").trim_end_matches("()");
    if name.is_empty() {
        return None;
    }
    let mut files: Vec<&crate::taint::model::SourceFile> = model.files.iter().filter(|f| prefer.contains(&f.path.as_str())).collect();
    files.extend(model.files.iter().filter(|f| !prefer.contains(&f.path.as_str())));
    if let Some(f) = model.functions_named(name).next() {
        let file = model.file_of(f);
        let body: Vec<&str> = (f.start_line..=f.end_line).map(|n| file.line(n)).collect();
        return Some(format!("{}/{}:{}\n{}", model.package_name, file.path, f.start_line, body.join("\n")));
    }
    let re = declaration_regex(name);
    for file in files {
        for (i, line) in file.lines.iter().enumerate() {
            if re.is_match(line) {
                return Some(format!("{}/{}:{}\n{}", model.package_name, file.path, i + 1, line.trim()));
            }
        }
    }
    None
}

fn missing_decl(ctx: &RefineContext<'_>, base: &PromptBundle, attempt: &AttemptRecord, gateway: &mut Gateway) -> Result<Option<String>, GatewayError> {
    let question = format!(
        "{}\n{}\nBefore writing a new exploit, list the identifiers in the source code above whose definitions you need. Call `get_definitions` with at most {MAX_TOOL_ITEMS} identifiers.",
        base.text(),
        attempt_text(ctx.class, attempt)
    );
    let request = ChatRequest::user(question).with_purpose("missing_decl").with_tool(definitions_tool());
    let response = gateway.chat(request)?;
    let mut seen = BTreeSet::new();
    let idents: Vec<String> = tool_args(&response, "get_definitions", "identifiers")
        .into_iter()
        .filter_map(|v| v.as_str().map(str::trim).map(str::to_string))
        .filter(|s| !s.is_empty() && seen.insert(s.clone()))
        .take(MAX_TOOL_ITEMS)
        .collect();
    let prefer: Vec<&str> = ctx.path.steps.iter().map(|s| s.file.as_str()).collect();
    let found: Vec<String> = idents
        .iter()
        .filter_map(|id| definition_of(ctx.model, id, &prefer).map(|d| format!("`{id}` defined at {d}")))
        .collect();
    if found.is_empty() {
        return Ok(None);
    }
    let blocks: Vec<String> = found
        .into_iter()
        .map(|d| {
            let (head, body) = d.split_once('\n').unwrap_or((&d, ""));
            format!("{head}:\n```js\n{body}\n```")
        })
        .collect();
    Ok(Some(format!("## Requested definitions:\n{}", blocks.join("\n"))))
}

fn debugger(ctx: &RefineContext<'_>, base: &PromptBundle, attempt: &AttemptRecord, gateway: &mut Gateway) -> Result<Option<String>, GatewayError> {
    let question = format!(
        "{}\n{}\nBefore writing a new exploit, choose expressions whose runtime values at lines of the source code above would help. Call `evaluate_expressions` with at most {MAX_TOOL_ITEMS} items, each naming the file, line and expression.",
        base.text(),
        attempt_text(ctx.class, attempt)
    );
    let request = ChatRequest::user(question).with_purpose("debugger").with_tool(debugger_tool());
    let response = gateway.chat(request)?;
    let mut wanted: Vec<DebugExpression> = Vec::new();
    for item in tool_args(&response, "evaluate_expressions", "expressions") {
        let Some(line) = item.get("line").and_then(Value::as_u64) else { continue };
        let Some(expression) = item.get("expression").and_then(Value::as_str).map(str::trim) else { continue };
        let file = item.get("file").and_then(Value::as_str);
        let step = ctx.path.steps.iter().find(|s| {
            u64::from(s.line) == line && file.is_none_or(|f| path_matches(&s.file, f) || path_matches(f, &s.file))
        });
        let (Some(step), false) = (step, expression.is_empty()) else { continue };
        let d = DebugExpression {
            file: step.file.clone(),
            line: step.line,
            expression: expression.to_string(),
        };
        if !wanted.contains(&d) {
            wanted.push(d);
        }
        if wanted.len() == MAX_TOOL_ITEMS {
            break;
        }
    }
    if wanted.is_empty() {
        return Ok(None);
    }
    let mut run = ctx.run.clone();
    run.debug_expressions = wanted.clone();
    let report = match ctx.runner.run(&run, &attempt.exploit_text) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "debugger re-execution failed");
            return Ok(None);
        }
    };
    if report.evaluated.is_empty() {
        return Ok(None);
    }
    let note = |s: &TaintStep| {
        let values: Vec<String> = wanted
            .iter()
            .filter(|d| d.file == s.file && d.line == s.line)
            .filter_map(|d| report.evaluated.get(&d.expression).map(|v| format!("{} = {v}", d.expression)))
            .collect();
        (!values.is_empty()).then(|| values.join("; "))
    };
    Ok(Some(source_section(ctx.path, ctx.model, &note)))
}

/// The prompt for the next generation: `base` with the refiner's
/// contribution for the last attempt. Tool rounds that yield nothing
/// usable leave only the previous-attempt block.
pub fn apply_refiner(
    kind: RefinerKind,
    ctx: &RefineContext<'_>,
    attempt: &AttemptRecord,
    base: &PromptBundle,
    gateway: &mut Gateway,
) -> Result<PromptBundle, GatewayError> {
    let bundle = match kind {
        RefinerKind::Body => with_addendum(base, ctx.class, attempt, body_text(ctx.model, ctx.path)),
        RefinerKind::MissingDecl => {
            let extra = missing_decl(ctx, base, attempt, gateway)?;
            with_addendum(base, ctx.class, attempt, extra)
        }
        RefinerKind::Error => with_addendum(base, ctx.class, attempt, Some(error_text(&attempt.execution))),
        RefinerKind::Coverage => {
            let note = |s: &TaintStep| {
                Some(if step_covered(s, &attempt.execution) { "covered" } else { "not covered" }.to_string())
            };
            let mut out = with_addendum(base, ctx.class, attempt, None);
            out.set(SectionId::SourceCode, source_section(ctx.path, ctx.model, &note));
            out
        }
        RefinerKind::Debugger => {
            let section = debugger(ctx, base, attempt, gateway)?;
            let mut out = with_addendum(base, ctx.class, attempt, None);
            if let Some(section) = section {
                out.set(SectionId::SourceCode, section);
            }
            out
        }
        RefinerKind::SinkValues => with_addendum(base, ctx.class, attempt, Some(sink_text(ctx.class, &attempt.execution))),
    };
    Ok(bundle)
}
