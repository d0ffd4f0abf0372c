//! Per-class validation oracles over sandboxed execution reports.
//!
//! A verdict combines the runtime signal recorded by the harness, stack
//! attribution of that signal to the vulnerable function, and static
//! anti-cheat rules over the exploit text. The optional model confirmation
//! runs last and can only demote a valid verdict.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use pocgen_js::lexer::{tokenize, Token, TokenKind};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{ChatRequest, Gateway, GatewayError};
use crate::report_store::VulnClass;

/// Milliseconds a single regex or string operation must exceed.
pub const REDOS_THRESHOLD_MS: u64 = 1500;
pub const FLAG_FILE: &str = "flag.txt";
pub const SETEUID_MARKER: i64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsAccess {
    pub raw_path: String,
    #[serde(default)]
    pub normalized_path: String,
    #[serde(default)]
    pub operation: String,
    #[serde(default)]
    pub vuln_fn_on_stack: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpawnEvent {
    pub argv: Vec<String>,
    #[serde(default)]
    pub vuln_fn_on_stack: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentinelHit {
    pub marker_path: String,
    #[serde(default)]
    pub vuln_fn_on_stack: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeteuidCall {
    pub argument: i64,
    #[serde(default)]
    pub vuln_fn_on_stack: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegexSource {
    Regex,
    StringMethod,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegexEvent {
    pub duration_ms: u64,
    pub source: RegexSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub message: String,
    #[serde(default)]
    pub stack: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkValue {
    pub sink_kind: String,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    #[default]
    Clean,
    Crashed,
    TimedOut,
}

/// Everything the harness observed during one exploit run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionReport {
    pub fs_accesses: Vec<FsAccess>,
    pub spawned: Vec<SpawnEvent>,
    pub sentinel_hits: Vec<SentinelHit>,
    pub seteuid_calls: Vec<SeteuidCall>,
    pub proto_exploited_present: bool,
    pub regex_events: Vec<RegexEvent>,
    pub errors: Vec<ErrorRecord>,
    /// Package-relative file path to executed line numbers.
    pub coverage: BTreeMap<String, BTreeSet<u32>>,
    /// Debug expression text to its rendered runtime value.
    pub evaluated: BTreeMap<String, String>,
    pub sink_values: Vec<SinkValue>,
    pub exit: ExitStatus,
}

impl ExecutionReport {
    /// A report for a run that could not start at all.
    pub fn crashed(message: impl Into<String>) -> Self {
        Self {
            errors: vec![ErrorRecord {
                message: message.into(),
                stack: String::new(),
            }],
            exit: ExitStatus::Crashed,
            ..Self::default()
        }
    }

    /// Number of sink-level events of any class.
    pub fn sink_event_count(&self) -> usize {
        self.fs_accesses.len()
            + self.spawned.len()
            + self.sentinel_hits.len()
            + self.seteuid_calls.len()
            + self.regex_events.len()
            + self.sink_values.len()
            + usize::from(self.proto_exploited_present)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Valid,
    Invalid,
    ExecError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub reason: String,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        self.outcome == Outcome::Valid
    }

    pub fn check(&self, name: &str) -> Option<bool> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.passed)
    }
}

/// The observable effect an exploit of each class must produce.
pub fn trigger_goal(class: VulnClass) -> &'static str {
    match class {
        VulnClass::PathTraversal => "read the file `flag.txt` located in a directory above the current working directory",
        VulnClass::PrototypePollution => "add a property named `exploited` to `Object.prototype`",
        VulnClass::CommandInjection => "execute the command /usr/bin/genpoc",
        VulnClass::CodeInjection => "call the built-in function `process.seteuid` with parameter 42",
        VulnClass::ReDoS => "make a single regular expression or string operation take longer than 1,500 milliseconds",
    }
}

// ---------------------------------------------------------------------------
// paths

/// Lexical normalization of an absolute or relative slash-separated path:
/// resolves `.` and `..` without touching the file system. `..` at the root
/// stays at the root. A relative input stays relative.
pub fn normalize_path(path: &str) -> String {
    let absolute = path.starts_with('/');
    let mut parts: Vec<&str> = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                if parts.last().is_some_and(|p| *p != "..") {
                    parts.pop();
                } else if !absolute {
                    parts.push("..");
                }
            }
            s => parts.push(s),
        }
    }
    let joined = parts.join("/");
    if absolute {
        format!("/{joined}")
    } else if joined.is_empty() {
        ".".to_string()
    } else {
        joined
    }
}

/// Absolute normalized form of `raw` as seen from `cwd`.
pub fn resolve_against(cwd: &str, raw: &str) -> String {
    if raw.starts_with('/') {
        normalize_path(raw)
    } else {
        normalize_path(&format!("{}/{raw}", normalize_path(cwd)))
    }
}

fn parent_of(path: &str) -> Option<&str> {
    if path == "/" {
        return None;
    }
    match path.rfind('/') {
        Some(0) => Some("/"),
        Some(i) => Some(&path[..i]),
        None => None,
    }
}

/// True iff `anc` is a strict ancestor directory of `path`.
fn is_proper_ancestor(anc: &str, path: &str) -> bool {
    if anc == path {
        return false;
    }
    if anc == "/" {
        return path.starts_with('/') && path.len() > 1;
    }
    path.starts_with(anc) && path.as_bytes().get(anc.len()) == Some(&b'/')
}

/// A file named `flag.txt` whose directory lies strictly above `cwd`.
pub fn is_flag_above(cwd: &str, access: &FsAccess) -> bool {
    let resolved = if access.raw_path.is_empty() {
        normalize_path(&access.normalized_path)
    } else {
        resolve_against(cwd, &access.raw_path)
    };
    let name = resolved.rsplit('/').next().unwrap_or("");
    if name != FLAG_FILE {
        return false;
    }
    match parent_of(&resolved) {
        Some(parent) => is_proper_ancestor(parent, &normalize_path(cwd)),
        None => false,
    }
}

// ---------------------------------------------------------------------------
// anti-cheat

/// Token text of the exploit with comments dropped and string literal
/// contents blanked, except for literals used directly as a bracketed member
/// key. Tokens are separated by single spaces.
fn code_view(source: &str) -> String {
    match tokenize(source) {
        Ok(tokens) => {
            let mut out = String::new();
            push_tokens(source, &tokens, &mut out);
            out
        }
        Err(_) => source.to_string(),
    }
}

fn push_tokens(source: &str, tokens: &[Token], out: &mut String) {
    for (i, tok) in tokens.iter().enumerate() {
        match &tok.kind {
            TokenKind::Eof => continue,
            TokenKind::Str(value) => {
                let bracketed = i > 0
                    && tokens[i - 1].is_punct("[")
                    && tokens.get(i + 1).is_some_and(|t| t.is_punct("]"));
                if bracketed {
                    out.push('"');
                    out.push_str(value);
                    out.push('"');
                } else {
                    out.push_str("\"\"");
                }
            }
            TokenKind::Template(t) => {
                out.push('`');
                for expr in &t.exprs {
                    out.push(' ');
                    push_tokens(source, expr, out);
                }
                out.push('`');
            }
            _ => out.push_str(source.get(tok.start..tok.end).unwrap_or("")),
        }
        out.push(' ');
    }
}

static PROTO_CHEAT: LazyLock<Regex> = LazyLock::new(|| {
    let key = |name: &str| format!(r#"(?:\.\s*{name}|\[\s*["'`]{name}["'`]\s*\])"#);
    Regex::new(&format!(
        r"{}\s*{}\s*=(?:[^=]|$)",
        format!("(?:{}|{})", key("__proto__"), key("prototype")),
        key("exploited")
    ))
    .unwrap()
});

static SETEUID_CHEAT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bprocess\s*\.\s*seteuid\s*\(\s*42\s*\)").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AntiCheat {
    Ok,
    Violation(String),
}

/// Static rules rejecting exploits that fake the oracle's observable effect.
pub fn anticheat_static(class: VulnClass, exploit_source: &str) -> AntiCheat {
    let view = code_view(exploit_source);
    match class {
        VulnClass::PrototypePollution => match PROTO_CHEAT.find(&view) {
            Some(m) => AntiCheat::Violation(format!("direct prototype write `{}`", m.as_str().trim())),
            None => AntiCheat::Ok,
        },
        VulnClass::CodeInjection => match SETEUID_CHEAT.find(&view) {
            Some(_) => AntiCheat::Violation("direct call to process.seteuid(42)".into()),
            None => AntiCheat::Ok,
        },
        _ => AntiCheat::Ok,
    }
}

// ---------------------------------------------------------------------------
// verdicts

/// Stack attribution flags of the events that realize the class goal.
fn triggering_events(class: VulnClass, report: &ExecutionReport, cwd: &str) -> Vec<bool> {
    match class {
        VulnClass::PathTraversal => report
            .fs_accesses
            .iter()
            .filter(|a| is_flag_above(cwd, a))
            .map(|a| a.vuln_fn_on_stack)
            .collect(),
        VulnClass::CommandInjection => report.sentinel_hits.iter().map(|h| h.vuln_fn_on_stack).collect(),
        VulnClass::CodeInjection => report
            .seteuid_calls
            .iter()
            .filter(|c| c.argument == SETEUID_MARKER)
            .map(|c| c.vuln_fn_on_stack)
            .collect(),
        VulnClass::PrototypePollution => {
            if report.proto_exploited_present {
                vec![true]
            } else {
                vec![]
            }
        }
        VulnClass::ReDoS => report
            .regex_events
            .iter()
            .filter(|e| e.duration_ms > REDOS_THRESHOLD_MS)
            .map(|_| true)
            .collect(),
    }
}

fn stack_exempt(class: VulnClass) -> bool {
    matches!(class, VulnClass::PrototypePollution | VulnClass::ReDoS)
}

/// True iff every class-relevant triggering event was attributed to the
/// vulnerable function. Vacuously true without events.
pub fn stack_check(report: &ExecutionReport, class: VulnClass) -> bool {
    if stack_exempt(class) {
        return true;
    }
    let events: Vec<bool> = match class {
        VulnClass::PathTraversal => report.fs_accesses.iter().map(|a| a.vuln_fn_on_stack).collect(),
        VulnClass::CommandInjection => report
            .sentinel_hits
            .iter()
            .map(|h| h.vuln_fn_on_stack)
            .chain(report.spawned.iter().map(|s| s.vuln_fn_on_stack))
            .collect(),
        VulnClass::CodeInjection => report.seteuid_calls.iter().map(|c| c.vuln_fn_on_stack).collect(),
        VulnClass::PrototypePollution | VulnClass::ReDoS => unreachable!(),
    };
    events.into_iter().all(|b| b)
}

/// Runtime and static decision for one attempt. Pure.
///
/// For the stack-attributed classes the verdict needs at least one triggering
/// event raised with the vulnerable function on the stack; additional
/// off-stack events do not invalidate it.
pub fn validate(class: VulnClass, report: &ExecutionReport, exploit_source: &str, cwd: &str) -> Verdict {
    let events = triggering_events(class, report, cwd);
    let signal = !events.is_empty();
    let mut checks = vec![Check {
        name: "signal".into(),
        passed: signal,
    }];
    let stack_ok = if stack_exempt(class) {
        true
    } else {
        let ok = events.iter().any(|b| *b);
        checks.push(Check {
            name: "stack".into(),
            passed: ok,
        });
        ok
    };
    let cheat = anticheat_static(class, exploit_source);
    checks.push(Check {
        name: "anticheat".into(),
        passed: cheat == AntiCheat::Ok,
    });

    if signal && stack_ok {
        if let AntiCheat::Violation(why) = cheat {
            return Verdict {
                outcome: Outcome::Invalid,
                reason: format!("anti-cheat: {why}"),
                checks,
            };
        }
        return Verdict {
            outcome: Outcome::Valid,
            reason: format!("{} triggered", class.display_name()),
            checks,
        };
    }

    if report.exit == ExitStatus::Crashed {
        let first = report
            .errors
            .first()
            .map(|e| e.message.clone())
            .unwrap_or_else(|| "exploit crashed".into());
        return Verdict {
            outcome: Outcome::ExecError,
            reason: first,
            checks,
        };
    }

    let reason = if signal {
        "signal raised without the vulnerable function on the stack".to_string()
    } else if report.exit == ExitStatus::TimedOut {
        "timed out without a signal".to_string()
    } else {
        format!("no {} signal observed", class.display_name())
    };
    Verdict {
        outcome: Outcome::Invalid,
        reason,
        checks,
    }
}

static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

/// Earliest standalone yes/no in a model answer.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    YES_NO
        .captures(text)
        .map(|c| c[1].eq_ignore_ascii_case("yes"))
}

fn confirm_prompt(report_text: &str, exploit_source: &str) -> String {
    format!(
        "## Vulnerability Description:\n```\n{report_text}\n```\n## Exploit:\n```js\n{exploit_source}\n```\nDoes this exploit actually trigger the vulnerability described above through the vulnerable package? Answer with yes or no first, then explain briefly."
    )
}

/// Final model judgment. An empty exploit is rejected without a request; an
/// unusable answer after one retry is accepted.
pub fn llm_confirm(report_text: &str, exploit_source: &str, gateway: &mut Gateway) -> Result<bool, GatewayError> {
    if exploit_source.trim().is_empty() {
        return Ok(false);
    }
    let request = ChatRequest::user(confirm_prompt(report_text, exploit_source)).with_purpose("confirm");
    for _ in 0..2 {
        let response = gateway.chat(request.clone())?;
        if let Some(answer) = parse_yes_no(&response.text) {
            return Ok(answer);
        }
    }
    tracing::info!("confirmation answer unparseable twice; keeping runtime verdict");
    Ok(true)
}
