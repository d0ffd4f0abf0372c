//! Sink and propagation rules per class and tier.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::report_store::VulnClass;

/// How taint moves from one symbol to another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Assignment,
    CallArgToParam,
    ReturnToCaller,
    PropertyRead,
    StringConcat,
    StringMethod,
    JsonParse,
    ObjectKeyIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Strict,
    Extended,
}

pub const STRICT_RULES: [Rule; 4] = [
    Rule::Assignment,
    Rule::CallArgToParam,
    Rule::ReturnToCaller,
    Rule::StringMethod,
];

pub const EXTENDED_ONLY_RULES: [Rule; 4] = [
    Rule::PropertyRead,
    Rule::StringConcat,
    Rule::JsonParse,
    Rule::ObjectKeyIteration,
];

/// Syntactic shape of a sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SinkForm {
    /// Plain or member call with this terminal name, not `new`.
    Call(&'static str),
    /// `new X(...)` only.
    New(&'static str),
    /// Either a call or a construction.
    CallOrNew(&'static str),
    /// Method call with this name; the receiver may carry the taint.
    Method(&'static str),
    /// Assignment through this many chained computed keys, e.g. 2 for
    /// `o[a][b] = v`. The taint must reach one of the keys.
    ComputedWrite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArgPos {
    Index(usize),
    Any,
    /// The receiver, or the argument at this index.
    ReceiverOrArg(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SinkPattern {
    pub form: SinkForm,
    pub arg: ArgPos,
}

impl SinkPattern {
    /// Text recorded as a path's `sink_kind`.
    pub fn label(&self) -> String {
        match self.form {
            SinkForm::Call(n) | SinkForm::CallOrNew(n) => format!("{n}()"),
            SinkForm::New(n) => format!("new {n}()"),
            SinkForm::Method(n) => format!(".{n}()"),
            SinkForm::ComputedWrite(1) => "obj[key] =".to_string(),
            SinkForm::ComputedWrite(_) => "obj[key][key] =".to_string(),
        }
    }

    /// Name that must appear on the sink line, if any.
    pub fn callee(&self) -> Option<&'static str> {
        match self.form {
            SinkForm::Call(n) | SinkForm::New(n) | SinkForm::CallOrNew(n) | SinkForm::Method(n) => Some(n),
            SinkForm::ComputedWrite(_) => None,
        }
    }
}

impl fmt::Display for SinkPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkSpec {
    pub vuln_class: VulnClass,
    pub tier: Tier,
    pub sink_patterns: Vec<SinkPattern>,
    pub propagation_rules: BTreeSet<Rule>,
}

impl SinkSpec {
    pub fn allows(&self, rule: Rule) -> bool {
        self.propagation_rules.contains(&rule)
    }

    pub fn pattern_by_label(&self, label: &str) -> Option<&SinkPattern> {
        self.sink_patterns.iter().find(|p| p.label() == label)
    }
}

const FS_CALLS: &[&str] = &[
    "readFile",
    "readFileSync",
    "writeFile",
    "writeFileSync",
    "appendFile",
    "appendFileSync",
    "createReadStream",
    "createWriteStream",
    "open",
    "openSync",
    "unlink",
    "unlinkSync",
    "readdir",
    "readdirSync",
    "stat",
    "statSync",
    "lstat",
    "lstatSync",
    "access",
    "accessSync",
    "existsSync",
    "mkdir",
    "mkdirSync",
    "rm",
    "rmSync",
    "rmdir",
    "rmdirSync",
];
const FS_TWO_PATH_CALLS: &[&str] = &["copyFile", "copyFileSync", "rename", "renameSync"];
const FS_EXTENDED: &[&str] = &[
    "require",
    "sendFile",
    "download",
    "readJson",
    "readJsonSync",
    "outputFile",
    "outputFileSync",
    "realpath",
    "realpathSync",
];
const SPAWN_CALLS: &[&str] = &["exec", "execSync", "spawn", "spawnSync", "execFile", "execFileSync"];
const SPAWN_EXTENDED: &[&str] = &["execa", "execaSync", "execaCommand", "execaCommandSync", "fork"];
const VM_CALLS: &[&str] = &["runInNewContext", "runInThisContext", "runInContext"];
/// String and regex methods whose running time depends on a regex.
pub const REGEX_METHODS: &[&str] = &["match", "test", "exec", "replace", "split", "search"];
const REGEX_METHODS_EXTENDED: &[&str] = &["matchAll", "replaceAll"];

fn calls(names: &[&'static str], positions: &[usize], out: &mut Vec<SinkPattern>) {
    for n in names {
        for p in positions {
            out.push(SinkPattern {
                form: SinkForm::Call(n),
                arg: ArgPos::Index(*p),
            });
        }
    }
}

fn strict_sinks(class: VulnClass) -> Vec<SinkPattern> {
    let mut out = Vec::new();
    match class {
        VulnClass::PathTraversal => {
            calls(FS_CALLS, &[0], &mut out);
            calls(FS_TWO_PATH_CALLS, &[0, 1], &mut out);
        }
        VulnClass::CommandInjection => calls(SPAWN_CALLS, &[0, 1], &mut out),
        VulnClass::CodeInjection => {
            calls(&["eval"], &[0], &mut out);
            out.push(SinkPattern {
                form: SinkForm::CallOrNew("Function"),
                arg: ArgPos::Any,
            });
            calls(VM_CALLS, &[0], &mut out);
            out.push(SinkPattern {
                form: SinkForm::New("Script"),
                arg: ArgPos::Index(0),
            });
        }
        VulnClass::PrototypePollution => out.push(SinkPattern {
            form: SinkForm::ComputedWrite(2),
            arg: ArgPos::Any,
        }),
        VulnClass::ReDoS => {
            out.push(SinkPattern {
                form: SinkForm::CallOrNew("RegExp"),
                arg: ArgPos::Index(0),
            });
            for m in REGEX_METHODS {
                out.push(SinkPattern {
                    form: SinkForm::Method(m),
                    arg: ArgPos::ReceiverOrArg(0),
                });
            }
        }
    }
    out
}

fn extended_only_sinks(class: VulnClass) -> Vec<SinkPattern> {
    let mut out = Vec::new();
    match class {
        VulnClass::PathTraversal => calls(FS_EXTENDED, &[0], &mut out),
        VulnClass::CommandInjection => calls(SPAWN_EXTENDED, &[0, 1], &mut out),
        VulnClass::CodeInjection => calls(&["setTimeout", "setInterval", "compileFunction"], &[0], &mut out),
        VulnClass::PrototypePollution => out.push(SinkPattern {
            form: SinkForm::ComputedWrite(1),
            arg: ArgPos::Any,
        }),
        VulnClass::ReDoS => {
            for m in REGEX_METHODS_EXTENDED {
                out.push(SinkPattern {
                    form: SinkForm::Method(m),
                    arg: ArgPos::ReceiverOrArg(0),
                });
            }
        }
    }
    out
}

/// The sink set for a class and tier. Extended is a superset of
/// Strict in both sinks and rules.
pub fn sink_spec(class: VulnClass, tier: Tier) -> SinkSpec {
    let mut sink_patterns = strict_sinks(class);
    let mut propagation_rules: BTreeSet<Rule> = STRICT_RULES.into_iter().collect();
    if tier == Tier::Extended {
        sink_patterns.extend(extended_only_sinks(class));
        propagation_rules.extend(EXTENDED_ONLY_RULES);
    }
    SinkSpec {
        vuln_class: class,
        tier,
        sink_patterns,
        propagation_rules,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extended_is_superset_for_every_class() {
        for class in VulnClass::ALL {
            let s = sink_spec(class, Tier::Strict);
            let e = sink_spec(class, Tier::Extended);
            assert!(s.sink_patterns.iter().all(|p| e.sink_patterns.contains(p)));
            assert!(s.propagation_rules.is_subset(&e.propagation_rules));
            assert!(!s.sink_patterns.is_empty());
            assert_eq!(e.propagation_rules.len(), 8);
        }
    }

    #[test]
    fn strict_rules_exclude_extended_ones() {
        let s = sink_spec(VulnClass::PathTraversal, Tier::Strict);
        for r in EXTENDED_ONLY_RULES {
            assert!(!s.allows(r));
        }
    }
}
