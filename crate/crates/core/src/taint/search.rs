//! Best-first search for source-to-sink paths.
//!
//! Partial paths are expanded in order of (number of steps, (file, line)
//! sequence), so completed paths come out shortest first with a
//! deterministic tie-break. Each (function, symbol) node is expanded a
//! bounded number of times, which is enough to recover the few shortest
//! distinct paths without enumerating every route.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use pocgen_js::ast::{Expr, ExprKind, MemberProp, Pattern};

use super::flow::Flow;
use super::model::{CallSite, CodeModel};
use super::sinks::{ArgPos, Rule, SinkForm, SinkPattern, SinkSpec, REGEX_METHODS};
use super::{Justification, TaintStep};

pub const MAX_CALL_DEPTH: usize = 5;
pub const MAX_PATHS_PER_ENTRY: usize = 3;
const EXPANSIONS_PER_NODE: usize = MAX_PATHS_PER_ENTRY;
const MAX_EXPANSIONS: usize = 20_000;

/// A completed path before it is attached to an entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPath {
    pub steps: Vec<TaintStep>,
    pub sink_kind: String,
}

#[derive(Clone, PartialEq, Eq)]
struct State {
    func: usize,
    sym: String,
    scope: Vec<u32>,
    steps: Vec<TaintStep>,
    depth: usize,
    sink: Option<String>,
}

type Key = (usize, Vec<(String, u32, String)>);

fn key_of(steps: &[TaintStep]) -> Key {
    (
        steps.len(),
        steps
            .iter()
            .map(|s| (s.file.clone(), s.line, s.tainted_symbol.clone()))
            .collect(),
    )
}

struct Entry {
    key: Key,
    seq: usize,
    state: State,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.seq == other.seq
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.key, self.seq).cmp(&(&other.key, other.seq))
    }
}

pub struct Searcher<'m> {
    model: &'m CodeModel,
    spec: &'m SinkSpec,
    flow: Flow<'m>,
}

impl<'m> Searcher<'m> {
    pub fn new(model: &'m CodeModel, spec: &'m SinkSpec) -> Self {
        Self {
            model,
            spec,
            flow: Flow::new(model, &spec.propagation_rules),
        }
    }

    fn step(&self, func: usize, line: u32, sym: &str, justification: Justification) -> TaintStep {
        let file = self.model.file_of(&self.model.functions[func]);
        TaintStep {
            file: file.path.clone(),
            line,
            snippet: file.line(line).to_string(),
            tainted_symbol: sym.to_string(),
            justification,
        }
    }

    /// Appends `next`, collapsing onto the previous step when both sit on the
    /// same line. Returns false if the line was already visited earlier.
    fn push(steps: &mut Vec<TaintStep>, next: TaintStep) -> bool {
        if let Some(last) = steps.last_mut() {
            if last.file == next.file && last.line == next.line {
                last.justification = next.justification;
                return true;
            }
        }
        if steps.iter().any(|s| s.file == next.file && s.line == next.line) {
            return false;
        }
        steps.push(next);
        true
    }

    /// Capture steps for entering closures `fact_scope` from `state_scope`.
    fn enter_scope(&self, st: &State, fact_scope: &[u32], steps: &mut Vec<TaintStep>) -> bool {
        let common = st
            .scope
            .iter()
            .zip(fact_scope)
            .take_while(|(a, b)| a == b)
            .count();
        for &line in &fact_scope[common..] {
            let s = self.step(st.func, line, &st.sym, Justification::Capture);
            if !Self::push(steps, s) {
                return false;
            }
        }
        true
    }

    /// Shortest paths from the parameters of `func` to a sink, at most
    /// `MAX_PATHS_PER_ENTRY`.
    pub fn paths_from(&self, func: usize) -> Vec<RawPath> {
        let info = &self.model.functions[func];
        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        for names in &info.param_names {
            for name in names {
                let steps = vec![self.step(func, info.start_line, name, Justification::Source)];
                let state = State {
                    func,
                    sym: name.clone(),
                    scope: Vec::new(),
                    steps,
                    depth: 0,
                    sink: None,
                };
                heap.push(Reverse(Entry {
                    key: key_of(&state.steps),
                    seq,
                    state,
                }));
                seq += 1;
            }
        }

        let mut expanded: HashMap<(usize, String), usize> = HashMap::new();
        let mut out: Vec<RawPath> = Vec::new();
        let mut budget = MAX_EXPANSIONS;
        while let Some(Reverse(Entry { state, .. })) = heap.pop() {
            if let Some(sink) = state.sink {
                let path = RawPath {
                    steps: state.steps,
                    sink_kind: sink,
                };
                if !out.contains(&path) {
                    out.push(path);
                    if out.len() == MAX_PATHS_PER_ENTRY {
                        break;
                    }
                }
                continue;
            }
            let count = expanded.entry((state.func, state.sym.clone())).or_insert(0);
            if *count >= EXPANSIONS_PER_NODE {
                continue;
            }
            *count += 1;
            if budget == 0 {
                break;
            }
            budget -= 1;
            for next in self.successors(&state) {
                heap.push(Reverse(Entry {
                    key: key_of(&next.steps),
                    seq,
                    state: next,
                }));
                seq += 1;
            }
        }
        out
    }

    fn successors(&self, st: &State) -> Vec<State> {
        let mut out = Vec::new();
        let facts = &self.model.facts[st.func];

        // sinks
        for call in &facts.calls {
            if let Some(label) = self.call_sink(call, &st.sym) {
                let mut steps = st.steps.clone();
                if !self.enter_scope(st, &call.scope, &mut steps) {
                    continue;
                }
                let s = self.step(st.func, call.line, &st.sym, Justification::Sink { sink: label.clone() });
                if Self::push(&mut steps, s) {
                    out.push(State {
                        steps,
                        sink: Some(label),
                        ..st.clone()
                    });
                }
            }
        }
        for w in &facts.writes {
            if let Some(label) = self.write_sink(&w.keys, &st.sym) {
                let mut steps = st.steps.clone();
                if !self.enter_scope(st, &w.scope, &mut steps) {
                    continue;
                }
                let s = self.step(st.func, w.line, &st.sym, Justification::Sink { sink: label.clone() });
                if Self::push(&mut steps, s) {
                    out.push(State {
                        steps,
                        sink: Some(label),
                        ..st.clone()
                    });
                }
            }
        }

        // intra-procedural propagation
        for b in &facts.bindings {
            let Some(rule) = self.flow.binding_rule(b, &st.sym) else {
                continue;
            };
            let mut base = st.steps.clone();
            if !self.enter_scope(st, &b.scope, &mut base) {
                continue;
            }
            let s = self.step(st.func, b.line, &st.sym, Justification::Rule { rule });
            if !Self::push(&mut base, s) {
                continue;
            }
            for t in &b.targets {
                if *t == st.sym {
                    continue;
                }
                out.push(State {
                    func: st.func,
                    sym: t.clone(),
                    scope: b.target_scope.clone(),
                    steps: base.clone(),
                    depth: st.depth,
                    sink: None,
                });
            }
        }

        // calls into the model
        if st.depth < MAX_CALL_DEPTH && self.spec.allows(Rule::CallArgToParam) {
            for call in &facts.calls {
                let Some(name) = &call.name else { continue };
                for (i, arg) in call.args.iter().enumerate() {
                    let Some(rule) = self.flow.expr_rule(arg, &st.sym) else {
                        continue;
                    };
                    for g in self.model.resolve_callee(name, call.is_new) {
                        let callee = &self.model.functions[g];
                        let Some(param) = callee.params.get(i) else { continue };
                        let names = callee.param_names[i].clone();
                        let destructured = param.is_destructuring() || matches!(param, Pattern::Rest(_));
                        if destructured && !self.spec.allows(Rule::PropertyRead) {
                            continue;
                        }
                        let mut steps = st.steps.clone();
                        if !self.enter_scope(st, &call.scope, &mut steps) {
                            continue;
                        }
                        let s = self.step(
                            st.func,
                            call.line,
                            &st.sym,
                            Justification::CallArg {
                                callee: name.clone(),
                                rule,
                            },
                        );
                        if !Self::push(&mut steps, s) {
                            continue;
                        }
                        for p in names {
                            let mut steps = steps.clone();
                            let s = self.step(g, callee.start_line, &p, Justification::Param { callee: name.clone() });
                            // A parameter step never collapses into the call site.
                            if steps.iter().any(|x| x.file == s.file && x.line == s.line) {
                                continue;
                            }
                            steps.push(s);
                            out.push(State {
                                func: g,
                                sym: p,
                                scope: Vec::new(),
                                steps,
                                depth: st.depth + 1,
                                sink: None,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn arg_tainted(&self, args: &[Expr], pos: ArgPos, sym: &str) -> bool {
        match pos {
            ArgPos::Index(i) | ArgPos::ReceiverOrArg(i) => {
                args.get(i).is_some_and(|a| self.flow.expr_rule(a, sym).is_some())
            }
            ArgPos::Any => args.iter().any(|a| self.flow.expr_rule(a, sym).is_some()),
        }
    }

    fn call_sink(&self, call: &CallSite, sym: &str) -> Option<String> {
        let name = call.name.as_deref()?;
        self.spec
            .sink_patterns
            .iter()
            .find(|p| self.matches_call(p, call, name, sym))
            .map(SinkPattern::label)
    }

    fn matches_call(&self, p: &SinkPattern, call: &CallSite, name: &str, sym: &str) -> bool {
        match p.form {
            SinkForm::Call(n) => !call.is_new && n == name && self.arg_tainted(&call.args, p.arg, sym),
            SinkForm::New(n) => call.is_new && n == name && self.arg_tainted(&call.args, p.arg, sym),
            SinkForm::CallOrNew(n) => n == name && self.arg_tainted(&call.args, p.arg, sym),
            SinkForm::Method(n) => {
                if n != name || call.is_new {
                    return false;
                }
                let Some(recv) = call.receiver() else { return false };
                if self.arg_tainted(&call.args, p.arg, sym) {
                    return true;
                }
                let recv_tainted = matches!(p.arg, ArgPos::ReceiverOrArg(_)) && self.flow.expr_rule(recv, sym).is_some();
                // A tainted string matched against a plain string is not a regex operation.
                let string_pattern = REGEX_METHODS.contains(&n)
                    && n != "test"
                    && n != "exec"
                    && matches!(call.args.first().map(|a| &a.kind), Some(ExprKind::Str(_)) | Some(ExprKind::Template { .. }) | None);
                recv_tainted && !string_pattern
            }
            SinkForm::ComputedWrite(_) => false,
        }
    }

    fn write_sink(&self, keys: &[Expr], sym: &str) -> Option<String> {
        self.spec
            .sink_patterns
            .iter()
            .find(|p| match p.form {
                SinkForm::ComputedWrite(depth) => {
                    keys.len() >= depth && keys[..depth].iter().any(|k| self.key_tainted(k, sym))
                }
                _ => false,
            })
            .map(SinkPattern::label)
    }

    fn key_tainted(&self, k: &Expr, sym: &str) -> bool {
        // Keys are attacker strings themselves; `o[p.name]` counts as well.
        if self.flow.expr_rule(k, sym).is_some() {
            return true;
        }
        matches!(&k.kind, ExprKind::Member { prop: MemberProp::Computed(inner), .. } if self.flow.expr_rule(inner, sym).is_some())
    }
}
