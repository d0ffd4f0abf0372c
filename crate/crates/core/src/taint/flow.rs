//! Expression-level taint propagation.
//!
//! [`Flow::expr_rule`] answers whether an expression's value depends on a
//! tainted symbol and, if so, which rule carries the dependency. Calls into
//! the model are summarized per (function, parameter) so that `x = g(p)`
//! propagates when `g` returns something derived from its parameter.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap, HashSet};

use pocgen_js::ast::*;

use super::model::{BindMode, Binding, CodeModel};
use super::sinks::Rule;

const STRING_METHODS: &[&str] = &[
    "trim",
    "trimStart",
    "trimEnd",
    "toLowerCase",
    "toUpperCase",
    "toLocaleLowerCase",
    "toLocaleUpperCase",
    "toString",
    "valueOf",
    "replace",
    "replaceAll",
    "split",
    "slice",
    "substring",
    "substr",
    "concat",
    "padStart",
    "padEnd",
    "normalize",
    "join",
    "repeat",
];
/// String methods whose arguments also end up in the result.
const STRING_ARG_METHODS: &[&str] = &["concat", "replace", "replaceAll", "padStart", "padEnd"];
const ARRAY_ELEMENT_METHODS: &[&str] = &["filter", "pop", "shift", "flat", "reverse", "sort", "find", "at"];
const STRING_FUNCTIONS: &[&str] = &[
    "String",
    "decodeURIComponent",
    "decodeURI",
    "encodeURIComponent",
    "encodeURI",
    "unescape",
    "escape",
];
const PATH_FUNCTIONS: &[&str] = &["join", "resolve", "normalize", "relative", "basename", "dirname", "extname"];
const KEY_FUNCTIONS: &[&str] = &["Object.keys", "Object.values", "Object.entries", "Object.getOwnPropertyNames"];

pub struct Flow<'m> {
    pub model: &'m CodeModel,
    pub rules: &'m BTreeSet<Rule>,
    summaries: RefCell<HashMap<(usize, usize), bool>>,
    in_progress: RefCell<HashSet<(usize, usize)>>,
}

impl<'m> Flow<'m> {
    pub fn new(model: &'m CodeModel, rules: &'m BTreeSet<Rule>) -> Self {
        Self {
            model,
            rules,
            summaries: RefCell::new(HashMap::new()),
            in_progress: RefCell::new(HashSet::new()),
        }
    }

    fn allow(&self, r: Rule) -> Option<Rule> {
        self.rules.contains(&r).then_some(r)
    }

    /// Rule by which the value of `e` depends on `sym`, if any.
    pub fn expr_rule(&self, e: &Expr, sym: &str) -> Option<Rule> {
        match &e.kind {
            ExprKind::Ident(n) => (n == sym).then_some(Rule::Assignment),
            ExprKind::This => (sym == "this").then_some(Rule::Assignment),
            ExprKind::Member { object, .. } => {
                if e.member_path().as_deref() == Some(sym) {
                    return Some(Rule::Assignment);
                }
                self.expr_rule(object, sym)?;
                self.allow(Rule::PropertyRead)
            }
            ExprKind::Binary { op, left, right } => {
                if *op != "+" {
                    return None;
                }
                self.expr_rule(left, sym).or_else(|| self.expr_rule(right, sym))?;
                self.allow(Rule::StringConcat)
            }
            ExprKind::Template { exprs, .. } => {
                exprs.iter().find_map(|x| self.expr_rule(x, sym))?;
                self.allow(Rule::StringConcat)
            }
            ExprKind::Logical { left, right, .. } => self.expr_rule(left, sym).or_else(|| self.expr_rule(right, sym)),
            ExprKind::Conditional { cons, alt, .. } => self.expr_rule(cons, sym).or_else(|| self.expr_rule(alt, sym)),
            ExprKind::Sequence(items) => items.last().and_then(|x| self.expr_rule(x, sym)),
            ExprKind::Await(x) | ExprKind::Spread(x) => self.expr_rule(x, sym),
            ExprKind::Assign { value, .. } => self.expr_rule(value, sym),
            ExprKind::Array(items) => {
                items.iter().flatten().find_map(|x| self.expr_rule(x, sym))?;
                self.allow(Rule::PropertyRead)
            }
            ExprKind::Object(props) => {
                props
                    .iter()
                    .find_map(|p| match p {
                        Prop::Property { value, .. } => self.expr_rule(value, sym),
                        Prop::Spread(x) => self.expr_rule(x, sym),
                        Prop::ShorthandDefault { name, .. } => (name == sym).then_some(Rule::Assignment),
                    })?;
                self.allow(Rule::PropertyRead)
            }
            ExprKind::Call { callee, args, .. } => self.call_rule(callee, args, sym),
            ExprKind::New { callee, args } => {
                if callee.terminal_name() == Some("String") {
                    args.iter().find_map(|a| self.expr_rule(a, sym))?;
                    return self.allow(Rule::StringMethod);
                }
                None
            }
            _ => None,
        }
    }

    fn any_arg(&self, args: &[Expr], sym: &str) -> bool {
        args.iter().any(|a| self.expr_rule(a, sym).is_some())
    }

    fn call_rule(&self, callee: &Expr, args: &[Expr], sym: &str) -> Option<Rule> {
        let path = callee.member_path();
        let name = callee.terminal_name();

        if path.as_deref() == Some("JSON.parse") {
            self.expr_rule(args.first()?, sym)?;
            return self.allow(Rule::JsonParse);
        }
        if path.as_deref().is_some_and(|p| KEY_FUNCTIONS.contains(&p)) {
            self.expr_rule(args.first()?, sym)?;
            return self.allow(Rule::ObjectKeyIteration);
        }
        if path.as_deref() == Some("Object.assign") {
            return self.any_arg(args, sym).then_some(()).and_then(|_| self.allow(Rule::PropertyRead));
        }
        if let ExprKind::Ident(n) = &callee.kind {
            if STRING_FUNCTIONS.contains(&n.as_str()) {
                return self.any_arg(args, sym).then_some(()).and_then(|_| self.allow(Rule::StringMethod));
            }
        }
        if let ExprKind::Member {
            object,
            prop: MemberProp::Name(m),
            ..
        } = &callee.kind
        {
            let recv_path = object.member_path();
            let is_path_module = recv_path
                .as_deref()
                .is_some_and(|p| p == "path" || p.ends_with(".path") || p == "posix" || p.ends_with(".posix"));
            if is_path_module && PATH_FUNCTIONS.contains(&m.as_str()) {
                return self.any_arg(args, sym).then_some(()).and_then(|_| self.allow(Rule::StringMethod));
            }
            if recv_path.as_deref() == Some("Buffer") && m == "from" {
                return self.any_arg(args, sym).then_some(()).and_then(|_| self.allow(Rule::StringMethod));
            }
            let receiver_tainted = self.expr_rule(object, sym).is_some();
            if STRING_METHODS.contains(&m.as_str())
                && (receiver_tainted || (STRING_ARG_METHODS.contains(&m.as_str()) && self.any_arg(args, sym)))
            {
                return self.allow(Rule::StringMethod);
            }
            if receiver_tainted && ARRAY_ELEMENT_METHODS.contains(&m.as_str()) {
                return self.allow(Rule::PropertyRead);
            }
        }

        // Calls into the model: follow return summaries.
        let name = name?;
        self.allow(Rule::ReturnToCaller)?;
        for (i, a) in args.iter().enumerate() {
            if self.expr_rule(a, sym).is_none() {
                continue;
            }
            for g in self.model.resolve_callee(name, false) {
                if self.returns_param(g, i) {
                    return Some(Rule::ReturnToCaller);
                }
            }
        }
        None
    }

    /// Rule carrying taint from `sym` into the targets of a binding.
    pub fn binding_rule(&self, b: &Binding, sym: &str) -> Option<Rule> {
        let mut r = self.expr_rule(&b.value, sym)?;
        if b.compound {
            r = self.allow(Rule::StringConcat)?;
        }
        match b.mode {
            BindMode::Value => {}
            BindMode::Keys => r = self.allow(Rule::ObjectKeyIteration)?,
            BindMode::Elements => {
                if r != Rule::ObjectKeyIteration {
                    r = self.allow(Rule::PropertyRead)?;
                }
            }
        }
        if b.destructured {
            r = self.allow(Rule::PropertyRead)?;
        }
        Some(r)
    }

    /// Whether function `g` returns a value derived from its parameter `i`.
    pub fn returns_param(&self, g: usize, i: usize) -> bool {
        if let Some(v) = self.summaries.borrow().get(&(g, i)) {
            return *v;
        }
        if !self.in_progress.borrow_mut().insert((g, i)) {
            return false;
        }
        let result = self.compute_summary(g, i);
        self.in_progress.borrow_mut().remove(&(g, i));
        self.summaries.borrow_mut().insert((g, i), result);
        result
    }

    fn compute_summary(&self, g: usize, i: usize) -> bool {
        let info = &self.model.functions[g];
        let Some(names) = info.param_names.get(i) else {
            return false;
        };
        if info.params.get(i).is_some_and(Pattern::is_destructuring) && !self.rules.contains(&Rule::PropertyRead) {
            return false;
        }
        let facts = &self.model.facts[g];
        let mut tainted: Vec<String> = names.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for b in &facts.bindings {
                if b.targets.iter().all(|t| tainted.contains(t)) {
                    continue;
                }
                if tainted.iter().any(|s| self.binding_rule(b, s).is_some()) {
                    for t in &b.targets {
                        if !tainted.contains(t) {
                            tainted.push(t.clone());
                            changed = true;
                        }
                    }
                }
            }
        }
        facts
            .returns
            .iter()
            .any(|r| tainted.iter().any(|s| self.expr_rule(&r.value, s).is_some()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taint::sinks::{sink_spec, Tier};
    use crate::report_store::VulnClass;

    fn rule_of(src: &str, sym: &str, tier: Tier) -> Option<Rule> {
        let model = CodeModel::from_sources("p", &[("a.js".into(), "function clean(s) { return s.trim() }".into())]);
        let spec = sink_spec(VulnClass::CommandInjection, tier);
        let flow = Flow::new(&model, &spec.propagation_rules);
        let e = pocgen_js::parse_expression(src).unwrap();
        flow.expr_rule(&e, sym)
    }

    #[test]
    fn rules_by_tier() {
        use Rule::*;
        assert_eq!(rule_of("x", "x", Tier::Strict), Some(Assignment));
        assert_eq!(rule_of("a || x", "x", Tier::Strict), Some(Assignment));
        assert_eq!(rule_of("x.trim()", "x", Tier::Strict), Some(StringMethod));
        assert_eq!(rule_of("clean(x)", "x", Tier::Strict), Some(ReturnToCaller));
        assert_eq!(rule_of("'a' + x", "x", Tier::Strict), None);
        assert_eq!(rule_of("'a' + x", "x", Tier::Extended), Some(StringConcat));
        assert_eq!(rule_of("`a ${x}`", "x", Tier::Extended), Some(StringConcat));
        assert_eq!(rule_of("x.name", "x", Tier::Strict), None);
        assert_eq!(rule_of("x.name", "x", Tier::Extended), Some(PropertyRead));
        assert_eq!(rule_of("JSON.parse(x)", "x", Tier::Extended), Some(JsonParse));
        assert_eq!(rule_of("Object.keys(x)", "x", Tier::Extended), Some(ObjectKeyIteration));
        assert_eq!(rule_of("path.join(base, x)", "x", Tier::Strict), Some(StringMethod));
        assert_eq!(rule_of("this.opts", "this.opts", Tier::Strict), Some(Assignment));
        assert_eq!(rule_of("unknown(x)", "x", Tier::Extended), None);
        assert_eq!(rule_of("o[x]", "x", Tier::Extended), None);
        assert_eq!(rule_of("x == 1", "x", Tier::Extended), None);
    }
}
