//! Parsed view of a package: files, named functions and their flow facts.
//!
//! Only named functions are indexed: declarations, functions bound to a
//! variable or property, class members and object-literal methods. Anonymous
//! callbacks are folded into the function that creates them, remembering the
//! line each closure starts on so paths can show where a captured variable
//! enters the callback.

use std::path::{Path, PathBuf};

use pocgen_js::ast::*;
use pocgen_js::visit::{self, Visitor};
use thiserror::Error;

use crate::explorer::ApiKind;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no parseable script sources under {0}")]
    Empty(String),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone)]
pub struct SourceFile {
    /// Package-relative path with `/` separators.
    pub path: String,
    pub lines: Vec<String>,
    pub program: Program,
}

impl SourceFile {
    /// Line `n` (1-based) verbatim, or `""` when out of range.
    pub fn line(&self, n: u32) -> &str {
        n.checked_sub(1)
            .and_then(|i| self.lines.get(i as usize))
            .map(String::as_str)
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct FunctionInfo {
    pub id: usize,
    /// Index into [`CodeModel::files`].
    pub file: usize,
    pub name: String,
    pub class_name: Option<String>,
    /// Object the function was attached to, e.g. `utils` for `utils.f = ...`.
    pub owner: Option<String>,
    pub kind: ApiKind,
    pub start_line: u32,
    pub end_line: u32,
    pub params: Vec<Pattern>,
    /// Identifiers bound by each parameter.
    pub param_names: Vec<Vec<String>>,
    /// Export expressions the function was assigned to (`module.exports`,
    /// `exports.run`, ...).
    pub export_names: Vec<String>,
}

impl FunctionInfo {
    pub fn contains_line(&self, line: u32) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }

    pub fn arity(&self) -> usize {
        self.params
            .iter()
            .filter(|p| !matches!(p, Pattern::Rest(_) | Pattern::Default(..)))
            .count()
    }

    pub fn qualified_name(&self) -> String {
        match (&self.class_name, &self.owner) {
            (Some(c), _) => format!("{c}.{}", self.name),
            (None, Some(o)) => format!("{o}.{}", self.name),
            (None, None) => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallEdge {
    pub caller: usize,
    pub callee: String,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindMode {
    Value,
    /// Keys of the value (`for ... in`).
    Keys,
    /// Elements of the value (`for ... of`, iteration callbacks).
    Elements,
}

#[derive(Debug, Clone)]
pub struct Binding {
    pub targets: Vec<String>,
    pub destructured: bool,
    pub value: Expr,
    pub mode: BindMode,
    /// `x += v`
    pub compound: bool,
    pub line: u32,
    /// Closure start lines enclosing the evaluation of `value`.
    pub scope: Vec<u32>,
    /// Closure start lines enclosing the bound names.
    pub target_scope: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct CallSite {
    pub callee: Expr,
    pub name: Option<String>,
    pub args: Vec<Expr>,
    pub is_new: bool,
    pub line: u32,
    pub scope: Vec<u32>,
}

impl CallSite {
    /// Receiver of a method call: `a.b` for `a.b.c(...)`.
    pub fn receiver(&self) -> Option<&Expr> {
        match &self.callee.kind {
            ExprKind::Member { object, .. } => Some(object),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReturnFact {
    pub value: Expr,
    pub line: u32,
}

/// Assignment through computed member keys, outermost key first.
#[derive(Debug, Clone)]
pub struct ComputedWrite {
    pub keys: Vec<Expr>,
    pub value: Expr,
    pub line: u32,
    pub scope: Vec<u32>,
}

#[derive(Debug, Clone, Default)]
pub struct FunctionFacts {
    pub bindings: Vec<Binding>,
    pub calls: Vec<CallSite>,
    pub returns: Vec<ReturnFact>,
    pub writes: Vec<ComputedWrite>,
}

#[derive(Debug, Clone)]
pub struct CodeModel {
    pub package_name: String,
    pub root: PathBuf,
    pub files: Vec<SourceFile>,
    pub functions: Vec<FunctionInfo>,
    pub facts: Vec<FunctionFacts>,
    pub call_edges: Vec<CallEdge>,
    pub skipped: Vec<SkippedFile>,
}

const MAX_FILE_BYTES: u64 = 1 << 20;

/// Parses every script under `package_dir`, skipping nested dependencies.
pub fn build_code_model(package_dir: &Path) -> Result<CodeModel, ModelError> {
    let mut paths = Vec::new();
    collect_scripts(package_dir, package_dir, &mut paths)?;
    paths.sort();
    let mut sources = Vec::new();
    let mut skipped = Vec::new();
    for rel in paths {
        let full = package_dir.join(&rel);
        let too_big = std::fs::metadata(&full).map(|m| m.len() > MAX_FILE_BYTES).unwrap_or(true);
        if too_big {
            skipped.push(SkippedFile {
                path: rel,
                reason: "file too large".into(),
            });
            continue;
        }
        match std::fs::read_to_string(&full) {
            Ok(text) => sources.push((rel, text)),
            Err(e) => skipped.push(SkippedFile {
                path: rel,
                reason: e.to_string(),
            }),
        }
    }
    let name = package_name(package_dir);
    let mut model = CodeModel::from_sources(&name, &sources);
    model.root = package_dir.to_path_buf();
    model.skipped.splice(0..0, skipped);
    if model.files.is_empty() {
        return Err(ModelError::Empty(package_dir.display().to_string()));
    }
    Ok(model)
}

/// `name` from the manifest, else the directory name.
pub fn package_name(package_dir: &Path) -> String {
    std::fs::read_to_string(package_dir.join("package.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string))
        .unwrap_or_else(|| {
            package_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
}

fn collect_scripts(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), ModelError> {
    let entries = std::fs::read_dir(dir).map_err(|e| ModelError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    for entry in entries.flatten() {
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        let Ok(ft) = entry.file_type() else { continue };
        if ft.is_dir() {
            if name == "node_modules" || name.starts_with('.') {
                continue;
            }
            collect_scripts(root, &path, out)?;
        } else if ft.is_file()
            && (name.ends_with(".js") || name.ends_with(".cjs") || name.ends_with(".mjs"))
            && !name.ends_with(".min.js")
        {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            out.push(
                rel.components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/"),
            );
        }
    }
    Ok(())
}

impl CodeModel {
    /// Builds a model from in-memory `(path, text)` pairs, in the given order.
    pub fn from_sources(package_name: &str, sources: &[(String, String)]) -> CodeModel {
        let mut model = CodeModel {
            package_name: package_name.to_string(),
            root: PathBuf::new(),
            files: Vec::new(),
            functions: Vec::new(),
            facts: Vec::new(),
            call_edges: Vec::new(),
            skipped: Vec::new(),
        };
        for (path, text) in sources {
            match pocgen_js::parse(text) {
                Ok(program) => {
                    let file = model.files.len();
                    model.files.push(SourceFile {
                        path: path.clone(),
                        lines: text.lines().map(str::to_string).collect(),
                        program,
                    });
                    let mut b = Builder {
                        file,
                        functions: &mut model.functions,
                        facts: &mut model.facts,
                        edges: &mut model.call_edges,
                        cur: None,
                        closures: Vec::new(),
                        aliases: Vec::new(),
                    };
                    let program = &model.files[file].program;
                    visit::walk_program(&mut b, program);
                    let aliases = std::mem::take(&mut b.aliases);
                    for (export, name) in aliases {
                        for f in model.functions.iter_mut().filter(|f| f.file == file) {
                            let hit = match f.kind {
                                ApiKind::Constructor => f.class_name.as_deref() == Some(name.as_str()),
                                _ => f.name == name && f.owner.is_none() && f.class_name.is_none(),
                            };
                            if hit && !f.export_names.contains(&export) {
                                f.export_names.push(export.clone());
                            }
                        }
                    }
                }
                Err(e) => {
                    tracing::debug!(file = %path, error = %e, "skipping unparseable file");
                    model.skipped.push(SkippedFile {
                        path: path.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        model
    }

    pub fn file(&self, path: &str) -> Option<(usize, &SourceFile)> {
        self.files.iter().enumerate().find(|(_, f)| f.path == path)
    }

    pub fn file_of(&self, f: &FunctionInfo) -> &SourceFile {
        &self.files[f.file]
    }

    pub fn functions_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a FunctionInfo> + 'a {
        self.functions.iter().filter(move |f| f.name == name)
    }

    /// Innermost indexed function whose span contains the line.
    pub fn function_at(&self, file: usize, line: u32) -> Option<&FunctionInfo> {
        self.functions
            .iter()
            .filter(|f| f.file == file && f.contains_line(line))
            .min_by_key(|f| f.end_line - f.start_line)
    }

    /// Functions a call named `name` may reach. `new X(...)` resolves to the
    /// constructor of class `X` or to a function named `X`.
    pub fn resolve_callee(&self, name: &str, is_new: bool) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        if is_new {
            out.extend(
                self.functions
                    .iter()
                    .filter(|f| f.kind == ApiKind::Constructor && f.class_name.as_deref() == Some(name))
                    .map(|f| f.id),
            );
        }
        out.extend(
            self.functions
                .iter()
                .filter(|f| f.name == name && f.kind != ApiKind::Constructor)
                .map(|f| f.id),
        );
        out
    }
}

// ---------------------------------------------------------------------------
// fact extraction

struct Builder<'m> {
    file: usize,
    functions: &'m mut Vec<FunctionInfo>,
    facts: &'m mut Vec<FunctionFacts>,
    edges: &'m mut Vec<CallEdge>,
    cur: Option<usize>,
    closures: Vec<u32>,
    /// `(export path, identifier)` for exports of already-named values.
    aliases: Vec<(String, String)>,
}

struct Naming {
    name: String,
    class_name: Option<String>,
    owner: Option<String>,
    kind: ApiKind,
    export_names: Vec<String>,
}

impl Naming {
    fn plain(name: &str) -> Self {
        Self {
            name: name.to_string(),
            class_name: None,
            owner: None,
            kind: ApiKind::Function,
            export_names: Vec::new(),
        }
    }
}

fn is_export_path(p: &str) -> bool {
    p == "module.exports" || p.starts_with("module.exports.") || p == "exports" || p.starts_with("exports.")
}

/// Naming of a function assigned to the dotted path `target`.
fn naming_for_path(target: &str, fn_name: Option<&str>) -> Naming {
    let segs: Vec<&str> = target.split('.').collect();
    let exports = if is_export_path(target) { vec![target.to_string()] } else { Vec::new() };
    if let Some(pos) = segs.iter().position(|s| *s == "prototype") {
        if pos > 0 && pos + 1 < segs.len() {
            return Naming {
                name: segs[segs.len() - 1].to_string(),
                class_name: Some(segs[pos - 1].to_string()),
                owner: None,
                kind: ApiKind::Method,
                export_names: exports,
            };
        }
    }
    if target == "module.exports" || target == "exports" {
        return Naming {
            name: fn_name.unwrap_or("exports").to_string(),
            class_name: None,
            owner: None,
            kind: ApiKind::Function,
            export_names: exports,
        };
    }
    let name = segs[segs.len() - 1].to_string();
    let owner = (segs.len() > 1).then(|| segs[..segs.len() - 1].join("."));
    Naming {
        name,
        class_name: None,
        owner,
        kind: ApiKind::Function,
        export_names: exports,
    }
}

fn pattern_path(p: &Pattern) -> Option<String> {
    match p {
        Pattern::Ident(n) => Some(n.clone()),
        Pattern::Expr(e) => e.member_path(),
        _ => None,
    }
}

fn pattern_targets(p: &Pattern) -> Vec<String> {
    match p {
        Pattern::Expr(e) => e.member_path().into_iter().collect(),
        _ => p.bound_names(),
    }
}

/// Array and promise methods whose callback receives elements of (or the
/// value of) the receiver: (method, callback argument index, parameter index, mode).
const CALLBACK_METHODS: &[(&str, usize, usize, BindMode)] = &[
    ("forEach", 0, 0, BindMode::Elements),
    ("map", 0, 0, BindMode::Elements),
    ("filter", 0, 0, BindMode::Elements),
    ("some", 0, 0, BindMode::Elements),
    ("every", 0, 0, BindMode::Elements),
    ("find", 0, 0, BindMode::Elements),
    ("findIndex", 0, 0, BindMode::Elements),
    ("flatMap", 0, 0, BindMode::Elements),
    ("reduce", 0, 1, BindMode::Elements),
    ("then", 0, 0, BindMode::Value),
];

impl Builder<'_> {
    fn facts(&mut self) -> Option<&mut FunctionFacts> {
        self.cur.map(|id| &mut self.facts[id])
    }

    fn bind(&mut self, targets: Vec<String>, destructured: bool, value: &Expr, mode: BindMode, compound: bool, line: u32) {
        if targets.is_empty() {
            return;
        }
        let scope = self.closures.clone();
        if let Some(f) = self.facts() {
            f.bindings.push(Binding {
                targets,
                destructured,
                value: value.clone(),
                mode,
                compound,
                line,
                target_scope: scope.clone(),
                scope,
            });
        }
    }

    fn named_function(&mut self, f: &Function, naming: Naming) {
        let id = self.functions.len();
        self.functions.push(FunctionInfo {
            id,
            file: self.file,
            name: naming.name,
            class_name: naming.class_name,
            owner: naming.owner,
            kind: naming.kind,
            start_line: f.start_line,
            end_line: f.end_line,
            params: f.params.clone(),
            param_names: f.params.iter().map(Pattern::bound_names).collect(),
            export_names: naming.export_names,
        });
        self.facts.push(FunctionFacts::default());
        let saved_cur = self.cur.replace(id);
        let saved_closures = std::mem::take(&mut self.closures);
        for p in &f.params {
            self.visit_pattern(p);
        }
        match &f.body {
            FunctionBody::Block(stmts) => visit::walk_stmts(self, stmts),
            FunctionBody::Expr(e) => {
                self.facts[id].returns.push(ReturnFact {
                    value: (**e).clone(),
                    line: e.line,
                });
                self.visit_expr(e);
            }
        }
        self.cur = saved_cur;
        self.closures = saved_closures;
    }

    fn inline_function(&mut self, f: &Function) {
        self.closures.push(f.start_line);
        visit::walk_function(self, f);
        self.closures.pop();
    }

    fn class(&mut self, c: &Class, name: Option<&str>, exports: Vec<String>) {
        if let Some(s) = &c.super_class {
            self.visit_expr(s);
        }
        let class_name = name.map(str::to_string).or_else(|| c.name.clone());
        for m in &c.members {
            if let PropKey::Computed(e) = &m.key {
                self.visit_expr(e);
            }
            let key = m.key.name().map(str::to_string);
            let func = m.function.as_ref().or(match &m.value {
                Some(Expr {
                    kind: ExprKind::Function(f),
                    ..
                }) => Some(&**f),
                _ => None,
            });
            match (func, key) {
                (Some(f), Some(key)) => {
                    let kind = if m.kind == MemberKind::Constructor {
                        ApiKind::Constructor
                    } else {
                        ApiKind::Method
                    };
                    let export_names = if kind == ApiKind::Constructor { exports.clone() } else { Vec::new() };
                    self.named_function(
                        f,
                        Naming {
                            name: key,
                            class_name: class_name.clone(),
                            owner: None,
                            kind,
                            export_names,
                        },
                    );
                }
                (Some(f), None) => self.inline_function(f),
                (None, _) => {
                    if let Some(v) = &m.value {
                        self.visit_expr(v);
                    }
                }
            }
        }
    }

    fn object_literal(&mut self, props: &[Prop], owner: Option<&str>) {
        for p in props {
            match p {
                Prop::Property { key, value, .. } => {
                    if let PropKey::Computed(e) = key {
                        self.visit_expr(e);
                    }
                    let name = key.name();
                    match (&value.kind, name) {
                        (ExprKind::Function(f), Some(name)) => {
                            let path = owner.map(|o| format!("{o}.{name}"));
                            let export_names = path.iter().filter(|p| is_export_path(p)).cloned().collect();
                            self.named_function(
                                f,
                                Naming {
                                    name: name.to_string(),
                                    class_name: None,
                                    owner: owner.map(str::to_string),
                                    kind: ApiKind::Function,
                                    export_names,
                                },
                            );
                        }
                        (ExprKind::Object(inner), Some(name)) => {
                            let path = owner.map(|o| format!("{o}.{name}"));
                            self.object_literal(inner, path.as_deref().or(Some(name)));
                        }
                        (ExprKind::Ident(n), Some(name)) => {
                            if let Some(o) = owner.filter(|o| is_export_path(o)) {
                                self.aliases.push((format!("{o}.{name}"), n.clone()));
                            }
                        }
                        _ => self.visit_expr(value),
                    }
                }
                Prop::ShorthandDefault { default, .. } => self.visit_expr(default),
                Prop::Spread(e) => self.visit_expr(e),
            }
        }
    }

    /// Handles `target = value` where `value` defines something nameable.
    /// Returns false when the value is an ordinary expression.
    fn define(&mut self, target: Option<&str>, value: &Expr) -> bool {
        let Some(target) = target else { return false };
        match &value.kind {
            ExprKind::Function(f) => {
                self.named_function(f, naming_for_path(target, f.name.as_deref()));
                true
            }
            ExprKind::Class(c) => {
                let exports = if is_export_path(target) { vec![target.to_string()] } else { Vec::new() };
                let last = target.rsplit('.').next().unwrap_or(target);
                let name = if is_export_path(target) && c.name.is_some() { c.name.as_deref() } else { Some(last) };
                self.class(c, name, exports);
                true
            }
            _ => false,
        }
    }

    fn call(&mut self, callee: &Expr, args: &[Expr], is_new: bool, line: u32) {
        let name = callee.terminal_name().map(str::to_string);
        let scope = self.closures.clone();
        if let Some(id) = self.cur {
            if let Some(n) = &name {
                self.edges.push(CallEdge {
                    caller: id,
                    callee: n.clone(),
                    line,
                });
            }
            self.facts[id].calls.push(CallSite {
                callee: callee.clone(),
                name: name.clone(),
                args: args.to_vec(),
                is_new,
                line,
                scope,
            });
        }

        // Callback parameters bound from the receiver.
        if let ExprKind::Member {
            object,
            prop: MemberProp::Name(m),
            ..
        } = &callee.kind
        {
            for (method, arg_idx, param_idx, mode) in CALLBACK_METHODS {
                if m != method {
                    continue;
                }
                if let Some(Expr {
                    kind: ExprKind::Function(f),
                    ..
                }) = args.get(*arg_idx)
                {
                    if let Some(p) = f.params.get(*param_idx) {
                        self.bind_param(p, object, *mode, f.start_line);
                    }
                }
            }
        }
        // Immediately invoked function: parameters bound from arguments.
        if let ExprKind::Function(f) = &callee.kind {
            for (p, a) in f.params.iter().zip(args) {
                self.bind_param(p, a, BindMode::Value, f.start_line);
            }
        }

        self.visit_expr(callee);
        for a in args {
            self.visit_expr(a);
        }
    }

    fn bind_param(&mut self, p: &Pattern, value: &Expr, mode: BindMode, closure_line: u32) {
        let targets = p.bound_names();
        if targets.is_empty() {
            return;
        }
        let scope = self.closures.clone();
        let mut target_scope = scope.clone();
        target_scope.push(closure_line);
        if let Some(f) = self.facts() {
            f.bindings.push(Binding {
                targets,
                destructured: p.is_destructuring(),
                value: value.clone(),
                mode,
                compound: false,
                line: closure_line,
                scope,
                target_scope,
            });
        }
    }

    fn declarators(&mut self, decls: &[VarDeclarator]) {
        for d in decls {
            let Some(init) = &d.init else {
                self.visit_pattern(&d.target);
                continue;
            };
            let target = pattern_path(&d.target);
            if self.define(target.as_deref(), init) {
                continue;
            }
            if let (Some(t), ExprKind::Object(props)) = (&target, &init.kind) {
                self.object_literal(props, Some(t));
            } else {
                self.visit_expr(init);
            }
            self.visit_pattern(&d.target);
            self.bind(
                d.target.bound_names(),
                d.target.is_destructuring(),
                init,
                BindMode::Value,
                false,
                d.line,
            );
        }
    }

    fn computed_write(&mut self, target: &Expr, value: &Expr, line: u32) {
        let mut keys = Vec::new();
        let mut cur = target;
        while let ExprKind::Member {
            object,
            prop: MemberProp::Computed(k),
            ..
        } = &cur.kind
        {
            keys.push((**k).clone());
            cur = object;
        }
        if keys.is_empty() {
            return;
        }
        let scope = self.closures.clone();
        if let Some(f) = self.facts() {
            f.writes.push(ComputedWrite {
                keys,
                value: value.clone(),
                line,
                scope,
            });
        }
    }
}

impl Visitor for Builder<'_> {
    fn visit_stmt(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::VarDecl(_, decls) => self.declarators(decls),
            StmtKind::Function(f) => {
                let name = f.name.clone().unwrap_or_else(|| "anonymous".into());
                self.named_function(f, Naming::plain(&name));
            }
            StmtKind::Class(c) => self.class(c, None, Vec::new()),
            StmtKind::Return(Some(e)) => {
                if self.closures.is_empty() {
                    if let Some(f) = self.facts() {
                        f.returns.push(ReturnFact {
                            value: e.clone(),
                            line: stmt.line,
                        });
                    }
                }
                self.visit_expr(e);
            }
            StmtKind::For {
                init: Some(ForInit::Var(_, decls)),
                test,
                update,
                body,
            } => {
                self.declarators(decls);
                if let Some(t) = test {
                    self.visit_expr(t);
                }
                if let Some(u) = update {
                    self.visit_expr(u);
                }
                self.visit_stmt(body);
            }
            StmtKind::ForInOf { left, right, body, of } => {
                let mode = if *of { BindMode::Elements } else { BindMode::Keys };
                self.bind(pattern_targets(left), left.is_destructuring(), right, mode, false, stmt.line);
                self.visit_expr(right);
                self.visit_stmt(body);
            }
            StmtKind::ExportDecl(inner) => match &inner.kind {
                StmtKind::Function(f) => {
                    let name = f.name.clone().unwrap_or_else(|| "default".into());
                    let mut naming = Naming::plain(&name);
                    naming.export_names.push(format!("exports.{name}"));
                    self.named_function(f, naming);
                }
                StmtKind::Class(c) => {
                    let exports = c.name.iter().map(|n| format!("exports.{n}")).collect();
                    self.class(c, None, exports);
                }
                _ => self.visit_stmt(inner),
            },
            StmtKind::ExportDefault(e) => match &e.kind {
                ExprKind::Function(f) => {
                    let name = f.name.clone().unwrap_or_else(|| "default".into());
                    let mut naming = Naming::plain(&name);
                    naming.export_names.push("module.exports".into());
                    self.named_function(f, naming);
                }
                ExprKind::Class(c) => self.class(c, None, vec!["module.exports".into()]),
                _ => self.visit_expr(e),
            },
            _ => visit::walk_stmt(self, stmt),
        }
    }

    fn visit_expr(&mut self, expr: &Expr) {
        match &expr.kind {
            ExprKind::Assign { op, target, value } => {
                let path = pattern_path(target);
                if *op == "=" && self.define(path.as_deref(), value) {
                    return;
                }
                if let (Some(p), ExprKind::Ident(n)) = (&path, &value.kind) {
                    if *op == "=" && is_export_path(p) {
                        self.aliases.push((p.clone(), n.clone()));
                    }
                }
                if let (Some(p), ExprKind::Object(props)) = (&path, &value.kind) {
                    self.object_literal(props, Some(p));
                } else {
                    self.visit_expr(value);
                }
                self.visit_pattern(target);
                if let Pattern::Expr(t) = &**target {
                    self.computed_write(t, value, expr.line);
                }
                self.bind(
                    pattern_targets(target),
                    target.is_destructuring(),
                    value,
                    BindMode::Value,
                    *op == "+=",
                    expr.line,
                );
            }
            ExprKind::Call { callee, args, .. } => self.call(callee, args, false, expr.line),
            ExprKind::New { callee, args } => self.call(callee, args, true, expr.line),
            ExprKind::Object(props) => self.object_literal(props, None),
            ExprKind::Class(c) => self.class(c, None, Vec::new()),
            _ => visit::walk_expr(self, expr),
        }
    }

    fn visit_function(&mut self, f: &Function) {
        self.inline_function(f);
    }

    fn visit_class(&mut self, c: &Class) {
        self.class(c, None, Vec::new());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(src: &str) -> CodeModel {
        CodeModel::from_sources("pkg", &[("index.js".into(), src.into())])
    }

    #[test]
    fn indexes_named_functions_only() {
        let m = model(
            "function a(x) { [1].forEach(function (y) { b(y) }) }\nconst b = (z) => z\nclass K { constructor(o) {} run(p) {} }\nK.prototype.extra = function (q) {}\nmodule.exports = { c(r) {}, d: function (s) {} }",
        );
        let names: Vec<_> = m.functions.iter().map(|f| f.qualified_name()).collect();
        assert_eq!(names, ["a", "b", "K.constructor", "K.run", "K.extra", "module.exports.c", "module.exports.d"]);
        assert_eq!(m.functions[2].kind, ApiKind::Constructor);
        assert_eq!(m.functions[5].export_names, ["module.exports.c"]);
    }

    #[test]
    fn callback_facts_are_inlined_with_closure_line() {
        let m = model("function f(o) {\n  Object.keys(o).forEach((k) => {\n    g(o[k])\n  })\n}");
        let facts = &m.facts[0];
        let bind = facts.bindings.iter().find(|b| b.targets == ["k"]).unwrap();
        assert_eq!(bind.mode, BindMode::Elements);
        assert_eq!(bind.target_scope, [2]);
        let g = facts.calls.iter().find(|c| c.name.as_deref() == Some("g")).unwrap();
        assert_eq!(g.scope, [2]);
        assert_eq!(g.line, 3);
        assert!(m.call_edges.iter().any(|e| e.callee == "g" && e.line == 3));
    }

    #[test]
    fn computed_writes_record_key_chain() {
        let m = model("function set(o, a, b, v) { o[a][b] = v; o.x[a] = v }");
        let w = &m.facts[0].writes;
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].keys.len(), 2);
        assert_eq!(w[1].keys.len(), 1);
    }

    #[test]
    fn unparseable_file_is_skipped() {
        let m = CodeModel::from_sources(
            "pkg",
            &[
                ("a.js".into(), "function ok(x) { return x }".into()),
                ("b.ts".into(), "function bad(x: number) {}".into()),
            ],
        );
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.skipped.len(), 1);
        assert_eq!(m.functions.len(), 1);
    }

    #[test]
    fn returns_of_arrow_expression_bodies() {
        let m = model("const id = (x) => x.trim()\nfunction h(y) { return [1].map((z) => z) }");
        assert_eq!(m.facts[0].returns.len(), 1);
        assert_eq!(m.facts[1].returns.len(), 1);
    }
}
