//! Read-only traversal over the syntax tree.
//!
//! Implementors override the hooks they care about and call the matching
//! `walk_*` function to keep descending.

use crate::ast::*;

pub trait Visitor {
    fn visit_stmt(&mut self, stmt: &Stmt) {
        walk_stmt(self, stmt);
    }

    fn visit_expr(&mut self, expr: &Expr) {
        walk_expr(self, expr);
    }

    fn visit_function(&mut self, f: &Function) {
        walk_function(self, f);
    }

    fn visit_class(&mut self, c: &Class) {
        walk_class(self, c);
    }

    fn visit_pattern(&mut self, p: &Pattern) {
        walk_pattern(self, p);
    }
}

pub fn walk_program<V: Visitor + ?Sized>(v: &mut V, program: &Program) {
    for s in &program.body {
        v.visit_stmt(s);
    }
}

pub fn walk_stmts<V: Visitor + ?Sized>(v: &mut V, stmts: &[Stmt]) {
    for s in stmts {
        v.visit_stmt(s);
    }
}

pub fn walk_stmt<V: Visitor + ?Sized>(v: &mut V, stmt: &Stmt) {
    match &stmt.kind {
        StmtKind::VarDecl(_, decls) => walk_declarators(v, decls),
        StmtKind::Function(f) => v.visit_function(f),
        StmtKind::Class(c) => v.visit_class(c),
        StmtKind::Expr(e) | StmtKind::Throw(e) | StmtKind::ExportDefault(e) => v.visit_expr(e),
        StmtKind::Return(e) => {
            if let Some(e) = e {
                v.visit_expr(e);
            }
        }
        StmtKind::If { test, cons, alt } => {
            v.visit_expr(test);
            v.visit_stmt(cons);
            if let Some(alt) = alt {
                v.visit_stmt(alt);
            }
        }
        StmtKind::For {
            init,
            test,
            update,
            body,
        } => {
            match init {
                Some(ForInit::Var(_, decls)) => walk_declarators(v, decls),
                Some(ForInit::Expr(e)) => v.visit_expr(e),
                None => {}
            }
            if let Some(t) = test {
                v.visit_expr(t);
            }
            if let Some(u) = update {
                v.visit_expr(u);
            }
            v.visit_stmt(body);
        }
        StmtKind::ForInOf { left, right, body, .. } => {
            v.visit_pattern(left);
            v.visit_expr(right);
            v.visit_stmt(body);
        }
        StmtKind::While { test, body } | StmtKind::DoWhile { body, test } => {
            v.visit_expr(test);
            v.visit_stmt(body);
        }
        StmtKind::Block(stmts) => walk_stmts(v, stmts),
        StmtKind::Try {
            block,
            handler,
            finalizer,
        } => {
            walk_stmts(v, block);
            if let Some(h) = handler {
                if let Some(p) = &h.param {
                    v.visit_pattern(p);
                }
                walk_stmts(v, &h.body);
            }
            if let Some(f) = finalizer {
                walk_stmts(v, f);
            }
        }
        StmtKind::Switch { discriminant, cases } => {
            v.visit_expr(discriminant);
            for c in cases {
                if let Some(t) = &c.test {
                    v.visit_expr(t);
                }
                walk_stmts(v, &c.body);
            }
        }
        StmtKind::Labeled(_, body) | StmtKind::ExportDecl(body) => v.visit_stmt(body),
        StmtKind::Break
        | StmtKind::Continue
        | StmtKind::Empty
        | StmtKind::Import { .. }
        | StmtKind::ExportNamed { .. } => {}
    }
}

fn walk_declarators<V: Visitor + ?Sized>(v: &mut V, decls: &[VarDeclarator]) {
    for d in decls {
        v.visit_pattern(&d.target);
        if let Some(init) = &d.init {
            v.visit_expr(init);
        }
    }
}

pub fn walk_function<V: Visitor + ?Sized>(v: &mut V, f: &Function) {
    for p in &f.params {
        v.visit_pattern(p);
    }
    match &f.body {
        FunctionBody::Block(stmts) => walk_stmts(v, stmts),
        FunctionBody::Expr(e) => v.visit_expr(e),
    }
}

pub fn walk_class<V: Visitor + ?Sized>(v: &mut V, c: &Class) {
    if let Some(s) = &c.super_class {
        v.visit_expr(s);
    }
    for m in &c.members {
        if let PropKey::Computed(e) = &m.key {
            v.visit_expr(e);
        }
        if let Some(f) = &m.function {
            v.visit_function(f);
        }
        if let Some(val) = &m.value {
            v.visit_expr(val);
        }
    }
}

pub fn walk_pattern<V: Visitor + ?Sized>(v: &mut V, p: &Pattern) {
    match p {
        Pattern::Ident(_) => {}
        Pattern::Object(props) => {
            for prop in props {
                match prop {
                    PatternProp::KeyValue(key, val) => {
                        if let PropKey::Computed(e) = key {
                            v.visit_expr(e);
                        }
                        v.visit_pattern(val);
                    }
                    PatternProp::Rest(val) => v.visit_pattern(val),
                }
            }
        }
        Pattern::Array(items) => {
            for item in items.iter().flatten() {
                v.visit_pattern(item);
            }
        }
        Pattern::Default(p, e) => {
            v.visit_pattern(p);
            v.visit_expr(e);
        }
        Pattern::Rest(p) => v.visit_pattern(p),
        Pattern::Expr(e) => v.visit_expr(e),
    }
}

pub fn walk_expr<V: Visitor + ?Sized>(v: &mut V, expr: &Expr) {
    match &expr.kind {
        ExprKind::Ident(_)
        | ExprKind::This
        | ExprKind::Super
        | ExprKind::Num(_)
        | ExprKind::Str(_)
        | ExprKind::Bool(_)
        | ExprKind::Null
        | ExprKind::Regex { .. } => {}
        ExprKind::Template { exprs, .. } => {
            for e in exprs {
                v.visit_expr(e);
            }
        }
        ExprKind::TaggedTemplate { tag, exprs, .. } => {
            v.visit_expr(tag);
            for e in exprs {
                v.visit_expr(e);
            }
        }
        ExprKind::Array(items) => {
            for e in items.iter().flatten() {
                v.visit_expr(e);
            }
        }
        ExprKind::Object(props) => {
            for p in props {
                match p {
                    Prop::Property { key, value, .. } => {
                        if let PropKey::Computed(e) = key {
                            v.visit_expr(e);
                        }
                        v.visit_expr(value);
                    }
                    Prop::ShorthandDefault { default, .. } => v.visit_expr(default),
                    Prop::Spread(e) => v.visit_expr(e),
                }
            }
        }
        ExprKind::Function(f) => v.visit_function(f),
        ExprKind::Class(c) => v.visit_class(c),
        ExprKind::Member { object, prop, .. } => {
            v.visit_expr(object);
            if let MemberProp::Computed(e) = prop {
                v.visit_expr(e);
            }
        }
        ExprKind::Call { callee, args, .. } | ExprKind::New { callee, args } => {
            v.visit_expr(callee);
            for a in args {
                v.visit_expr(a);
            }
        }
        ExprKind::Unary { arg, .. } | ExprKind::Update { arg, .. } => v.visit_expr(arg),
        ExprKind::Binary { left, right, .. } | ExprKind::Logical { left, right, .. } => {
            v.visit_expr(left);
            v.visit_expr(right);
        }
        ExprKind::Conditional { test, cons, alt } => {
            v.visit_expr(test);
            v.visit_expr(cons);
            v.visit_expr(alt);
        }
        ExprKind::Assign { target, value, .. } => {
            v.visit_pattern(target);
            v.visit_expr(value);
        }
        ExprKind::Sequence(items) => {
            for e in items {
                v.visit_expr(e);
            }
        }
        ExprKind::Spread(e) | ExprKind::Await(e) => v.visit_expr(e),
        ExprKind::Yield(e) => {
            if let Some(e) = e {
                v.visit_expr(e);
            }
        }
    }
}
