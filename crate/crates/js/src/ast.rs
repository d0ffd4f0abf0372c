//! Syntax tree for the supported JavaScript subset.
//!
//! Every statement and expression records the line it starts on. Function and
//! class nodes also record the line of their closing brace.

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: u32,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Var,
    Let,
    Const,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDeclarator {
    pub line: u32,
    pub target: Pattern,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForInit {
    Var(VarKind, Vec<VarDeclarator>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCase {
    pub test: Option<Expr>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatchClause {
    pub param: Option<Pattern>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportBinding {
    /// `None` for namespace and default imports.
    pub imported: Option<String>,
    pub local: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    VarDecl(VarKind, Vec<VarDeclarator>),
    Function(Function),
    Class(Class),
    Expr(Expr),
    Return(Option<Expr>),
    If {
        test: Expr,
        cons: Box<Stmt>,
        alt: Option<Box<Stmt>>,
    },
    For {
        init: Option<ForInit>,
        test: Option<Expr>,
        update: Option<Expr>,
        body: Box<Stmt>,
    },
    ForInOf {
        left: Pattern,
        right: Expr,
        body: Box<Stmt>,
        of: bool,
    },
    While {
        test: Expr,
        body: Box<Stmt>,
    },
    DoWhile {
        body: Box<Stmt>,
        test: Expr,
    },
    Block(Vec<Stmt>),
    Try {
        block: Vec<Stmt>,
        handler: Option<CatchClause>,
        finalizer: Option<Vec<Stmt>>,
    },
    Throw(Expr),
    Switch {
        discriminant: Expr,
        cases: Vec<SwitchCase>,
    },
    Labeled(String, Box<Stmt>),
    Break,
    Continue,
    Empty,
    Import {
        bindings: Vec<ImportBinding>,
        source: String,
    },
    /// `export <declaration>`
    ExportDecl(Box<Stmt>),
    ExportDefault(Expr),
    /// `export { local as exported }`, optionally re-exported from a module.
    ExportNamed {
        specifiers: Vec<(String, String)>,
        source: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    Ident(String),
    Object(Vec<PatternProp>),
    Array(Vec<Option<Pattern>>),
    Default(Box<Pattern>, Box<Expr>),
    Rest(Box<Pattern>),
    /// Member expression used as an assignment target.
    Expr(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternProp {
    KeyValue(PropKey, Pattern),
    Rest(Pattern),
}

impl Pattern {
    /// Identifiers bound by this pattern, in source order.
    pub fn bound_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut Vec<String>) {
        match self {
            Pattern::Ident(n) => out.push(n.clone()),
            Pattern::Object(props) => {
                for p in props {
                    match p {
                        PatternProp::KeyValue(_, v) | PatternProp::Rest(v) => v.collect_names(out),
                    }
                }
            }
            Pattern::Array(items) => {
                for p in items.iter().flatten() {
                    p.collect_names(out);
                }
            }
            Pattern::Default(p, _) | Pattern::Rest(p) => p.collect_names(out),
            Pattern::Expr(_) => {}
        }
    }

    /// True for object and array destructuring (possibly under a default).
    pub fn is_destructuring(&self) -> bool {
        match self {
            Pattern::Object(_) | Pattern::Array(_) => true,
            Pattern::Default(p, _) => p.is_destructuring(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionBody {
    Block(Vec<Stmt>),
    Expr(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: Option<String>,
    pub params: Vec<Pattern>,
    pub body: FunctionBody,
    pub is_async: bool,
    pub is_generator: bool,
    pub is_arrow: bool,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberKind {
    Constructor,
    Method,
    Getter,
    Setter,
    Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMember {
    pub key: PropKey,
    pub is_static: bool,
    pub kind: MemberKind,
    /// Present for constructors, methods and accessors.
    pub function: Option<Function>,
    /// Initializer of a field.
    pub value: Option<Expr>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Class {
    pub name: Option<String>,
    pub super_class: Option<Box<Expr>>,
    pub members: Vec<ClassMember>,
    pub start_line: u32,
    pub end_line: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropKey {
    Ident(String),
    Str(String),
    Num(String),
    Private(String),
    Computed(Box<Expr>),
}

impl PropKey {
    /// Static name of the key, if it has one.
    pub fn name(&self) -> Option<&str> {
        match self {
            PropKey::Ident(s) | PropKey::Str(s) | PropKey::Num(s) => Some(s),
            PropKey::Private(_) | PropKey::Computed(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropKind {
    Init,
    Shorthand,
    Method,
    Getter,
    Setter,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prop {
    Property { key: PropKey, value: Expr, kind: PropKind },
    /// `{ a = 1 }` is only valid when the literal is reinterpreted as a pattern.
    ShorthandDefault { name: String, default: Expr },
    Spread(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemberProp {
    Name(String),
    Private(String),
    Computed(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub line: u32,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Ident(String),
    This,
    Super,
    Num(String),
    Str(String),
    Bool(bool),
    Null,
    Template {
        quasis: Vec<String>,
        exprs: Vec<Expr>,
    },
    TaggedTemplate {
        tag: Box<Expr>,
        quasis: Vec<String>,
        exprs: Vec<Expr>,
    },
    Regex {
        pattern: String,
        flags: String,
    },
    Array(Vec<Option<Expr>>),
    Object(Vec<Prop>),
    Function(Box<Function>),
    Class(Box<Class>),
    Member {
        object: Box<Expr>,
        prop: MemberProp,
        optional: bool,
    },
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
        optional: bool,
    },
    New {
        callee: Box<Expr>,
        args: Vec<Expr>,
    },
    Unary {
        op: &'static str,
        arg: Box<Expr>,
    },
    Update {
        op: &'static str,
        prefix: bool,
        arg: Box<Expr>,
    },
    Binary {
        op: &'static str,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Logical {
        op: &'static str,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Conditional {
        test: Box<Expr>,
        cons: Box<Expr>,
        alt: Box<Expr>,
    },
    Assign {
        op: &'static str,
        target: Box<Pattern>,
        value: Box<Expr>,
    },
    Sequence(Vec<Expr>),
    Spread(Box<Expr>),
    Await(Box<Expr>),
    Yield(Option<Box<Expr>>),
}

impl Expr {
    pub fn new(line: u32, kind: ExprKind) -> Self {
        Self { line, kind }
    }

    /// Dotted text of an identifier/member chain with static names, e.g.
    /// `this.options.cwd` or `fs.promises.readFile`.
    pub fn member_path(&self) -> Option<String> {
        match &self.kind {
            ExprKind::Ident(n) => Some(n.clone()),
            ExprKind::This => Some("this".to_string()),
            ExprKind::Member {
                object,
                prop: MemberProp::Name(name),
                ..
            } => object.member_path().map(|base| format!("{base}.{name}")),
            _ => None,
        }
    }

    /// Final static name of a callee: `exec` for `child.exec`, `f` for `f`.
    pub fn terminal_name(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Ident(n) => Some(n),
            ExprKind::Member { prop, .. } => match prop {
                MemberProp::Name(n) => Some(n),
                MemberProp::Computed(e) => match &e.kind {
                    ExprKind::Str(s) => Some(s),
                    _ => None,
                },
                MemberProp::Private(_) => None,
            },
            _ => None,
        }
    }
}
