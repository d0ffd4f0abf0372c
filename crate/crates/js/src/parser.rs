//! Recursive-descent parser producing [`crate::ast`] trees.
//!
//! Covers ES2020-era scripts and modules without JSX or type annotations.
//! Automatic semicolon insertion follows the newline rule: a statement may end
//! wherever the next token is `}`, end of input, or starts a new line.

use crate::ast::*;
use crate::error::{ParseError, Result};
use crate::lexer::{tokenize, Token, TokenKind};

const RESERVED: &[&str] = &[
    "break", "case", "catch", "const", "continue", "debugger", "default", "do", "else", "export",
    "extends", "finally", "for", "if", "in", "instanceof", "return", "switch", "throw", "try",
    "var", "while", "with",
];

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "**=", "<<=", ">>=", ">>>=", "&=", "|=", "^=", "&&=", "||=",
    "??=",
];

pub fn parse(src: &str) -> Result<Program> {
    let tokens = tokenize(src)?;
    let mut p = Parser::new(tokens);
    let mut body = Vec::new();
    while !p.at_eof() {
        body.push(p.statement()?);
    }
    Ok(Program { body })
}

/// Parses a single expression, e.g. a debugger watch expression.
pub fn parse_expression(src: &str) -> Result<Expr> {
    let tokens = tokenize(src)?;
    let mut p = Parser::new(tokens);
    let e = p.expression()?;
    if !p.at_eof() {
        return Err(p.unexpected());
    }
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    no_in: bool,
    last_line: u32,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Self {
            tokens,
            pos: 0,
            no_in: false,
            last_line: 1,
        }
    }

    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_at(&self, off: usize) -> &Token {
        &self.tokens[(self.pos + off).min(self.tokens.len() - 1)]
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn line(&self) -> u32 {
        self.peek().line
    }

    fn bump(&mut self) -> Token {
        let t = self.peek().clone();
        if !matches!(t.kind, TokenKind::Eof) {
            self.pos += 1;
            self.last_line = t.line;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        self.peek().is_punct(p)
    }

    fn is_ident(&self, name: &str) -> bool {
        self.peek().is_ident(name)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, name: &str) -> bool {
        if self.is_ident(name) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(ParseError::new(
                self.line(),
                format!("expected `{p}`, found {}", describe(self.peek())),
            ))
        }
    }

    fn expect_ident_kw(&mut self, name: &str) -> Result<()> {
        if self.eat_ident(name) {
            Ok(())
        } else {
            Err(ParseError::new(
                self.line(),
                format!("expected `{name}`, found {}", describe(self.peek())),
            ))
        }
    }

    fn unexpected(&self) -> ParseError {
        ParseError::new(self.line(), format!("unexpected {}", describe(self.peek())))
    }

    fn binding_ident(&mut self) -> Result<String> {
        match &self.peek().kind {
            TokenKind::Ident(n) if !RESERVED.contains(&n.as_str()) => {
                let n = n.clone();
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn consume_semicolon(&mut self) -> Result<()> {
        if self.eat_punct(";") || self.is_punct("}") || self.at_eof() || self.peek().nl_before {
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    /// Index of the token closing the bracket at `open`.
    fn matching(&self, open: usize) -> Option<usize> {
        let mut depth = 0i32;
        for (i, t) in self.tokens.iter().enumerate().skip(open) {
            match &t.kind {
                TokenKind::Punct("(" | "[" | "{") => depth += 1,
                TokenKind::Punct(")" | "]" | "}") => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                TokenKind::Eof => return None,
                _ => {}
            }
        }
        None
    }

    // ----- statements -----

    fn statement(&mut self) -> Result<Stmt> {
        let line = self.line();
        let kind = self.statement_kind()?;
        Ok(Stmt { line, kind })
    }

    fn block_body(&mut self) -> Result<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut body = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return Err(self.unexpected());
            }
            body.push(self.statement()?);
        }
        self.bump();
        Ok(body)
    }

    fn statement_kind(&mut self) -> Result<StmtKind> {
        if self.is_punct("{") {
            return Ok(StmtKind::Block(self.block_body()?));
        }
        if self.eat_punct(";") {
            return Ok(StmtKind::Empty);
        }
        let Some(word) = self.peek().ident().map(str::to_string) else {
            return self.expression_statement();
        };
        match word.as_str() {
            "var" | "const" => {
                self.bump();
                let kind = if word == "var" { VarKind::Var } else { VarKind::Const };
                let decls = self.var_declarators()?;
                self.consume_semicolon()?;
                Ok(StmtKind::VarDecl(kind, decls))
            }
            "let" if matches!(&self.peek_at(1).kind, TokenKind::Ident(_) | TokenKind::Punct("[" | "{")) => {
                self.bump();
                let decls = self.var_declarators()?;
                self.consume_semicolon()?;
                Ok(StmtKind::VarDecl(VarKind::Let, decls))
            }
            "function" => Ok(StmtKind::Function(self.function(false, true)?)),
            "async" if self.peek_at(1).is_ident("function") && !self.peek_at(1).nl_before => {
                self.bump();
                Ok(StmtKind::Function(self.function(true, true)?))
            }
            "class" => Ok(StmtKind::Class(self.class(true)?)),
            "if" => {
                self.bump();
                self.expect_punct("(")?;
                let test = self.expression()?;
                self.expect_punct(")")?;
                let cons = Box::new(self.statement()?);
                let alt = if self.eat_ident("else") {
                    Some(Box::new(self.statement()?))
                } else {
                    None
                };
                Ok(StmtKind::If { test, cons, alt })
            }
            "for" => self.for_statement(),
            "while" => {
                self.bump();
                self.expect_punct("(")?;
                let test = self.expression()?;
                self.expect_punct(")")?;
                let body = Box::new(self.statement()?);
                Ok(StmtKind::While { test, body })
            }
            "do" => {
                self.bump();
                let body = Box::new(self.statement()?);
                self.expect_ident_kw("while")?;
                self.expect_punct("(")?;
                let test = self.expression()?;
                self.expect_punct(")")?;
                self.eat_punct(";");
                Ok(StmtKind::DoWhile { body, test })
            }
            "return" => {
                self.bump();
                let arg = if self.is_punct(";") || self.is_punct("}") || self.at_eof() || self.peek().nl_before {
                    None
                } else {
                    Some(self.expression()?)
                };
                self.consume_semicolon()?;
                Ok(StmtKind::Return(arg))
            }
            "throw" => {
                self.bump();
                let e = self.expression()?;
                self.consume_semicolon()?;
                Ok(StmtKind::Throw(e))
            }
            "try" => {
                self.bump();
                let block = self.block_body()?;
                let handler = if self.eat_ident("catch") {
                    let param = if self.eat_punct("(") {
                        let p = self.binding_target()?;
                        self.expect_punct(")")?;
                        Some(p)
                    } else {
                        None
                    };
                    Some(CatchClause {
                        param,
                        body: self.block_body()?,
                    })
                } else {
                    None
                };
                let finalizer = if self.eat_ident("finally") {
                    Some(self.block_body()?)
                } else {
                    None
                };
                if handler.is_none() && finalizer.is_none() {
                    return Err(self.unexpected());
                }
                Ok(StmtKind::Try {
                    block,
                    handler,
                    finalizer,
                })
            }
            "switch" => self.switch_statement(),
            "break" | "continue" => {
                self.bump();
                if !self.peek().nl_before && matches!(self.peek().kind, TokenKind::Ident(_)) {
                    self.bump();
                }
                self.consume_semicolon()?;
                Ok(if word == "break" { StmtKind::Break } else { StmtKind::Continue })
            }
            "debugger" => {
                self.bump();
                self.consume_semicolon()?;
                Ok(StmtKind::Empty)
            }
            "import" if !self.peek_at(1).is_punct("(") && !self.peek_at(1).is_punct(".") => {
                self.import_declaration()
            }
            "export" => self.export_declaration(),
            _ if self.peek_at(1).is_punct(":") && !RESERVED.contains(&word.as_str()) => {
                self.bump();
                self.bump();
                let body = Box::new(self.statement()?);
                Ok(StmtKind::Labeled(word, body))
            }
            _ => self.expression_statement(),
        }
    }

    fn expression_statement(&mut self) -> Result<StmtKind> {
        let e = self.expression()?;
        self.consume_semicolon()?;
        Ok(StmtKind::Expr(e))
    }

    fn var_declarators(&mut self) -> Result<Vec<VarDeclarator>> {
        let mut decls = Vec::new();
        loop {
            let line = self.line();
            let target = self.binding_target()?;
            let init = if self.eat_punct("=") {
                Some(self.assign()?)
            } else {
                None
            };
            decls.push(VarDeclarator { line, target, init });
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(decls)
    }

    fn for_statement(&mut self) -> Result<StmtKind> {
        self.bump();
        self.eat_ident("await");
        self.expect_punct("(")?;
        let mut init = None;
        if !self.is_punct(";") {
            let decl_kind = match self.peek().ident() {
                Some("var") => Some(VarKind::Var),
                Some("const") => Some(VarKind::Const),
                Some("let") if matches!(&self.peek_at(1).kind, TokenKind::Ident(_) | TokenKind::Punct("[" | "{")) => {
                    Some(VarKind::Let)
                }
                _ => None,
            };
            let saved = self.no_in;
            self.no_in = true;
            if let Some(kind) = decl_kind {
                self.bump();
                let decls = self.var_declarators();
                self.no_in = saved;
                let decls = decls?;
                if let Some(of) = self.for_in_of_keyword() {
                    let [decl] = <[VarDeclarator; 1]>::try_from(decls).map_err(|_| self.unexpected())?;
                    return self.for_in_of_rest(decl.target, of);
                }
                init = Some(ForInit::Var(kind, decls));
            } else {
                let e = self.expression();
                self.no_in = saved;
                let e = e?;
                if let Some(of) = self.for_in_of_keyword() {
                    let target = expr_to_pattern(e)?;
                    return self.for_in_of_rest(target, of);
                }
                init = Some(ForInit::Expr(e));
            }
        }
        self.expect_punct(";")?;
        let test = if self.is_punct(";") { None } else { Some(self.expression()?) };
        self.expect_punct(";")?;
        let update = if self.is_punct(")") { None } else { Some(self.expression()?) };
        self.expect_punct(")")?;
        let body = Box::new(self.statement()?);
        Ok(StmtKind::For {
            init,
            test,
            update,
            body,
        })
    }

    fn for_in_of_keyword(&mut self) -> Option<bool> {
        if self.eat_ident("of") {
            Some(true)
        } else if self.eat_ident("in") {
            Some(false)
        } else {
            None
        }
    }

    fn for_in_of_rest(&mut self, left: Pattern, of: bool) -> Result<StmtKind> {
        let right = if of { self.assign()? } else { self.expression()? };
        self.expect_punct(")")?;
        let body = Box::new(self.statement()?);
        Ok(StmtKind::ForInOf { left, right, body, of })
    }

    fn switch_statement(&mut self) -> Result<StmtKind> {
        self.bump();
        self.expect_punct("(")?;
        let discriminant = self.expression()?;
        self.expect_punct(")")?;
        self.expect_punct("{")?;
        let mut cases = Vec::new();
        while !self.eat_punct("}") {
            let test = if self.eat_ident("case") {
                Some(self.expression()?)
            } else {
                self.expect_ident_kw("default")?;
                None
            };
            self.expect_punct(":")?;
            let mut body = Vec::new();
            while !self.is_ident("case") && !self.is_ident("default") && !self.is_punct("}") {
                if self.at_eof() {
                    return Err(self.unexpected());
                }
                body.push(self.statement()?);
            }
            cases.push(SwitchCase { test, body });
        }
        Ok(StmtKind::Switch { discriminant, cases })
    }

    fn module_source(&mut self) -> Result<String> {
        match self.bump().kind {
            TokenKind::Str(s) => Ok(s),
            _ => Err(ParseError::new(self.last_line, "expected module specifier")),
        }
    }

    fn module_name(&mut self) -> Result<String> {
        match self.bump().kind {
            TokenKind::Ident(s) | TokenKind::Str(s) => Ok(s),
            _ => Err(ParseError::new(self.last_line, "expected name")),
        }
    }

    fn import_declaration(&mut self) -> Result<StmtKind> {
        self.bump();
        let mut bindings = Vec::new();
        if let TokenKind::Str(source) = &self.peek().kind {
            let source = source.clone();
            self.bump();
            self.consume_semicolon()?;
            return Ok(StmtKind::Import { bindings, source });
        }
        if matches!(self.peek().kind, TokenKind::Ident(_)) {
            let local = self.binding_ident()?;
            bindings.push(ImportBinding { imported: None, local });
            self.eat_punct(",");
        }
        if self.eat_punct("*") {
            self.expect_ident_kw("as")?;
            let local = self.binding_ident()?;
            bindings.push(ImportBinding { imported: None, local });
        } else if self.eat_punct("{") {
            while !self.eat_punct("}") {
                let imported = self.module_name()?;
                let local = if self.eat_ident("as") {
                    self.binding_ident()?
                } else {
                    imported.clone()
                };
                bindings.push(ImportBinding {
                    imported: Some(imported),
                    local,
                });
                if !self.eat_punct(",") {
                    self.expect_punct("}")?;
                    break;
                }
            }
        }
        self.expect_ident_kw("from")?;
        let source = self.module_source()?;
        self.consume_semicolon()?;
        Ok(StmtKind::Import { bindings, source })
    }

    fn export_declaration(&mut self) -> Result<StmtKind> {
        self.bump();
        if self.eat_ident("default") {
            if self.is_ident("function")
                || (self.is_ident("async") && self.peek_at(1).is_ident("function"))
            {
                let line = self.line();
                let is_async = self.eat_ident("async");
                let f = self.function(is_async, false)?;
                return Ok(StmtKind::ExportDefault(Expr::new(line, ExprKind::Function(Box::new(f)))));
            }
            if self.is_ident("class") {
                let line = self.line();
                let c = self.class(false)?;
                return Ok(StmtKind::ExportDefault(Expr::new(line, ExprKind::Class(Box::new(c)))));
            }
            let e = self.assign()?;
            self.consume_semicolon()?;
            return Ok(StmtKind::ExportDefault(e));
        }
        if self.eat_punct("*") {
            let mut specifiers = Vec::new();
            if self.eat_ident("as") {
                let name = self.module_name()?;
                specifiers.push(("*".to_string(), name));
            }
            self.expect_ident_kw("from")?;
            let source = Some(self.module_source()?);
            self.consume_semicolon()?;
            return Ok(StmtKind::ExportNamed { specifiers, source });
        }
        if self.eat_punct("{") {
            let mut specifiers = Vec::new();
            while !self.eat_punct("}") {
                let local = self.module_name()?;
                let exported = if self.eat_ident("as") {
                    self.module_name()?
                } else {
                    local.clone()
                };
                specifiers.push((local, exported));
                if !self.eat_punct(",") {
                    self.expect_punct("}")?;
                    break;
                }
            }
            let source = if self.eat_ident("from") {
                Some(self.module_source()?)
            } else {
                None
            };
            self.consume_semicolon()?;
            return Ok(StmtKind::ExportNamed { specifiers, source });
        }
        let inner = self.statement()?;
        Ok(StmtKind::ExportDecl(Box::new(inner)))
    }

    // ----- functions and classes -----

    /// Parses `function [*] [name] (params) { body }` starting at `function`.
    fn function(&mut self, is_async: bool, require_name: bool) -> Result<Function> {
        let start_line = if is_async { self.last_line } else { self.line() };
        self.expect_ident_kw("function")?;
        let is_generator = self.eat_punct("*");
        let name = if matches!(self.peek().kind, TokenKind::Ident(_)) && !self.is_punct("(") {
            Some(self.binding_ident()?)
        } else if require_name {
            return Err(self.unexpected());
        } else {
            None
        };
        self.function_rest(name, is_async, is_generator, start_line)
    }

    fn function_rest(
        &mut self,
        name: Option<String>,
        is_async: bool,
        is_generator: bool,
        start_line: u32,
    ) -> Result<Function> {
        let params = self.params()?;
        let saved = self.no_in;
        self.no_in = false;
        let body = self.block_body();
        self.no_in = saved;
        let body = body?;
        Ok(Function {
            name,
            params,
            body: FunctionBody::Block(body),
            is_async,
            is_generator,
            is_arrow: false,
            start_line,
            end_line: self.last_line,
        })
    }

    fn params(&mut self) -> Result<Vec<Pattern>> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        while !self.eat_punct(")") {
            if self.eat_punct("...") {
                params.push(Pattern::Rest(Box::new(self.binding_target()?)));
            } else {
                params.push(self.binding_element()?);
            }
            if !self.eat_punct(",") {
                self.expect_punct(")")?;
                break;
            }
        }
        Ok(params)
    }

    fn binding_element(&mut self) -> Result<Pattern> {
        let target = self.binding_target()?;
        if self.eat_punct("=") {
            let saved = self.no_in;
            self.no_in = false;
            let default = self.assign();
            self.no_in = saved;
            Ok(Pattern::Default(Box::new(target), Box::new(default?)))
        } else {
            Ok(target)
        }
    }

    fn binding_target(&mut self) -> Result<Pattern> {
        if self.eat_punct("[") {
            let mut items = Vec::new();
            while !self.eat_punct("]") {
                if self.is_punct(",") {
                    self.bump();
                    items.push(None);
                    continue;
                }
                if self.eat_punct("...") {
                    items.push(Some(Pattern::Rest(Box::new(self.binding_target()?))));
                } else {
                    items.push(Some(self.binding_element()?));
                }
                if !self.eat_punct(",") {
                    self.expect_punct("]")?;
                    break;
                }
            }
            return Ok(Pattern::Array(items));
        }
        if self.eat_punct("{") {
            let mut props = Vec::new();
            while !self.eat_punct("}") {
                if self.eat_punct("...") {
                    props.push(PatternProp::Rest(self.binding_target()?));
                } else {
                    let key = self.prop_key()?;
                    let value = if self.eat_punct(":") {
                        self.binding_element()?
                    } else {
                        let PropKey::Ident(name) = &key else {
                            return Err(self.unexpected());
                        };
                        let base = Pattern::Ident(name.clone());
                        if self.eat_punct("=") {
                            Pattern::Default(Box::new(base), Box::new(self.assign()?))
                        } else {
                            base
                        }
                    };
                    props.push(PatternProp::KeyValue(key, value));
                }
                if !self.eat_punct(",") {
                    self.expect_punct("}")?;
                    break;
                }
            }
            return Ok(Pattern::Object(props));
        }
        Ok(Pattern::Ident(self.binding_ident()?))
    }

    fn prop_key(&mut self) -> Result<PropKey> {
        let t = self.bump();
        Ok(match t.kind {
            TokenKind::Ident(n) => PropKey::Ident(n),
            TokenKind::Str(s) => PropKey::Str(s),
            TokenKind::Num(n) => PropKey::Num(n),
            TokenKind::PrivateName(n) => PropKey::Private(n),
            TokenKind::Punct("[") => {
                let saved = self.no_in;
                self.no_in = false;
                let e = self.assign();
                self.no_in = saved;
                let e = e?;
                self.expect_punct("]")?;
                PropKey::Computed(Box::new(e))
            }
            _ => return Err(ParseError::new(t.line, format!("unexpected {}", describe(&t)))),
        })
    }

    fn class(&mut self, require_name: bool) -> Result<Class> {
        let start_line = self.line();
        self.expect_ident_kw("class")?;
        let name = if matches!(self.peek().kind, TokenKind::Ident(_)) && !self.is_ident("extends") {
            Some(self.binding_ident()?)
        } else if require_name {
            return Err(self.unexpected());
        } else {
            None
        };
        let super_class = if self.eat_ident("extends") {
            Some(Box::new(self.lhs_expression()?))
        } else {
            None
        };
        self.expect_punct("{")?;
        let mut members = Vec::new();
        while !self.eat_punct("}") {
            if self.eat_punct(";") {
                continue;
            }
            if self.at_eof() {
                return Err(self.unexpected());
            }
            if let Some(m) = self.class_member()? {
                members.push(m);
            }
        }
        Ok(Class {
            name,
            super_class,
            members,
            start_line,
            end_line: self.last_line,
        })
    }

    fn is_modifier(&self, word: &str) -> bool {
        self.is_ident(word) && {
            let next = self.peek_at(1);
            !(next.is_punct("(") || next.is_punct("=") || next.is_punct(";") || next.is_punct("}") || next.is_punct(","))
        }
    }

    fn class_member(&mut self) -> Result<Option<ClassMember>> {
        let line = self.line();
        let is_static = self.is_modifier("static") && {
            self.bump();
            true
        };
        if is_static && self.is_punct("{") {
            self.block_body()?;
            return Ok(None);
        }
        let is_async = self.is_modifier("async") && !self.peek_at(1).nl_before && {
            self.bump();
            true
        };
        let is_generator = self.eat_punct("*");
        let mut kind = MemberKind::Method;
        if self.is_modifier("get") {
            self.bump();
            kind = MemberKind::Getter;
        } else if self.is_modifier("set") {
            self.bump();
            kind = MemberKind::Setter;
        }
        let key_line = self.line();
        let key = self.prop_key()?;
        if self.is_punct("(") {
            if kind == MemberKind::Method && !is_static && key.name() == Some("constructor") {
                kind = MemberKind::Constructor;
            }
            let f = self.function_rest(key.name().map(str::to_string), is_async, is_generator, key_line)?;
            return Ok(Some(ClassMember {
                key,
                is_static,
                kind,
                function: Some(f),
                value: None,
                line,
            }));
        }
        let value = if self.eat_punct("=") { Some(self.assign()?) } else { None };
        self.consume_semicolon()?;
        Ok(Some(ClassMember {
            key,
            is_static,
            kind: MemberKind::Field,
            function: None,
            value,
            line,
        }))
    }

    // ----- expressions -----

    fn expression(&mut self) -> Result<Expr> {
        let first = self.assign()?;
        if !self.is_punct(",") {
            return Ok(first);
        }
        let line = first.line;
        let mut items = vec![first];
        while self.eat_punct(",") {
            items.push(self.assign()?);
        }
        Ok(Expr::new(line, ExprKind::Sequence(items)))
    }

    fn arrow_ahead(&self) -> bool {
        let t = self.peek();
        match &t.kind {
            TokenKind::Ident(n) if n == "async" => {
                let next = self.peek_at(1);
                if next.nl_before {
                    return false;
                }
                if matches!(next.kind, TokenKind::Ident(_)) {
                    return self.peek_at(2).is_punct("=>");
                }
                if next.is_punct("(") {
                    return self
                        .matching(self.pos + 1)
                        .is_some_and(|close| self.tokens.get(close + 1).is_some_and(|t| t.is_punct("=>")));
                }
                false
            }
            TokenKind::Ident(n) if !RESERVED.contains(&n.as_str()) => self.peek_at(1).is_punct("=>"),
            TokenKind::Punct("(") => self
                .matching(self.pos)
                .is_some_and(|close| self.tokens.get(close + 1).is_some_and(|t| t.is_punct("=>"))),
            _ => false,
        }
    }

    fn arrow(&mut self) -> Result<Expr> {
        let start_line = self.line();
        let is_async = self.is_ident("async") && !self.peek_at(1).is_punct("=>") && {
            self.bump();
            true
        };
        let params = if self.is_punct("(") {
            self.params()?
        } else {
            vec![Pattern::Ident(self.binding_ident()?)]
        };
        self.expect_punct("=>")?;
        let body = if self.is_punct("{") {
            let saved = self.no_in;
            self.no_in = false;
            let b = self.block_body();
            self.no_in = saved;
            FunctionBody::Block(b?)
        } else {
            FunctionBody::Expr(Box::new(self.assign()?))
        };
        let f = Function {
            name: None,
            params,
            body,
            is_async,
            is_generator: false,
            is_arrow: true,
            start_line,
            end_line: self.last_line,
        };
        Ok(Expr::new(start_line, ExprKind::Function(Box::new(f))))
    }

    fn assign(&mut self) -> Result<Expr> {
        if self.arrow_ahead() {
            return self.arrow();
        }
        if self.is_ident("yield") && !self.peek_at(1).is_punct("=") {
            let line = self.line();
            self.bump();
            self.eat_punct("*");
            let t = self.peek();
            let ends = t.nl_before
                || matches!(t.kind, TokenKind::Eof | TokenKind::Punct(")" | "]" | "}" | "," | ";" | ":"));
            let arg = if ends { None } else { Some(Box::new(self.assign()?)) };
            return Ok(Expr::new(line, ExprKind::Yield(arg)));
        }
        let lhs = self.conditional()?;
        let op = match &self.peek().kind {
            TokenKind::Punct(p) if ASSIGN_OPS.contains(p) => *p,
            _ => return Ok(lhs),
        };
        self.bump();
        let line = lhs.line;
        let target = if op == "=" {
            expr_to_pattern(lhs)?
        } else {
            Pattern::Expr(Box::new(lhs))
        };
        let value = self.assign()?;
        Ok(Expr::new(
            line,
            ExprKind::Assign {
                op,
                target: Box::new(target),
                value: Box::new(value),
            },
        ))
    }

    fn conditional(&mut self) -> Result<Expr> {
        let test = self.binary(0)?;
        if !self.eat_punct("?") {
            return Ok(test);
        }
        let saved = self.no_in;
        self.no_in = false;
        let cons = self.assign();
        self.no_in = saved;
        let cons = cons?;
        self.expect_punct(":")?;
        let alt = self.assign()?;
        let line = test.line;
        Ok(Expr::new(
            line,
            ExprKind::Conditional {
                test: Box::new(test),
                cons: Box::new(cons),
                alt: Box::new(alt),
            },
        ))
    }

    fn binary_op(&self) -> Option<(&'static str, u8)> {
        let t = self.peek();
        let op: &'static str = match &t.kind {
            TokenKind::Punct(p) => p,
            TokenKind::Ident(n) if n == "instanceof" => "instanceof",
            TokenKind::Ident(n) if n == "in" && !self.no_in => "in",
            _ => return None,
        };
        let prec = match op {
            "??" => 1,
            "||" => 2,
            "&&" => 3,
            "|" => 4,
            "^" => 5,
            "&" => 6,
            "==" | "!=" | "===" | "!==" => 7,
            "<" | ">" | "<=" | ">=" | "instanceof" | "in" => 8,
            "<<" | ">>" | ">>>" => 9,
            "+" | "-" => 10,
            "*" | "/" | "%" => 11,
            "**" => 12,
            _ => return None,
        };
        Some((op, prec))
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut left = self.unary()?;
        while let Some((op, prec)) = self.binary_op() {
            if prec < min_prec {
                break;
            }
            self.bump();
            // `**` is right associative.
            let next_min = if op == "**" { prec } else { prec + 1 };
            let right = self.binary(next_min)?;
            let line = left.line;
            let kind = if matches!(op, "||" | "&&" | "??") {
                ExprKind::Logical {
                    op,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            } else {
                ExprKind::Binary {
                    op,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            };
            left = Expr::new(line, kind);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr> {
        let line = self.line();
        let t = self.peek().clone();
        let op: Option<&'static str> = match &t.kind {
            TokenKind::Punct(p @ ("!" | "~" | "+" | "-")) => Some(p),
            TokenKind::Ident(n) => match n.as_str() {
                "typeof" => Some("typeof"),
                "void" => Some("void"),
                "delete" => Some("delete"),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let arg = self.unary()?;
            return Ok(Expr::new(line, ExprKind::Unary { op, arg: Box::new(arg) }));
        }
        if let TokenKind::Punct(op @ ("++" | "--")) = t.kind {
            self.bump();
            let arg = self.unary()?;
            return Ok(Expr::new(
                line,
                ExprKind::Update {
                    op,
                    prefix: true,
                    arg: Box::new(arg),
                },
            ));
        }
        if t.is_ident("await") && self.starts_operand(self.peek_at(1)) {
            self.bump();
            let arg = self.unary()?;
            return Ok(Expr::new(line, ExprKind::Await(Box::new(arg))));
        }
        let e = self.lhs_expression()?;
        if let TokenKind::Punct(op @ ("++" | "--")) = self.peek().kind {
            if !self.peek().nl_before {
                self.bump();
                return Ok(Expr::new(
                    line,
                    ExprKind::Update {
                        op,
                        prefix: false,
                        arg: Box::new(e),
                    },
                ));
            }
        }
        Ok(e)
    }

    fn starts_operand(&self, t: &Token) -> bool {
        match &t.kind {
            TokenKind::Ident(n) => !matches!(n.as_str(), "in" | "instanceof" | "of"),
            TokenKind::Num(_) | TokenKind::Str(_) | TokenKind::Template(_) | TokenKind::Regex { .. } => true,
            TokenKind::Punct(p) => matches!(*p, "(" | "[" | "{" | "!" | "~" | "+" | "-" | "++" | "--"),
            _ => false,
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>> {
        self.expect_punct("(")?;
        let saved = self.no_in;
        self.no_in = false;
        let mut args = Vec::new();
        let result = (|| {
            while !self.eat_punct(")") {
                let line = self.line();
                if self.eat_punct("...") {
                    let e = self.assign()?;
                    args.push(Expr::new(line, ExprKind::Spread(Box::new(e))));
                } else {
                    args.push(self.assign()?);
                }
                if !self.eat_punct(",") {
                    self.expect_punct(")")?;
                    break;
                }
            }
            Ok(())
        })();
        self.no_in = saved;
        result.map(|_| args)
    }

    fn member_name(&mut self) -> Result<MemberProp> {
        let t = self.bump();
        match t.kind {
            TokenKind::Ident(n) => Ok(MemberProp::Name(n)),
            TokenKind::PrivateName(n) => Ok(MemberProp::Private(n)),
            _ => Err(ParseError::new(t.line, format!("unexpected {}", describe(&t)))),
        }
    }

    fn computed_member(&mut self) -> Result<MemberProp> {
        let saved = self.no_in;
        self.no_in = false;
        let e = self.expression();
        self.no_in = saved;
        let e = e?;
        self.expect_punct("]")?;
        Ok(MemberProp::Computed(Box::new(e)))
    }

    fn lhs_expression(&mut self) -> Result<Expr> {
        let mut e = if self.is_ident("new") {
            self.new_expression()?
        } else {
            self.primary()?
        };
        loop {
            let line = e.line;
            if self.eat_punct(".") {
                let prop = self.member_name()?;
                e = Expr::new(
                    line,
                    ExprKind::Member {
                        object: Box::new(e),
                        prop,
                        optional: false,
                    },
                );
            } else if self.eat_punct("?.") {
                if self.is_punct("(") {
                    let args = self.args()?;
                    e = Expr::new(
                        line,
                        ExprKind::Call {
                            callee: Box::new(e),
                            args,
                            optional: true,
                        },
                    );
                } else {
                    let prop = if self.eat_punct("[") {
                        self.computed_member()?
                    } else {
                        self.member_name()?
                    };
                    e = Expr::new(
                        line,
                        ExprKind::Member {
                            object: Box::new(e),
                            prop,
                            optional: true,
                        },
                    );
                }
            } else if self.eat_punct("[") {
                let prop = self.computed_member()?;
                e = Expr::new(
                    line,
                    ExprKind::Member {
                        object: Box::new(e),
                        prop,
                        optional: false,
                    },
                );
            } else if self.is_punct("(") {
                let args = self.args()?;
                e = Expr::new(
                    line,
                    ExprKind::Call {
                        callee: Box::new(e),
                        args,
                        optional: false,
                    },
                );
            } else if matches!(self.peek().kind, TokenKind::Template(_)) {
                let TokenKind::Template(t) = self.bump().kind else { unreachable!() };
                let (quasis, exprs) = self.template_parts(t)?;
                e = Expr::new(
                    line,
                    ExprKind::TaggedTemplate {
                        tag: Box::new(e),
                        quasis,
                        exprs,
                    },
                );
            } else {
                return Ok(e);
            }
        }
    }

    fn new_expression(&mut self) -> Result<Expr> {
        let line = self.line();
        self.bump();
        if self.eat_punct(".") {
            let prop = self.member_name()?;
            return Ok(Expr::new(
                line,
                ExprKind::Member {
                    object: Box::new(Expr::new(line, ExprKind::Ident("new".into()))),
                    prop,
                    optional: false,
                },
            ));
        }
        let mut callee = if self.is_ident("new") {
            self.new_expression()?
        } else {
            self.primary()?
        };
        loop {
            let cl = callee.line;
            if self.eat_punct(".") {
                let prop = self.member_name()?;
                callee = Expr::new(
                    cl,
                    ExprKind::Member {
                        object: Box::new(callee),
                        prop,
                        optional: false,
                    },
                );
            } else if self.eat_punct("[") {
                let prop = self.computed_member()?;
                callee = Expr::new(
                    cl,
                    ExprKind::Member {
                        object: Box::new(callee),
                        prop,
                        optional: false,
                    },
                );
            } else {
                break;
            }
        }
        let args = if self.is_punct("(") { self.args()? } else { Vec::new() };
        Ok(Expr::new(
            line,
            ExprKind::New {
                callee: Box::new(callee),
                args,
            },
        ))
    }

    fn template_parts(&mut self, t: crate::lexer::Template) -> Result<(Vec<String>, Vec<Expr>)> {
        let mut exprs = Vec::new();
        for mut toks in t.exprs {
            let line = toks.last().map(|t| t.line).unwrap_or(self.last_line);
            toks.push(Token {
                kind: TokenKind::Eof,
                line,
                nl_before: true,
                start: 0,
                end: 0,
            });
            let mut sub = Parser::new(toks);
            let e = sub.expression()?;
            if !sub.at_eof() {
                return Err(sub.unexpected());
            }
            exprs.push(e);
        }
        Ok((t.quasis, exprs))
    }

    fn primary(&mut self) -> Result<Expr> {
        let line = self.line();
        let t = self.peek().clone();
        let kind = match t.kind {
            TokenKind::Ident(name) => match name.as_str() {
                "function" => {
                    let f = self.function(false, false)?;
                    return Ok(Expr::new(line, ExprKind::Function(Box::new(f))));
                }
                "async" if self.peek_at(1).is_ident("function") && !self.peek_at(1).nl_before => {
                    self.bump();
                    let f = self.function(true, false)?;
                    return Ok(Expr::new(line, ExprKind::Function(Box::new(f))));
                }
                "class" => {
                    let c = self.class(false)?;
                    return Ok(Expr::new(line, ExprKind::Class(Box::new(c))));
                }
                "this" => {
                    self.bump();
                    ExprKind::This
                }
                "super" => {
                    self.bump();
                    ExprKind::Super
                }
                "null" => {
                    self.bump();
                    ExprKind::Null
                }
                "true" | "false" => {
                    self.bump();
                    ExprKind::Bool(name == "true")
                }
                n if RESERVED.contains(&n) => return Err(self.unexpected()),
                _ => {
                    self.bump();
                    ExprKind::Ident(name)
                }
            },
            TokenKind::Num(n) => {
                self.bump();
                ExprKind::Num(n)
            }
            TokenKind::Str(s) => {
                self.bump();
                ExprKind::Str(s)
            }
            TokenKind::Regex { pattern, flags } => {
                self.bump();
                ExprKind::Regex { pattern, flags }
            }
            TokenKind::Template(tpl) => {
                self.bump();
                let (quasis, exprs) = self.template_parts(tpl)?;
                ExprKind::Template { quasis, exprs }
            }
            TokenKind::Punct("(") => {
                self.bump();
                let saved = self.no_in;
                self.no_in = false;
                let e = self.expression();
                self.no_in = saved;
                let e = e?;
                self.expect_punct(")")?;
                return Ok(e);
            }
            TokenKind::Punct("[") => {
                self.bump();
                ExprKind::Array(self.array_items()?)
            }
            TokenKind::Punct("{") => {
                self.bump();
                ExprKind::Object(self.object_props()?)
            }
            _ => return Err(self.unexpected()),
        };
        Ok(Expr::new(line, kind))
    }

    fn array_items(&mut self) -> Result<Vec<Option<Expr>>> {
        let saved = self.no_in;
        self.no_in = false;
        let mut items = Vec::new();
        let result = (|| {
            while !self.eat_punct("]") {
                if self.eat_punct(",") {
                    items.push(None);
                    continue;
                }
                let line = self.line();
                if self.eat_punct("...") {
                    let e = self.assign()?;
                    items.push(Some(Expr::new(line, ExprKind::Spread(Box::new(e)))));
                } else {
                    items.push(Some(self.assign()?));
                }
                if !self.eat_punct(",") {
                    self.expect_punct("]")?;
                    break;
                }
            }
            Ok(())
        })();
        self.no_in = saved;
        result.map(|_| items)
    }

    fn object_props(&mut self) -> Result<Vec<Prop>> {
        let saved = self.no_in;
        self.no_in = false;
        let mut props = Vec::new();
        let result = (|| {
            while !self.eat_punct("}") {
                props.push(self.object_prop()?);
                if !self.eat_punct(",") {
                    self.expect_punct("}")?;
                    break;
                }
            }
            Ok(())
        })();
        self.no_in = saved;
        result.map(|_| props)
    }

    fn object_prop(&mut self) -> Result<Prop> {
        if self.eat_punct("...") {
            return Ok(Prop::Spread(self.assign()?));
        }
        let is_async = self.is_modifier("async") && !self.peek_at(1).is_punct(":") && {
            self.bump();
            true
        };
        let is_generator = self.eat_punct("*");
        let mut kind = PropKind::Init;
        if !is_async && !is_generator && !self.peek_at(1).is_punct(":") {
            if self.is_modifier("get") {
                self.bump();
                kind = PropKind::Getter;
            } else if self.is_modifier("set") {
                self.bump();
                kind = PropKind::Setter;
            }
        }
        let key_line = self.line();
        let key = self.prop_key()?;
        if self.is_punct("(") {
            let f = self.function_rest(key.name().map(str::to_string), is_async, is_generator, key_line)?;
            let kind = if kind == PropKind::Init { PropKind::Method } else { kind };
            return Ok(Prop::Property {
                key,
                value: Expr::new(key_line, ExprKind::Function(Box::new(f))),
                kind,
            });
        }
        if is_async || is_generator || kind != PropKind::Init {
            return Err(self.unexpected());
        }
        if self.eat_punct(":") {
            let value = self.assign()?;
            return Ok(Prop::Property {
                key,
                value,
                kind: PropKind::Init,
            });
        }
        let PropKey::Ident(name) = key else {
            return Err(self.unexpected());
        };
        if self.eat_punct("=") {
            let default = self.assign()?;
            return Ok(Prop::ShorthandDefault { name, default });
        }
        Ok(Prop::Property {
            key: PropKey::Ident(name.clone()),
            value: Expr::new(key_line, ExprKind::Ident(name)),
            kind: PropKind::Shorthand,
        })
    }
}

/// Reinterprets an expression as an assignment target.
fn expr_to_pattern(e: Expr) -> Result<Pattern> {
    let line = e.line;
    Ok(match e.kind {
        ExprKind::Ident(n) => Pattern::Ident(n),
        ExprKind::Member { .. } => Pattern::Expr(Box::new(e)),
        ExprKind::Array(items) => Pattern::Array(
            items
                .into_iter()
                .map(|item| {
                    item.map(|x| match x.kind {
                        ExprKind::Spread(inner) => expr_to_pattern(*inner).map(|p| Pattern::Rest(Box::new(p))),
                        _ => expr_to_pattern(x),
                    })
                    .transpose()
                })
                .collect::<Result<_>>()?,
        ),
        ExprKind::Object(props) => Pattern::Object(
            props
                .into_iter()
                .map(|p| match p {
                    Prop::Property { key, value, .. } => Ok(PatternProp::KeyValue(key, expr_to_pattern(value)?)),
                    Prop::ShorthandDefault { name, default } => Ok(PatternProp::KeyValue(
                        PropKey::Ident(name.clone()),
                        Pattern::Default(Box::new(Pattern::Ident(name)), Box::new(default)),
                    )),
                    Prop::Spread(x) => Ok(PatternProp::Rest(expr_to_pattern(x)?)),
                })
                .collect::<Result<_>>()?,
        ),
        ExprKind::Assign { op: "=", target, value } => Pattern::Default(target, value),
        ExprKind::Call { .. } => Pattern::Expr(Box::new(e)),
        _ => return Err(ParseError::new(line, "invalid assignment target")),
    })
}

fn describe(t: &Token) -> String {
    match &t.kind {
        TokenKind::Ident(n) => format!("`{n}`"),
        TokenKind::PrivateName(n) => format!("`#{n}`"),
        TokenKind::Num(n) => format!("number {n}"),
        TokenKind::Str(_) => "string".to_string(),
        TokenKind::Template(_) => "template".to_string(),
        TokenKind::Regex { .. } => "regex".to_string(),
        TokenKind::Punct(p) => format!("`{p}`"),
        TokenKind::Eof => "end of input".to_string(),
    }
}
