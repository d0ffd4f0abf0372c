//! Tokenizer for JavaScript sources.
//!
//! Produces a flat token stream with 1-based line numbers. Template literals
//! are lexed eagerly: every `${...}` substitution becomes its own nested token
//! list so the parser can handle it with a sub-parser.

use crate::error::{ParseError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    PrivateName(String),
    Num(String),
    Str(String),
    Template(Template),
    Regex { pattern: String, flags: String },
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub quasis: Vec<String>,
    pub exprs: Vec<Vec<Token>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: u32,
    /// A line terminator separates this token from the previous one.
    pub nl_before: bool,
    /// Byte offsets into the source.
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        matches!(&self.kind, TokenKind::Punct(q) if *q == p)
    }

    pub fn is_ident(&self, name: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(n) if n == name)
    }

    pub fn ident(&self) -> Option<&str> {
        match &self.kind {
            TokenKind::Ident(n) => Some(n),
            _ => None,
        }
    }
}

// Longest first so that greedy matching works.
const PUNCTUATORS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==",
    "!=", "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "**", "<<", ">>", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-",
    "*", "/", "%", "&", "|", "^", "!", "~", "?", ":", "=", ".", "@", "#",
];

const REGEX_PRECEDING_KEYWORDS: &[&str] = &[
    "return", "typeof", "instanceof", "in", "of", "new", "delete", "void", "throw", "case", "do",
    "else", "yield", "await",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut lx = Lexer {
        src: src.as_bytes(),
        text: src,
        pos: 0,
        line: 1,
    };
    lx.skip_hashbang();
    let mut out = lx.run(false)?;
    let line = lx.line;
    out.push(Token {
        kind: TokenKind::Eof,
        line,
        nl_before: true,
        start: src.len(),
        end: src.len(),
    });
    Ok(out)
}

struct Lexer<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    line: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, msg)
    }

    fn skip_hashbang(&mut self) {
        if self.src.starts_with(b"#!") {
            while let Some(c) = self.peek() {
                if c == b'\n' {
                    break;
                }
                self.pos += 1;
            }
        }
    }

    /// Lex until EOF, or until the `}` closing a template substitution when
    /// `in_template` is set.
    fn run(&mut self, in_template: bool) -> Result<Vec<Token>> {
        let mut out: Vec<Token> = Vec::new();
        let mut nl = false;
        let mut depth = 0usize;
        loop {
            nl |= self.skip_trivia()?;
            let Some(c) = self.peek() else {
                if in_template {
                    return Err(self.err("unterminated template substitution"));
                }
                return Ok(out);
            };
            let start = self.pos;
            let line = self.line;
            let kind = if c == b'`' {
                TokenKind::Template(self.template()?)
            } else if c == b'"' || c == b'\'' {
                TokenKind::Str(self.string(c)?)
            } else if c.is_ascii_digit() || (c == b'.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
                TokenKind::Num(self.number())
            } else if is_ident_start(c) {
                TokenKind::Ident(self.ident())
            } else if c == b'#' && self.peek_at(1).is_some_and(is_ident_start) {
                self.pos += 1;
                TokenKind::PrivateName(self.ident())
            } else if c == b'/' && regex_allowed(out.last()) {
                self.regex()?
            } else {
                if in_template {
                    if c == b'{' {
                        depth += 1;
                    } else if c == b'}' {
                        if depth == 0 {
                            self.pos += 1;
                            return Ok(out);
                        }
                        depth -= 1;
                    }
                }
                let rest = &self.text[self.pos..];
                let Some(p) = PUNCTUATORS.iter().find(|p| rest.starts_with(**p)) else {
                    return Err(self.err(format!("unexpected character {:?}", c as char)));
                };
                // `?.` followed by a digit is a conditional, not optional chaining.
                if *p == "?." && self.peek_at(2).is_some_and(|d| d.is_ascii_digit()) {
                    self.pos += 1;
                    TokenKind::Punct("?")
                } else {
                    self.pos += p.len();
                    TokenKind::Punct(p)
                }
            };
            out.push(Token {
                kind,
                line,
                nl_before: nl,
                start,
                end: self.pos,
            });
            nl = false;
        }
    }

    /// Skips whitespace and comments; reports whether a newline was crossed.
    fn skip_trivia(&mut self) -> Result<bool> {
        let mut nl = false;
        while let Some(c) = self.peek() {
            match c {
                b'\n' => {
                    nl = true;
                    self.line += 1;
                    self.pos += 1;
                }
                b' ' | b'\t' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'/' if self.peek_at(1) == Some(b'/') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.pos += 1;
                    }
                }
                b'/' if self.peek_at(1) == Some(b'*') => {
                    let start_line = self.line;
                    self.pos += 2;
                    loop {
                        match self.peek() {
                            None => return Err(ParseError::new(start_line, "unterminated comment")),
                            Some(b'*') if self.peek_at(1) == Some(b'/') => {
                                self.pos += 2;
                                break;
                            }
                            Some(b'\n') => {
                                nl = true;
                                self.line += 1;
                                self.pos += 1;
                            }
                            _ => self.pos += 1,
                        }
                    }
                }
                0xc2 if self.peek_at(1) == Some(0xa0) => self.pos += 2,
                0xef if self.peek_at(1) == Some(0xbb) && self.peek_at(2) == Some(0xbf) => self.pos += 3,
                0xe2 if self.peek_at(1) == Some(0x80) && matches!(self.peek_at(2), Some(0xa8 | 0xa9)) => {
                    nl = true;
                    self.line += 1;
                    self.pos += 3;
                }
                _ => break,
            }
        }
        Ok(nl)
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if is_ident_part(c) {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.text[start..self.pos].to_string()
    }

    fn number(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            let exp_sign = (c == b'+' || c == b'-')
                && matches!(self.src.get(self.pos.wrapping_sub(1)), Some(b'e' | b'E'))
                && !self.text[start..self.pos].starts_with("0x");
            if c.is_ascii_alphanumeric() || c == b'.' || c == b'_' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.text[start..self.pos].to_string()
    }

    fn string(&mut self, quote: u8) -> Result<String> {
        let line = self.line;
        self.pos += 1;
        let mut value = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(ParseError::new(line, "unterminated string"));
            };
            match c {
                b'\n' => return Err(ParseError::new(line, "unterminated string")),
                b'\\' => {
                    self.escape(&mut value)?;
                }
                c if c == quote => {
                    self.pos += 1;
                    return Ok(value);
                }
                _ => self.push_char(&mut value),
            }
        }
    }

    fn push_char(&mut self, out: &mut String) {
        let ch = self.text[self.pos..].chars().next().unwrap_or('\u{fffd}');
        out.push(ch);
        self.pos += ch.len_utf8();
    }

    fn escape(&mut self, out: &mut String) -> Result<()> {
        self.pos += 1;
        let Some(c) = self.peek() else {
            return Err(self.err("dangling escape"));
        };
        self.pos += 1;
        match c {
            b'n' => out.push('\n'),
            b't' => out.push('\t'),
            b'r' => out.push('\r'),
            b'b' => out.push('\u{8}'),
            b'f' => out.push('\u{c}'),
            b'v' => out.push('\u{b}'),
            b'0' if !self.peek().is_some_and(|d| d.is_ascii_digit()) => out.push('\0'),
            b'\r' => {
                if self.peek() == Some(b'\n') {
                    self.pos += 1;
                }
                self.line += 1;
            }
            b'\n' => self.line += 1,
            b'x' => {
                let hex = self.text.get(self.pos..self.pos + 2).unwrap_or("");
                if let Some(ch) = u32::from_str_radix(hex, 16).ok().and_then(char::from_u32) {
                    out.push(ch);
                    self.pos += 2;
                }
            }
            b'u' => {
                if self.peek() == Some(b'{') {
                    let close = self.text[self.pos..].find('}').unwrap_or(0);
                    let hex = &self.text[self.pos + 1..self.pos + close.max(1)];
                    if let Some(ch) = u32::from_str_radix(hex, 16).ok().and_then(char::from_u32) {
                        out.push(ch);
                    }
                    self.pos += close + 1;
                } else {
                    let hex = self.text.get(self.pos..self.pos + 4).unwrap_or("");
                    if let Some(ch) = u32::from_str_radix(hex, 16).ok().and_then(char::from_u32) {
                        out.push(ch);
                        self.pos += 4;
                    }
                }
            }
            _ => {
                self.pos -= 1;
                self.push_char(out);
            }
        }
        Ok(())
    }

    fn template(&mut self) -> Result<Template> {
        let line = self.line;
        self.pos += 1;
        let mut quasis = Vec::new();
        let mut exprs = Vec::new();
        let mut cur = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(ParseError::new(line, "unterminated template literal"));
            };
            match c {
                b'`' => {
                    self.pos += 1;
                    quasis.push(cur);
                    return Ok(Template { quasis, exprs });
                }
                b'\\' => self.escape(&mut cur)?,
                b'$' if self.peek_at(1) == Some(b'{') => {
                    self.pos += 2;
                    quasis.push(std::mem::take(&mut cur));
                    exprs.push(self.run(true)?);
                }
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                    cur.push('\n');
                }
                _ => self.push_char(&mut cur),
            }
        }
    }

    fn regex(&mut self) -> Result<TokenKind> {
        let line = self.line;
        self.pos += 1;
        let start = self.pos;
        let mut in_class = false;
        loop {
            let Some(c) = self.peek() else {
                return Err(ParseError::new(line, "unterminated regex"));
            };
            match c {
                b'\n' => return Err(ParseError::new(line, "unterminated regex")),
                b'\\' => self.pos += 2,
                b'[' => {
                    in_class = true;
                    self.pos += 1;
                }
                b']' => {
                    in_class = false;
                    self.pos += 1;
                }
                b'/' if !in_class => break,
                _ => self.pos += 1,
            }
        }
        let pattern = self.text[start..self.pos].to_string();
        self.pos += 1;
        let flags = self.ident();
        Ok(TokenKind::Regex { pattern, flags })
    }
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c >= 0x80
}

fn is_ident_part(c: u8) -> bool {
    is_ident_start(c) || c.is_ascii_digit()
}

fn regex_allowed(prev: Option<&Token>) -> bool {
    match prev.map(|t| &t.kind) {
        None => true,
        Some(TokenKind::Punct(p)) => !matches!(*p, ")" | "]" | "}" | "++" | "--"),
        Some(TokenKind::Ident(name)) => REGEX_PRECEDING_KEYWORDS.contains(&name.as_str()),
        Some(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn division_versus_regex() {
        let toks = kinds("a / b; x = /ab+c/gi.test(s)");
        assert!(toks.contains(&TokenKind::Punct("/")));
        assert!(toks.contains(&TokenKind::Regex {
            pattern: "ab+c".into(),
            flags: "gi".into()
        }));
    }

    #[test]
    fn template_substitutions_nest() {
        let toks = kinds("`a${ {x:1}.x }b${`c${d}`}`");
        let TokenKind::Template(t) = &toks[0] else { panic!("{toks:?}") };
        assert_eq!(t.quasis, vec!["a", "b", ""]);
        assert_eq!(t.exprs.len(), 2);
    }

    #[test]
    fn lines_and_newline_flags() {
        let toks = tokenize("a\n/* x\n y */ b // c\nc").unwrap();
        assert_eq!(toks[0].line, 1);
        assert_eq!(toks[1].line, 3);
        assert!(toks[1].nl_before);
        assert_eq!(toks[2].line, 4);
    }

    #[test]
    fn string_escapes() {
        let toks = kinds(r#"'a\'b' "\x41B\n""#);
        assert_eq!(toks[0], TokenKind::Str("a'b".into()));
        assert_eq!(toks[1], TokenKind::Str("AB\n".into()));
    }

    #[test]
    fn unterminated_string_is_error() {
        assert!(tokenize("'abc").is_err());
    }
}
