//! Usage examples of a target function mined from tests and documentation.

use std::path::{Path, PathBuf};

use pocgen_js::ast::{Expr, ExprKind, Pattern, Stmt, StmtKind};
use pocgen_js::visit::{walk_expr, walk_stmt, Visitor};
use serde::{Deserialize, Serialize};

use crate::explorer::ExportedApi;
use crate::llm::{ChatRequest, Gateway, GatewayError};
use crate::taint::model::{CodeModel, SourceFile};
use crate::validator::parse_yes_no;

/// Lines of context on each side of a test call site.
pub const CONTEXT_LINES: u32 = 5;
/// Snippets kept per origin.
pub const MAX_SNIPPETS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnippetOrigin {
    TestFile,
    Documentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSnippet {
    pub origin: SnippetOrigin,
    pub text: String,
    /// Model summary, documentation snippets only.
    #[serde(default)]
    pub summary: Option<String>,
}

/// A fenced code block from a markdown file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocBlock {
    /// Path relative to the package directory.
    pub file: String,
    /// Line of the opening fence.
    pub line: u32,
    /// Info string after the fence, e.g. `js`.
    pub info: String,
    pub text: String,
    /// The fence was never closed and the block runs to end of file.
    pub unclosed: bool,
}

/// Test files by path convention.
pub fn is_test_path(path: &str) -> bool {
    let lower = path.to_ascii_lowercase();
    lower.contains("test") || lower.contains("spec")
}

/// Identifiers bound to a `require(...)` of the package itself or of a
/// relative path inside it.
fn package_bindings(program: &[Stmt], package_name: &str) -> Vec<String> {
    struct Finder<'a> {
        package_name: &'a str,
        names: Vec<String>,
    }
    impl Visitor for Finder<'_> {
        fn visit_stmt(&mut self, stmt: &Stmt) {
            if let StmtKind::VarDecl(_, decls) = &stmt.kind {
                for d in decls {
                    if let (Pattern::Ident(name), Some(init)) = (&d.target, &d.init) {
                        if requires_package(init, self.package_name) {
                            self.names.push(name.clone());
                        }
                    }
                }
            }
            walk_stmt(self, stmt);
        }
    }
    let mut f = Finder {
        package_name,
        names: Vec::new(),
    };
    for s in program {
        f.visit_stmt(s);
    }
    f.names
}

fn requires_package(expr: &Expr, package_name: &str) -> bool {
    let ExprKind::Call { callee, args, .. } = &expr.kind else { return false };
    if !matches!(&callee.kind, ExprKind::Ident(n) if n == "require") {
        return false;
    }
    matches!(args.first().map(|a| &a.kind), Some(ExprKind::Str(s)) if s == package_name || s.starts_with('.'))
}

/// True when `callee` is `name` or ends in `.name`.
pub fn callee_matches(callee: &str, name: &str) -> bool {
    callee == name || callee.ends_with(&format!(".{name}"))
}

/// Lines of calls (or `new` expressions) whose static callee text ends with
/// one of `names`.
fn call_lines(program: &[Stmt], names: &[String]) -> Vec<u32> {
    struct Calls<'a> {
        names: &'a [String],
        lines: Vec<u32>,
    }
    impl Visitor for Calls<'_> {
        fn visit_expr(&mut self, expr: &Expr) {
            if let ExprKind::Call { callee, .. } | ExprKind::New { callee, .. } = &expr.kind {
                if let Some(text) = callee.member_path() {
                    if self.names.iter().any(|n| callee_matches(&text, n)) {
                        self.lines.push(expr.line);
                    }
                }
            }
            walk_expr(self, expr);
        }
    }
    let mut c = Calls { names, lines: Vec::new() };
    for s in program {
        c.visit_stmt(s);
    }
    c.lines.sort_unstable();
    c.lines.dedup();
    c.lines
}

/// Names a call to `target` may use in `file`. The root export has no
/// name of its own, so the local bindings of `require` stand in for it.
pub fn target_call_names(file: &SourceFile, package_name: &str, target: &ExportedApi) -> Vec<String> {
    if target.access_path == "root" {
        package_bindings(&file.program.body, package_name)
    } else {
        vec![target.terminal_name().to_string()]
    }
}

fn window(file: &SourceFile, line: u32) -> String {
    let last = file.lines.len() as u32;
    let start = line.saturating_sub(CONTEXT_LINES).max(1);
    let end = (line + CONTEXT_LINES).min(last);
    let lines: Vec<&str> = (start..=end).map(|n| file.line(n)).collect();
    let first = lines.iter().position(|l| !l.trim().is_empty()).unwrap_or(lines.len());
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(first, |i| i + 1);
    lines[first..last].join("\n")
}

/// Call sites of `target` in the package's test files, each with
/// ±[`CONTEXT_LINES`] of context, at most [`MAX_SNIPPETS`].
pub fn mine_test_callsites(model: &CodeModel, target: &ExportedApi) -> Vec<UsageSnippet> {
    let mut out = Vec::new();
    for file in model.files.iter().filter(|f| is_test_path(&f.path)) {
        let names = target_call_names(file, &model.package_name, target);
        if names.is_empty() {
            continue;
        }
        for line in call_lines(&file.program.body, &names) {
            if out.len() == MAX_SNIPPETS {
                return out;
            }
            out.push(UsageSnippet {
                origin: SnippetOrigin::TestFile,
                text: window(file, line),
                summary: None,
            });
        }
    }
    out
}

fn is_markdown(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("md" | "markdown" | "mdx")
    )
}

fn collect_docs(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            collect_docs(&path, out);
        } else if is_markdown(&path) {
            out.push(path);
        }
    }
}

fn doc_files(package_dir: &Path) -> Vec<PathBuf> {
    let mut readmes = Vec::new();
    if let Ok(entries) = std::fs::read_dir(package_dir) {
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().to_ascii_lowercase();
            if name.starts_with("readme") && entry.path().is_file() {
                readmes.push(entry.path());
            }
        }
    }
    readmes.sort();
    let mut docs = Vec::new();
    for sub in ["doc", "docs"] {
        collect_docs(&package_dir.join(sub), &mut docs);
    }
    docs.sort();
    readmes.extend(docs);
    readmes
}

/// Opening fence: up to three spaces, then three or more backticks or tildes.
fn fence(line: &str) -> Option<(char, usize, &str)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let ch = rest.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = rest.chars().take_while(|c| *c == ch).count();
    if len < 3 {
        return None;
    }
    let info = rest[len..].trim();
    if ch == '`' && info.contains('`') {
        return None;
    }
    Some((ch, len, info))
}

/// Fenced blocks of one markdown text, in order.
pub fn parse_fenced_blocks(file: &str, text: &str) -> Vec<DocBlock> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((i, line)) = lines.next() {
        let Some((ch, len, info)) = fence(line) else { continue };
        let mut body = Vec::new();
        let mut closed = false;
        for (_, l) in lines.by_ref() {
            if matches!(fence(l), Some((c, n, rest)) if c == ch && n >= len && rest.is_empty()) {
                closed = true;
                break;
            }
            body.push(l);
        }
        out.push(DocBlock {
            file: file.to_string(),
            line: i as u32 + 1,
            info: info.to_string(),
            text: body.join("\n"),
            unclosed: !closed,
        });
    }
    out
}

/// Fenced blocks from the README and the `doc`/`docs` directories.
pub fn extract_doc_blocks(package_dir: &Path) -> Vec<DocBlock> {
    let mut out = Vec::new();
    for path in doc_files(package_dir) {
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        let rel = path.strip_prefix(package_dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
        out.extend(parse_fenced_blocks(&rel, &text));
    }
    out
}

fn usage_prompt(package_name: &str, target: &ExportedApi, block: &DocBlock) -> String {
    format!(
        "The following code block is from the documentation of the npm package `{package_name}`.\n```\n{}\n```\nIs it a usage example of `{}`? Answer yes or no on the first line. If yes, summarize on the next line how the example calls `{}`.",
        block.text,
        target.display_name(package_name),
        target.display_name(package_name),
    )
}

/// Keeps the blocks the model marks as usage examples of `target`, with
/// the model's summary. Unusable answers drop the block.
pub fn filter_and_summarize(
    blocks: &[DocBlock],
    package_name: &str,
    target: &ExportedApi,
    gateway: &mut Gateway,
) -> Result<Vec<UsageSnippet>, GatewayError> {
    let mut out = Vec::new();
    for block in blocks {
        if out.len() == MAX_SNIPPETS {
            break;
        }
        if block.text.trim().is_empty() {
            continue;
        }
        let request = ChatRequest::user(usage_prompt(package_name, target, block)).with_purpose("usage");
        let answer = gateway.chat(request)?.text;
        let mut lines = answer.trim().splitn(2, '\n');
        let first = lines.next().unwrap_or("");
        if parse_yes_no(first) != Some(true) {
            continue;
        }
        let summary = lines.next().unwrap_or("").trim();
        if summary.is_empty() {
            continue;
        }
        out.push(UsageSnippet {
            origin: SnippetOrigin::Documentation,
            text: block.text.clone(),
            summary: Some(summary.to_string()),
        });
    }
    Ok(out)
}
