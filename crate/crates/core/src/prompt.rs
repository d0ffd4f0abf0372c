//! Exploit-generation prompts: sections, few-shot retrieval, the exploit
//! skeleton, deduplication hashing and shrinking.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use pocgen_js::ast::{Expr, ExprKind, MemberProp, Pattern, PatternProp, Stmt, StmtKind};
use pocgen_js::visit::{walk_expr, walk_stmt, Visitor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::explorer::{ApiKind, ExportedApi};
use crate::llm::system_text;
use crate::report_store::{ClassifiedReport, VulnClass, VulnReport};
use crate::snippets::{SnippetOrigin, UsageSnippet};
use crate::validator::{anticheat_static, AntiCheat, ExecutionReport, ExitStatus};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
/// Similar exploits placed in a prompt.
pub const SIMILAR_EXPLOITS: usize = 3;
/// Input-token budget for an assembled prompt.
pub const DEFAULT_PROMPT_TOKENS: usize = 12_000;

/// A known-good exploit and the report it was written for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploitCorpusEntry {
    pub description: String,
    pub exploit_code: String,
    pub vuln_class: VulnClass,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("corpus line {line}: {message}")]
    Entry { line: usize, message: String },
}

/// Parses a JSON-Lines exploit corpus. Blank lines are skipped; entries
/// with an empty description or exploit are rejected.
pub fn parse_exploit_corpus(text: &str) -> Result<Vec<ExploitCorpusEntry>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CorpusError::Entry { line: i + 1, message };
        let entry: ExploitCorpusEntry = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if entry.description.trim().is_empty() || entry.exploit_code.trim().is_empty() {
            return Err(err("empty description or exploit".into()));
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn load_exploit_corpus(path: &Path) -> Result<Vec<ExploitCorpusEntry>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_exploit_corpus(&text)
}

// ---------------------------------------------------------------------------
// retrieval

/// Lowercased tokens split on whitespace and ASCII punctuation.
pub fn bm25_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Okapi BM25 over a fixed document set.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lens: Vec<usize>,
    doc_freq: HashMap<String, u32>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        for d in docs {
            let tokens = bm25_tokens(d.as_ref());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            doc_lens.push(tokens.len());
            term_freqs.push(tf);
        }
        let total: usize = doc_lens.iter().sum();
        let avg_len = if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 };
        Self {
            term_freqs,
            doc_lens,
            doc_freq,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lens.is_empty()
    }

    /// Non-negative idf: `ln(1 + (N - n + 0.5) / (n + 0.5))`.
    fn idf(&self, term: &str) -> f64 {
        let n = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        let total = self.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    /// Score of every document for `query`. Repeated query terms count
    /// once per occurrence.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let terms = bm25_tokens(query);
        let idfs: Vec<f64> = terms.iter().map(|t| self.idf(t)).collect();
        (0..self.len())
            .map(|d| {
                let norm = if self.avg_len > 0.0 { self.doc_lens[d] as f64 / self.avg_len } else { 0.0 };
                let mut score = 0.0;
                for (t, idf) in terms.iter().zip(&idfs) {
                    let tf = self.term_freqs[d].get(t).copied().unwrap_or(0) as f64;
                    score += idf * (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * norm));
                }
                score
            })
            .collect()
    }

    /// Document indices by descending score, ties by index.
    pub fn rank(&self, query: &str) -> Vec<usize> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order
    }
}

/// An exploit corpus with its retrieval index built once.
#[derive(Debug, Clone)]
pub struct ExploitCorpus {
    pub entries: Vec<ExploitCorpusEntry>,
    index: Bm25Index,
}

impl ExploitCorpus {
    pub fn new(entries: Vec<ExploitCorpusEntry>) -> Self {
        let descriptions: Vec<&str> = entries.iter().map(|e| e.description.as_str()).collect();
        let index = Bm25Index::new(&descriptions);
        Self { entries, index }
    }

    /// The `k` entries whose descriptions best match the report.
    pub fn similar(&self, report: &VulnReport, k: usize) -> Vec<ExploitCorpusEntry> {
        self.index
            .rank(&report.description())
            .into_iter()
            .take(k)
            .map(|i| self.entries[i].clone())
            .collect()
    }
}

pub fn select_similar_exploits(report: &VulnReport, corpus: &[ExploitCorpusEntry], k: usize) -> Vec<ExploitCorpusEntry> {
    ExploitCorpus::new(corpus.to_vec()).similar(report, k)
}

// ---------------------------------------------------------------------------
// skeleton

const RESERVED: [&str; 46] = [
    "await", "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete", "do", "else", "enum",
    "export", "extends", "false", "finally", "for", "function", "if", "implements", "import", "in", "instanceof",
    "interface", "let", "new", "null", "package", "private", "protected", "public", "return", "static", "super",
    "switch", "this", "throw", "true", "try", "typeof", "var", "void", "while", "with", "yield",
];

/// Usable as a local binding name.
fn is_binding(s: &str) -> bool {
    is_ident(s) && !RESERVED.contains(&s)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// camelCase identifier for a package name: `php-date-formatter` becomes
/// `phpDateFormatter`, `@scope/x.y` becomes `xY`.
pub fn package_ident(package_name: &str) -> String {
    let base = package_name.rsplit('/').next().unwrap_or(package_name);
    let mut out = String::new();
    let mut upper = false;
    for c in base.chars() {
        if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
            if out.is_empty() && c.is_ascii_digit() {
                out.push('_');
            }
            if upper && !out.is_empty() {
                out.extend(c.to_uppercase());
            } else {
                out.push(c);
            }
            upper = false;
        } else {
            upper = true;
        }
    }
    if out.is_empty() {
        "pkg".into()
    } else if RESERVED.contains(&out.as_str()) {
        format!("{out}Pkg")
    } else {
        out
    }
}

fn property_access(chain: &[&str]) -> String {
    chain
        .iter()
        .map(|s| if is_ident(s) { format!(".{s}") } else { format!("[{s:?}]") })
        .collect()
}

/// Exploit template: an async `exploit` function that loads the package
/// and the target, followed by an awaited call.
pub fn render_skeleton(package_name: &str, target: &ExportedApi) -> String {
    let chain = target.member_chain();
    let mut pkg = package_ident(package_name);
    if chain.is_empty() && target.kind == ApiKind::Constructor {
        let mut c = pkg.chars();
        if let Some(first) = c.next() {
            pkg = first.to_uppercase().chain(c).collect();
        }
    }
    let mut body = vec![format!("  const {pkg} = require({package_name:?});")];
    if !chain.is_empty() {
        let mut local = target.terminal_name().to_string();
        if !is_ident(&local) || local == pkg {
            local = "target".into();
        } else if !is_binding(&local) {
            local = format!("{local}Fn");
        }
        body.push(format!("  const {local} = {pkg}{};", property_access(&chain)));
    }
    body.push("  // exploit code".into());
    format!("async function exploit() {{\n{}\n}}\nawait exploit();", body.join("\n"))
}

// ---------------------------------------------------------------------------
// bundles

/// Prompt sections in template order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionId {
    Header,
    Description,
    UsageSnippets,
    Skeleton,
    Task,
    SimilarExploits,
    SourceCode,
    RefinerAddendum,
}

impl SectionId {
    fn tag(self) -> &'static str {
        match self {
            SectionId::Header => "header",
            SectionId::Description => "description",
            SectionId::UsageSnippets => "usage_snippets",
            SectionId::Skeleton => "skeleton",
            SectionId::Task => "task",
            SectionId::SimilarExploits => "similar_exploits",
            SectionId::SourceCode => "source_code",
            SectionId::RefinerAddendum => "refiner_addendum",
        }
    }
}

/// An assembled prompt. Only the sections enter `content_hash`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub sections: Vec<(SectionId, String)>,
    pub tools_enabled: BTreeSet<String>,
    pub content_hash: String,
}

/// Digest of the section ids and texts.
pub fn content_hash(sections: &[(SectionId, String)]) -> String {
    let mut h = Sha256::new();
    for (id, text) in sections {
        h.update(id.tag().as_bytes());
        h.update([0]);
        h.update((text.len() as u64).to_le_bytes());
        h.update(text.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Rough token count: one token per four bytes.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

impl PromptBundle {
    pub fn new(system_text: String, sections: Vec<(SectionId, String)>) -> Self {
        let mut b = Self {
            system_text,
            sections: Vec::new(),
            tools_enabled: BTreeSet::new(),
            content_hash: String::new(),
        };
        for (id, text) in sections {
            b.set(id, text);
        }
        b
    }

    pub fn get(&self, id: SectionId) -> Option<&str> {
        self.sections.iter().find(|(s, _)| *s == id).map(|(_, t)| t.as_str())
    }

    pub fn has(&self, id: SectionId) -> bool {
        self.get(id).is_some()
    }

    /// Replaces or inserts a section at its template position.
    pub fn set(&mut self, id: SectionId, text: String) {
        match self.sections.iter_mut().find(|(s, _)| *s == id) {
            Some(slot) => slot.1 = text,
            None => {
                let at = self.sections.iter().position(|(s, _)| *s > id).unwrap_or(self.sections.len());
                self.sections.insert(at, (id, text));
            }
        }
        self.rehash();
    }

    pub fn remove(&mut self, id: SectionId) {
        self.sections.retain(|(s, _)| *s != id);
        self.rehash();
    }

    fn rehash(&mut self) {
        self.content_hash = content_hash(&self.sections);
    }

    /// The user message text.
    pub fn text(&self) -> String {
        self.sections.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join("\n")
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.system_text) + estimate_tokens(&self.text())
    }
}

/// Everything the first generation prompt is built from.
#[derive(Debug, Clone, Copy)]
pub struct PromptInputs<'a> {
    pub classified: &'a ClassifiedReport,
    pub target: &'a ExportedApi,
    pub taint_text: &'a str,
    pub snippets: &'a [UsageSnippet],
    pub similar: &'a [ExploitCorpusEntry],
    pub trigger_goal: &'a str,
}

fn usage_section(snippets: &[UsageSnippet]) -> String {
    let mut out = String::from("## Usage Examples:");
    for s in snippets {
        let label = match s.origin {
            SnippetOrigin::TestFile => "From the package tests:".to_string(),
            SnippetOrigin::Documentation => match &s.summary {
                Some(summary) => format!("From the documentation ({summary}):"),
                None => "From the documentation:".to_string(),
            },
        };
        out.push_str(&format!("\n{label}\n```js\n{}\n```", s.text));
    }
    out
}

fn similar_block(e: &ExploitCorpusEntry) -> String {
    format!("Vulnerability:\n```\n{}\n```\nExploit:\n```js\n{}\n```", e.description.trim(), e.exploit_code.trim())
}

fn similar_section(similar: &[ExploitCorpusEntry]) -> String {
    let blocks: Vec<String> = similar.iter().map(similar_block).collect();
    format!("## Exploits of similar vulnerabilities:\n{}", blocks.join("\n"))
}

const SOURCE_HEADING: &str = "## Source code:";
const TRUNCATED: &str = "// ... truncated";

/// Cuts `text` from the end, line by line, until it is at most `max`
/// bytes, keeping the heading line and balancing any open code fence.
fn truncate_source(text: &str, max: usize) -> String {
    let mut lines: Vec<&str> = text.lines().collect();
    let fits = |lines: &[&str]| {
        let body = lines.join("\n");
        let fences = lines.iter().filter(|l| l.trim_start().starts_with("```")).count();
        body.len() + TRUNCATED.len() + 1 + if fences % 2 == 1 { 4 } else { 0 } <= max
    };
    while lines.len() > 1 && !fits(&lines) {
        lines.pop();
    }
    let mut out = lines.join("\n");
    let open = lines.iter().filter(|l| l.trim_start().starts_with("```")).count() % 2 == 1;
    out.push('\n');
    out.push_str(TRUNCATED);
    if open {
        out.push_str("\n```");
    }
    out
}

/// The first generation prompt. When over `max_tokens`, the tail of the
/// source code is cut first, then similar exploits are dropped from the end.
pub fn build_initial_prompt(inputs: PromptInputs<'_>, max_tokens: usize) -> PromptBundle {
    let report = &inputs.classified.report;
    let class = inputs.classified.vuln_class;
    let function = inputs.target.display_name(&report.package_name);
    let kind = class.display_name();
    let mut sections = vec![
        (SectionId::Header, format!("`{function}` is vulnerable to {kind}.")),
        (
            SectionId::Description,
            format!("## Vulnerability Description:\n```\n{}\n```", report.description()),
        ),
    ];
    if !inputs.snippets.is_empty() {
        sections.push((SectionId::UsageSnippets, usage_section(inputs.snippets)));
    }
    sections.push((
        SectionId::Skeleton,
        format!("## Exploit Skeleton:\n```js\n{}\n```", render_skeleton(&report.package_name, inputs.target)),
    ));
    sections.push((
        SectionId::Task,
        format!(
            "## Task:\nCreate an exploit that uses the {kind} in `{function}` to {}.\nRespond with the full exploit code and explain why it works.\nIf there is an exception thrown, do not try to handle it and pass it on.\nEnclose the exploit code in backticks and define the exploit within a function named `exploit`.",
            inputs.trigger_goal
        ),
    ));
    if !inputs.similar.is_empty() {
        sections.push((SectionId::SimilarExploits, similar_section(inputs.similar)));
    }
    sections.push((SectionId::SourceCode, format!("{SOURCE_HEADING}\n{}", inputs.taint_text.trim_end())));
    let mut bundle = PromptBundle::new(system_text(Some(class)), sections);
    fit_budget(&mut bundle, inputs.similar, max_tokens);
    bundle
}

fn fit_budget(bundle: &mut PromptBundle, similar: &[ExploitCorpusEntry], max_tokens: usize) {
    if bundle.estimated_tokens() <= max_tokens {
        return;
    }
    let source = bundle.get(SectionId::SourceCode).unwrap_or_default().to_string();
    let over_bytes = (bundle.estimated_tokens() - max_tokens) * 4;
    let keep = source.len().saturating_sub(over_bytes).max(SOURCE_HEADING.len());
    bundle.set(SectionId::SourceCode, truncate_source(&source, keep));
    let mut kept = similar.len();
    while bundle.estimated_tokens() > max_tokens && kept > 0 {
        kept -= 1;
        if kept == 0 {
            bundle.remove(SectionId::SimilarExploits);
        } else {
            bundle.set(SectionId::SimilarExploits, similar_section(&similar[..kept]));
        }
    }
}

// ---------------------------------------------------------------------------
// shrinking

/// Local names bound to the package, each with the member chain below the
/// package root it stands for.
fn package_aliases(program: &[Stmt], package_name: &str) -> HashMap<String, Vec<String>> {
    struct Aliases<'a> {
        package_name: &'a str,
        map: HashMap<String, Vec<String>>,
    }
    impl Aliases<'_> {
        fn chain_of(&self, e: &Expr) -> Option<Vec<String>> {
            match &e.kind {
                ExprKind::Call { callee, args, .. } => {
                    let is_require = matches!(&callee.kind, ExprKind::Ident(n) if n == "require");
                    let arg = match args.first().map(|a| &a.kind) {
                        Some(ExprKind::Str(s)) => s.as_str(),
                        _ => return None,
                    };
                    (is_require && arg == self.package_name).then(Vec::new)
                }
                ExprKind::Ident(n) => self.map.get(n).cloned(),
                ExprKind::Member {
                    object,
                    prop: MemberProp::Name(name),
                    ..
                } => {
                    let mut c = self.chain_of(object)?;
                    c.push(name.clone());
                    Some(c)
                }
                ExprKind::Member {
                    object,
                    prop: MemberProp::Computed(key),
                    ..
                } => match &key.kind {
                    ExprKind::Str(name) => {
                        let mut c = self.chain_of(object)?;
                        c.push(name.clone());
                        Some(c)
                    }
                    _ => None,
                },
                ExprKind::Await(inner) => self.chain_of(inner),
                _ => None,
            }
        }

        fn bind(&mut self, target: &Pattern, chain: Vec<String>) {
            match target {
                Pattern::Ident(n) => {
                    self.map.insert(n.clone(), chain);
                }
                Pattern::Object(props) => {
                    for p in props {
                        if let PatternProp::KeyValue(key, value) = p {
                            if let Some(k) = key.name() {
                                let mut c = chain.clone();
                                c.push(k.to_string());
                                self.bind(value, c);
                            }
                        }
                    }
                }
                Pattern::Default(inner, _) => self.bind(inner, chain),
                _ => {}
            }
        }
    }
    impl Visitor for Aliases<'_> {
        fn visit_stmt(&mut self, stmt: &Stmt) {
            if let StmtKind::VarDecl(_, decls) = &stmt.kind {
                for d in decls {
                    if let Some(chain) = d.init.as_ref().and_then(|e| self.chain_of(e)) {
                        self.bind(&d.target, chain);
                    }
                }
            }
            walk_stmt(self, stmt);
        }

        fn visit_expr(&mut self, expr: &Expr) {
            if let ExprKind::Assign { target, value, .. } = &expr.kind {
                if let Some(chain) = self.chain_of(value) {
                    self.bind(target, chain);
                }
            }
            walk_expr(self, expr);
        }
    }
    let mut a = Aliases {
        package_name,
        map: HashMap::new(),
    };
    for s in program {
        a.visit_stmt(s);
    }
    a.map
}

/// Package member chains called or constructed by the exploit, plus the
/// names of all methods called on any receiver.
fn invoked(program: &[Stmt], aliases: &HashMap<String, Vec<String>>, package_name: &str) -> (Vec<Vec<String>>, BTreeSet<String>) {
    struct Calls<'a> {
        resolver: &'a dyn Fn(&Expr) -> Option<Vec<String>>,
        chains: Vec<Vec<String>>,
        methods: BTreeSet<String>,
    }
    impl Visitor for Calls<'_> {
        fn visit_expr(&mut self, expr: &Expr) {
            if let ExprKind::Call { callee, .. } | ExprKind::New { callee, .. } = &expr.kind {
                if let Some(c) = (self.resolver)(callee) {
                    self.chains.push(c);
                }
                if let ExprKind::Member { .. } = callee.kind {
                    if let Some(name) = callee.terminal_name() {
                        self.methods.insert(name.to_string());
                    }
                }
            }
            walk_expr(self, expr);
        }
    }
    fn resolve(e: &Expr, aliases: &HashMap<String, Vec<String>>, package_name: &str) -> Option<Vec<String>> {
        match &e.kind {
            ExprKind::Ident(n) => aliases.get(n).cloned(),
            ExprKind::Call { callee, args, .. } => {
                let is_require = matches!(&callee.kind, ExprKind::Ident(n) if n == "require");
                let ok = matches!(args.first().map(|a| &a.kind), Some(ExprKind::Str(s)) if s == package_name);
                (is_require && ok).then(Vec::new)
            }
            ExprKind::Member {
                object,
                prop: MemberProp::Name(name),
                ..
            } => {
                let mut c = resolve(object, aliases, package_name)?;
                c.push(name.clone());
                Some(c)
            }
            _ => None,
        }
    }
    let resolver = |e: &Expr| resolve(e, aliases, package_name);
    let mut c = Calls {
        resolver: &resolver,
        chains: Vec::new(),
        methods: BTreeSet::new(),
    };
    for s in program {
        c.visit_stmt(s);
    }
    (c.chains, c.methods)
}

/// True when the exploit loads `package_name` and calls the target through
/// its access path. A prototype method counts when its class is constructed
/// from the package and a method of that name is called.
pub fn invokes_target(exploit: &str, package_name: &str, target: &ExportedApi) -> bool {
    let Ok(program) = pocgen_js::parse(exploit) else { return false };
    let aliases = package_aliases(&program.body, package_name);
    let (chains, methods) = invoked(&program.body, &aliases, package_name);
    let chain: Vec<String> = target.member_chain().iter().map(|s| s.to_string()).collect();
    match chain.iter().position(|s| s == "prototype") {
        Some(p) => {
            let class = &chain[..p];
            chains.iter().any(|c| c == class) && methods.contains(target.terminal_name())
        }
        None => chains.contains(&chain),
    }
}

/// False when the run shows the package could not be loaded.
pub fn package_loaded(report: &ExecutionReport) -> bool {
    let load_error = report.errors.iter().any(|e| {
        e.message.contains("Cannot find module") || e.message.contains("MODULE_NOT_FOUND") || e.message.contains("ERR_REQUIRE_ESM")
    });
    !load_error && !(report.exit == ExitStatus::Crashed && report.coverage.is_empty() && report.sink_event_count() == 0)
}

/// Drops sections the last attempt showed to be unnecessary: usage
/// examples once the target is invoked correctly, similar exploits once
/// the exploit passes the anti-cheat rules. Both require the package to
/// have loaded.
pub fn shrink_prompt(
    bundle: &PromptBundle,
    package_name: &str,
    target: &ExportedApi,
    class: VulnClass,
    exploit: &str,
    report: &ExecutionReport,
) -> PromptBundle {
    let mut out = bundle.clone();
    if !package_loaded(report) || exploit.trim().is_empty() {
        return out;
    }
    if out.has(SectionId::UsageSnippets) && invokes_target(exploit, package_name, target) {
        out.remove(SectionId::UsageSnippets);
    }
    if out.has(SectionId::SimilarExploits) && anticheat_static(class, exploit) == AntiCheat::Ok {
        out.remove(SectionId::SimilarExploits);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report_store::{AdvisorySource, ClassificationMethod};

    fn report() -> ClassifiedReport {
        ClassifiedReport {
            report: VulnReport {
                id: "CVE-2024-57063".into(),
                source: AdvisorySource::Cve,
                summary: "A prototype pollution in the lib function of php-date-formatter v1.3.6 allows attackers to cause a Denial of Service (DoS) via supplying a crafted payload.".into(),
                details: String::new(),
                package_name: "php-date-formatter".into(),
                affected_range: "<=1.3.6".into(),
                cwe_ids: vec![1321],
                references: vec![],
                published: String::new(),
            },
            vuln_class: VulnClass::PrototypePollution,
            method: ClassificationMethod::CweMap,
        }
    }

    fn entry(d: &str) -> ExploitCorpusEntry {
        ExploitCorpusEntry {
            description: d.into(),
            exploit_code: format!("// {d}"),
            vuln_class: VulnClass::CommandInjection,
        }
    }

    #[test]
    fn tokens_split_on_punctuation() {
        assert_eq!(bm25_tokens("Prototype-Pollution in `lib()`, v1.3"), ["prototype", "pollution", "in", "lib", "v1", "3"]);
    }

    #[test]
    fn self_match_ranks_first() {
        let corpus = [
            entry("command injection in git clone"),
            entry("prototype pollution in merge of options"),
            entry("path traversal in static file server"),
        ];
        let mut r = report().report;
        r.summary = corpus[1].description.clone();
        let got = select_similar_exploits(&r, &corpus, 3);
        assert_eq!(got[0], corpus[1]);
        let mut sorted = got.clone();
        sorted.sort_by(|a, b| a.description.cmp(&b.description));
        let mut all = corpus.to_vec();
        all.sort_by(|a, b| a.description.cmp(&b.description));
        assert_eq!(sorted, all);
    }

    #[test]
    fn k_beyond_corpus_returns_all() {
        let corpus = [entry("a b"), entry("c d")];
        assert_eq!(select_similar_exploits(&report().report, &corpus, 10).len(), 2);
    }

    #[test]
    fn skeleton_for_root_constructor() {
        let s = render_skeleton("php-date-formatter", &ExportedApi::new("root", ApiKind::Constructor, 1));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "async function exploit() {");
        assert_eq!(lines[1], "  const PhpDateFormatter = require(\"php-date-formatter\");");
        assert_eq!(*lines.last().unwrap(), "await exploit();");
        assert_eq!(s, render_skeleton("php-date-formatter", &ExportedApi::new("root", ApiKind::Constructor, 1)));
    }

    #[test]
    fn skeleton_dereferences_nested_path() {
        let s = render_skeleton("pkg", &ExportedApi::new("root.a.b", ApiKind::Function, 0));
        assert!(s.contains("  const b = pkg.a.b;"), "{s}");
        let s = render_skeleton("x", &ExportedApi::new("root.x", ApiKind::Function, 0));
        assert!(s.contains("  const target = x.x;"), "{s}");
        let s = render_skeleton("@s/p", &ExportedApi::new("root.my-fn", ApiKind::Function, 0));
        assert!(s.contains("const target = p[\"my-fn\"];"), "{s}");
        let s = render_skeleton("djv", &ExportedApi::new("root.Environment.prototype.import", ApiKind::Method, 1));
        assert!(s.contains("  const importFn = djv.Environment.prototype.import;"), "{s}");
        assert!(render_skeleton("class", &ExportedApi::new("root", ApiKind::Function, 0)).contains("const classPkg = require"));
    }

    #[test]
    fn package_idents() {
        assert_eq!(package_ident("php-date-formatter"), "phpDateFormatter");
        assert_eq!(package_ident("@scope/x.y"), "xY");
        assert_eq!(package_ident("7zip"), "_7zip");
    }

    fn inputs<'a>(c: &'a ClassifiedReport, t: &'a ExportedApi, snippets: &'a [UsageSnippet], similar: &'a [ExploitCorpusEntry]) -> PromptInputs<'a> {
        PromptInputs {
            classified: c,
            target: t,
            taint_text: "Vulnerable constructor of class `DateFormatter` located in php-date-formatter/js/php-date-formatter.js:\n```js\nself.settings = $.extend(true, {}, defaultSettings, options); // tainted: \"options\"\n```",
            snippets,
            similar,
            trigger_goal: crate::validator::trigger_goal(c.vuln_class),
        }
    }

    #[test]
    fn initial_prompt_follows_template() {
        let c = report();
        let t = ExportedApi::new("root", ApiKind::Constructor, 1);
        let snippets = [UsageSnippet {
            origin: SnippetOrigin::TestFile,
            text: "new D({})".into(),
            summary: None,
        }];
        let similar = [entry("prototype pollution in deep merge")];
        let b = build_initial_prompt(inputs(&c, &t, &snippets, &similar), DEFAULT_PROMPT_TOKENS);
        let ids: Vec<SectionId> = b.sections.iter().map(|(i, _)| *i).collect();
        assert_eq!(
            ids,
            [
                SectionId::Header,
                SectionId::Description,
                SectionId::UsageSnippets,
                SectionId::Skeleton,
                SectionId::Task,
                SectionId::SimilarExploits,
                SectionId::SourceCode
            ]
        );
        assert_eq!(b.get(SectionId::Header), Some("`php-date-formatter` is vulnerable to prototype pollution."));
        let task = b.get(SectionId::Task).unwrap();
        assert!(task.contains("function named `exploit`"));
        assert!(task.contains("to add a property named `exploited` to `Object.prototype`."));
        assert!(b.text().starts_with("`php-date-formatter` is vulnerable to prototype pollution.\n## Vulnerability Description:\n```\nA prototype pollution"));

        let again = build_initial_prompt(inputs(&c, &t, &snippets, &similar), DEFAULT_PROMPT_TOKENS);
        assert_eq!(again.content_hash, b.content_hash);
        let round: PromptBundle = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(content_hash(&round.sections), b.content_hash);

        let bare = build_initial_prompt(inputs(&c, &t, &[], &[]), DEFAULT_PROMPT_TOKENS);
        assert!(!bare.has(SectionId::UsageSnippets));
        assert!(!bare.has(SectionId::SimilarExploits));
        assert_ne!(bare.content_hash, b.content_hash);
    }

    #[test]
    fn truncation_cuts_source_then_similar() {
        let c = report();
        let t = ExportedApi::new("root", ApiKind::Constructor, 1);
        let long: String = (0..400).map(|i| format!("line {i} of code\n")).collect();
        let taint = format!("```js\n{long}```");
        let similar: Vec<ExploitCorpusEntry> = (0..3).map(|i| entry(&format!("similar {i} {}", "x ".repeat(200)))).collect();
        let mut inp = inputs(&c, &t, &[], &similar);
        inp.taint_text = &taint;
        let full = build_initial_prompt(inp, usize::MAX);
        let budget = full.estimated_tokens() - 500;
        let cut = build_initial_prompt(inp, budget);
        assert!(cut.estimated_tokens() <= budget);
        let src = cut.get(SectionId::SourceCode).unwrap();
        assert!(src.starts_with("## Source code:\n```js\nline 0 of code"));
        assert!(src.ends_with("// ... truncated\n```"));
        assert_eq!(cut.get(SectionId::SimilarExploits), full.get(SectionId::SimilarExploits));

        let partial = build_initial_prompt(inp, 700);
        assert_eq!(partial.get(SectionId::SimilarExploits), Some(similar_section(&similar[..2]).as_str()));
        let tiny = build_initial_prompt(inp, 300);
        assert!(!tiny.has(SectionId::SimilarExploits));
        for id in [SectionId::Header, SectionId::Description, SectionId::Task, SectionId::SourceCode] {
            assert!(tiny.has(id));
        }
    }

    #[test]
    fn set_keeps_template_order() {
        let mut b = PromptBundle::new(String::new(), vec![(SectionId::SourceCode, "s".into()), (SectionId::Header, "h".into())]);
        b.set(SectionId::Task, "t".into());
        let ids: Vec<SectionId> = b.sections.iter().map(|(i, _)| *i).collect();
        assert_eq!(ids, [SectionId::Header, SectionId::Task, SectionId::SourceCode]);
    }

    #[test]
    fn recognizes_target_invocations() {
        let ctor = ExportedApi::new("root", ApiKind::Constructor, 1);
        assert!(invokes_target("async function exploit() {\n  const D = require(\"php-date-formatter\");\n  new D(JSON.parse('{}'));\n}\nawait exploit();", "php-date-formatter", &ctor));
        assert!(!invokes_target("const D = require('other');\nnew D({})", "php-date-formatter", &ctor));
        let f = ExportedApi::new("root.a.b", ApiKind::Function, 1);
        assert!(invokes_target("const { a } = require('p')\na.b(1)", "p", &f));
        assert!(invokes_target("const fn = require('p').a.b\nfn(1)", "p", &f));
        assert!(!invokes_target("const p = require('p')\np.a(1)", "p", &f));
        let m = ExportedApi::new("root.Environment.prototype.import", ApiKind::Method, 1);
        assert!(invokes_target("const djv = require('p')\nconst env = new djv.Environment()\nenv.import({})", "p", &m));
        assert!(!invokes_target("const djv = require('p')\nconst env = djv()\nenv.import({})", "p", &m));
        assert!(!invokes_target("this is not js (", "p", &f));
    }

    fn loaded_report() -> ExecutionReport {
        let mut r = ExecutionReport::default();
        r.coverage.insert("src/index.js".into(), [1, 2].into());
        r
    }

    #[test]
    fn shrink_drops_usage_and_similar() {
        let c = report();
        let t = ExportedApi::new("root", ApiKind::Constructor, 1);
        let snippets = [UsageSnippet {
            origin: SnippetOrigin::TestFile,
            text: "new D({})".into(),
            summary: None,
        }];
        let similar = [entry("prototype pollution in deep merge")];
        let b = build_initial_prompt(inputs(&c, &t, &snippets, &similar), DEFAULT_PROMPT_TOKENS);
        let exploit = "async function exploit() {\n  const D = require(\"php-date-formatter\");\n  new D(JSON.parse('{\"__proto__\": {\"exploited\": true}}'));\n}\nawait exploit();";
        let once = shrink_prompt(&b, "php-date-formatter", &t, c.vuln_class, exploit, &loaded_report());
        assert!(!once.has(SectionId::UsageSnippets));
        assert!(!once.has(SectionId::SimilarExploits));
        assert_ne!(once.content_hash, b.content_hash);
        let twice = shrink_prompt(&once, "php-date-formatter", &t, c.vuln_class, exploit, &loaded_report());
        assert_eq!(twice, once);

        let cheat = "const D = require('php-date-formatter')\nnew D({})\nObject.prototype.exploited = true";
        let kept = shrink_prompt(&b, "php-date-formatter", &t, c.vuln_class, cheat, &loaded_report());
        assert!(!kept.has(SectionId::UsageSnippets));
        assert!(kept.has(SectionId::SimilarExploits));

        let failed = ExecutionReport::crashed("Error: Cannot find module 'php-date-formatter'");
        assert_eq!(shrink_prompt(&b, "php-date-formatter", &t, c.vuln_class, exploit, &failed), b);
    }

    #[test]
    fn corpus_lines() {
        let text = "{\"description\":\"d\",\"exploit_code\":\"e\",\"vuln_class\":\"redos\"}\n\n";
        assert_eq!(parse_exploit_corpus(text).unwrap().len(), 1);
        let bad = "{\"description\":\"\",\"exploit_code\":\"e\",\"vuln_class\":\"redos\"}";
        assert!(matches!(parse_exploit_corpus(bad), Err(CorpusError::Entry { line: 1, .. })));
    }
}
