//! Package installation, export enumeration and vulnerable-function ranking.

mod exports;
mod install;

use serde::{Deserialize, Serialize};

use crate::llm::{ChatRequest, Gateway, GatewayError};
use crate::report_store::VulnReport;

pub use exports::{enumerate_exports, static_exports, Enumeration, EnumerationSource, MAX_EXPORT_DEPTH};
pub use install::{install_package, installed_dir, InstallError, PackageSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiKind {
    Function,
    Constructor,
    Method,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceLoc {
    pub file: String,
    pub start_line: u32,
    pub end_line: u32,
}

/// A function reachable from the package root object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExportedApi {
    /// Dotted path from the package root, e.g. `root.Klass.prototype.bar`.
    pub access_path: String,
    pub kind: ApiKind,
    pub arity: usize,
    #[serde(default)]
    pub source_loc: Option<SourceLoc>,
}

impl ExportedApi {
    pub fn new(access_path: &str, kind: ApiKind, arity: usize) -> Self {
        Self {
            access_path: access_path.to_string(),
            kind,
            arity,
            source_loc: None,
        }
    }

    /// Last meaningful path segment: `bar` for `root.Klass.prototype.bar`.
    pub fn terminal_name(&self) -> &str {
        self.access_path
            .rsplit('.')
            .find(|s| *s != "prototype")
            .unwrap_or(&self.access_path)
    }

    /// Path segments below the root, without the leading `root`.
    pub fn member_chain(&self) -> Vec<&str> {
        self.access_path.split('.').skip(1).collect()
    }

    /// Display name used in prompts: `Klass.prototype.bar`, or the package
    /// name itself for the root export.
    pub fn display_name(&self, package_name: &str) -> String {
        match self.access_path.strip_prefix("root.") {
            Some(rest) => rest.to_string(),
            None => package_name.to_string(),
        }
    }
}

/// Candidates for the vulnerable function, most likely first.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateRanking {
    pub ordered: Vec<ExportedApi>,
}

fn kind_label(kind: ApiKind) -> &'static str {
    match kind {
        ApiKind::Function => "function",
        ApiKind::Constructor => "constructor",
        ApiKind::Method => "method",
    }
}

fn ranking_prompt(report: &VulnReport, apis: &[ExportedApi]) -> String {
    let listing = apis
        .iter()
        .enumerate()
        .map(|(i, a)| {
            format!(
                "{}. `{}` ({}, {} parameters)",
                i + 1,
                a.display_name(&report.package_name),
                kind_label(a.kind),
                a.arity
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "The following vulnerability was reported for the npm package `{}`.\n\n## Vulnerability Description:\n```\n{}\n```\n\n## Exported functions:\n{}\n\nRank these functions by how likely each one is the vulnerable function described in the report. Answer with a numbered list of the function names exactly as written above, most likely first.",
        report.package_name,
        report.description(),
        listing
    )
}

/// Names in a ranking answer, in order. Only numbered or bulleted lines are
/// read; a backticked span wins over the bare line text.
pub fn parse_ranking_names(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        let rest = if let Some(r) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
            r
        } else {
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            if digits == 0 {
                continue;
            }
            let r = &t[digits..];
            match r.strip_prefix('.').or_else(|| r.strip_prefix(')')) {
                Some(r) => r,
                None => continue,
            }
        };
        let name = match rest.split('`').nth(1) {
            Some(inner) if rest.contains('`') => inner.to_string(),
            _ => rest
                .split_whitespace()
                .next()
                .unwrap_or("")
                .trim_matches(|c: char| c == '*' || c == ':' || c == ',')
                .to_string(),
        };
        let name = match name.find('(') {
            Some(i) => name[..i].to_string(),
            None => name,
        };
        if !name.is_empty() {
            out.push(name);
        }
    }
    out
}

fn lookup<'a>(name: &str, apis: &'a [ExportedApi], package_name: &str) -> Option<&'a ExportedApi> {
    let name = name.trim();
    apis.iter().find(|a| {
        a.access_path == name
            || a.display_name(package_name) == name
            || (a.access_path == "root" && (name == "root" || name == "module.exports"))
    })
}

/// Orders `apis` by the model's judgement of which is the vulnerable
/// function. Unknown names are ignored and omitted APIs are appended in
/// enumeration order, so the result is always a permutation of `apis`.
pub fn rank_candidates(report: &VulnReport, apis: &[ExportedApi], gateway: &mut Gateway) -> Result<CandidateRanking, GatewayError> {
    if apis.len() <= 1 {
        return Ok(CandidateRanking { ordered: apis.to_vec() });
    }
    let request = ChatRequest::user(ranking_prompt(report, apis)).with_purpose("rank");
    let mut ordered: Vec<ExportedApi> = Vec::new();
    for _ in 0..2 {
        let response = gateway.chat(request.clone())?;
        for name in parse_ranking_names(&response.text) {
            if let Some(api) = lookup(&name, apis, &report.package_name) {
                if !ordered.contains(api) {
                    ordered.push(api.clone());
                }
            }
        }
        if !ordered.is_empty() {
            break;
        }
    }
    for api in apis {
        if !ordered.contains(api) {
            ordered.push(api.clone());
        }
    }
    Ok(CandidateRanking { ordered })
}

pub const DEFAULT_BATCH_SIZE: usize = 50;

/// Contiguous chunks of the ranking in rank order.
pub fn batch_candidates(ranking: &CandidateRanking, size: usize) -> Vec<Vec<ExportedApi>> {
    ranking.ordered.chunks(size.max(1)).map(<[ExportedApi]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatExchange, ChatResponse};
    use crate::report_store::AdvisorySource;

    fn report() -> VulnReport {
        VulnReport {
            id: "CVE-2024-57063".into(),
            source: AdvisorySource::Cve,
            summary: "A prototype pollution in the lib function of php-date-formatter v1.3.6".into(),
            details: String::new(),
            package_name: "php-date-formatter".into(),
            affected_range: "<=1.3.6".into(),
            cwe_ids: vec![1321],
            references: vec![],
            published: String::new(),
        }
    }

    fn apis() -> Vec<ExportedApi> {
        vec![
            ExportedApi::new("root.parseDate", ApiKind::Function, 2),
            ExportedApi::new("root", ApiKind::Constructor, 1),
            ExportedApi::new("root.prototype.formatDate", ApiKind::Method, 2),
        ]
    }

    fn gateway(answers: &[&str]) -> Gateway {
        Gateway::replay(
            answers
                .iter()
                .map(|a| ChatExchange {
                    request: ChatRequest::default(),
                    response: ChatResponse::text(*a),
                    request_digest: String::new(),
                })
                .collect(),
        )
    }

    #[test]
    fn parses_numbered_lists_with_prose() {
        let text = "Sure, here is my ranking:\n1. `php-date-formatter` (constructor)\n2) prototype.formatDate() - formats\n- parseDate\nThat is all.";
        assert_eq!(
            parse_ranking_names(text),
            ["php-date-formatter", "prototype.formatDate", "parseDate"]
        );
    }

    #[test]
    fn ranking_puts_named_constructor_first() {
        let mut g = gateway(&["1. `php-date-formatter`\n2. `parseDate`\n3. `prototype.formatDate`"]);
        let r = rank_candidates(&report(), &apis(), &mut g).unwrap();
        assert_eq!(r.ordered[0].access_path, "root");
        assert_eq!(r.ordered.len(), 3);
    }

    #[test]
    fn unknown_names_are_dropped_and_missing_appended() {
        let mut g = gateway(&["1. `lib`\n2. `prototype.formatDate`"]);
        let r = rank_candidates(&report(), &apis(), &mut g).unwrap();
        let paths: Vec<&str> = r.ordered.iter().map(|a| a.access_path.as_str()).collect();
        assert_eq!(paths, ["root.prototype.formatDate", "root.parseDate", "root"]);
    }

    #[test]
    fn unusable_answers_fall_back_to_enumeration_order() {
        let mut g = gateway(&["no idea", "still no idea"]);
        let r = rank_candidates(&report(), &apis(), &mut g).unwrap();
        assert_eq!(r.ordered, apis());
        assert_eq!(g.remaining(), 0);
    }

    #[test]
    fn single_api_needs_no_model() {
        let mut g = gateway(&[]);
        let one = vec![apis().remove(1)];
        assert_eq!(rank_candidates(&report(), &one, &mut g).unwrap().ordered, one);
    }

    #[test]
    fn batches_preserve_order() {
        let many: Vec<ExportedApi> = (0..120).map(|i| ExportedApi::new(&format!("root.f{i}"), ApiKind::Function, 0)).collect();
        let ranking = CandidateRanking { ordered: many.clone() };
        let sizes: Vec<usize> = batch_candidates(&ranking, 50).iter().map(Vec::len).collect();
        assert_eq!(sizes, [50, 50, 20]);
        assert_eq!(batch_candidates(&ranking, 50).concat(), many);
        let three = CandidateRanking { ordered: many[..3].to_vec() };
        assert_eq!(batch_candidates(&three, 50).len(), 1);
        let singles = batch_candidates(&three, 1);
        assert_eq!(singles, vec![vec![many[0].clone()], vec![many[1].clone()], vec![many[2].clone()]]);
    }
}
