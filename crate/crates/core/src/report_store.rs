//! Advisory ingestion, vulnerability-class detection and corpus deduplication.
//!
//! Advisories arrive as an OSV-like JSON subset (one object per document, or
//! one per line in corpus files). Classification tries the CWE map first, then
//! keyword patterns over the advisory text, and only then asks the model.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ChatRequest, Gateway, GatewayError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdvisoryError {
    #[error("malformed advisory at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("advisory is missing required field `{0}`")]
    Schema(String),
}

#[derive(Debug, Error)]
pub enum ClassificationError {
    #[error("model response did not name a supported vulnerability class: {0:?}")]
    Unparseable(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvisorySource {
    #[serde(rename = "GHSA")]
    Ghsa,
    Snyk,
    #[serde(rename = "CVE")]
    Cve,
    Other,
}

impl AdvisorySource {
    pub fn from_tag(tag: &str) -> Self {
        match tag.trim().to_ascii_lowercase().as_str() {
            "ghsa" | "github" => Self::Ghsa,
            "snyk" => Self::Snyk,
            "cve" | "nvd" => Self::Cve,
            _ => Self::Other,
        }
    }
}

/// The five supported vulnerability classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VulnClass {
    PathTraversal,
    PrototypePollution,
    CommandInjection,
    CodeInjection,
    #[serde(rename = "redos")]
    ReDoS,
}

impl VulnClass {
    pub const ALL: [VulnClass; 5] = [
        VulnClass::PathTraversal,
        VulnClass::PrototypePollution,
        VulnClass::CommandInjection,
        VulnClass::CodeInjection,
        VulnClass::ReDoS,
    ];

    /// Human-readable name used in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            VulnClass::PathTraversal => "path traversal",
            VulnClass::PrototypePollution => "prototype pollution",
            VulnClass::CommandInjection => "command injection",
            VulnClass::CodeInjection => "code injection",
            VulnClass::ReDoS => "ReDoS",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            VulnClass::PathTraversal => "path_traversal",
            VulnClass::PrototypePollution => "prototype_pollution",
            VulnClass::CommandInjection => "command_injection",
            VulnClass::CodeInjection => "code_injection",
            VulnClass::ReDoS => "redos",
        }
    }
}

impl fmt::Display for VulnClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnReport {
    pub id: String,
    pub source: AdvisorySource,
    pub summary: String,
    pub details: String,
    pub package_name: String,
    pub affected_range: String,
    pub cwe_ids: Vec<u32>,
    pub references: Vec<String>,
    pub published: String,
}

static CVE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bCVE-\d{4}-\d{4,}\b").unwrap());

impl VulnReport {
    /// Text handed to the model and to retrieval: summary followed by details.
    pub fn description(&self) -> String {
        match (self.summary.trim().is_empty(), self.details.trim().is_empty()) {
            (false, false) => format!("{}\n\n{}", self.summary.trim(), self.details.trim()),
            (false, true) => self.summary.trim().to_string(),
            (true, false) => self.details.trim().to_string(),
            (true, true) => String::new(),
        }
    }

    /// CVE identifier of the advisory: the id itself when it is a CVE id,
    /// otherwise the first CVE id mentioned in the references.
    pub fn cve_id(&self) -> Option<String> {
        if let Some(m) = CVE_ID.find(&self.id) {
            if m.start() == 0 && m.end() == self.id.len() {
                return Some(self.id.to_ascii_uppercase());
            }
        }
        self.references
            .iter()
            .find_map(|r| CVE_ID.find(r).map(|m| m.as_str().to_ascii_uppercase()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationMethod {
    CweMap,
    PatternMatch,
    LlmClassified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedReport {
    pub report: VulnReport,
    pub vuln_class: VulnClass,
    pub method: ClassificationMethod,
}

// ---------------------------------------------------------------------------
// parsing

fn field_err(path: &str, message: impl Into<String>) -> AdvisoryError {
    AdvisoryError::Parse {
        path: path.to_string(),
        message: message.into(),
    }
}

fn opt_string(obj: &serde_json::Map<String, Value>, key: &str) -> Result<String, AdvisoryError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(field_err(key, format!("expected string, found {}", type_name(other)))),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Parses one advisory document. The `source` tag names the database the
/// document came from; it wins over the document's own `source` field unless
/// the tag is [`AdvisorySource::Other`].
pub fn parse_advisory(raw: &str, source: AdvisorySource) -> Result<VulnReport, AdvisoryError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| field_err("$", e.to_string()))?;
    advisory_from_value(&value, source)
}

pub fn advisory_from_value(value: &Value, source: AdvisorySource) -> Result<VulnReport, AdvisoryError> {
    let Value::Object(obj) = value else {
        return Err(field_err("$", format!("expected object, found {}", type_name(value))));
    };

    let id = opt_string(obj, "id")?;
    if id.trim().is_empty() {
        return Err(AdvisoryError::Schema("id".into()));
    }

    let package_name = match obj.get("package") {
        None | Some(Value::Null) => return Err(AdvisoryError::Schema("package".into())),
        Some(Value::Object(pkg)) => {
            if let Some(eco) = pkg.get("ecosystem") {
                match eco {
                    Value::String(e) if e.eq_ignore_ascii_case("npm") => {}
                    Value::String(e) => {
                        return Err(field_err("package.ecosystem", format!("unsupported ecosystem {e:?}")))
                    }
                    other => {
                        return Err(field_err(
                            "package.ecosystem",
                            format!("expected string, found {}", type_name(other)),
                        ))
                    }
                }
            }
            match pkg.get("name") {
                Some(Value::String(n)) if !n.trim().is_empty() => n.trim().to_string(),
                Some(Value::String(_)) | None | Some(Value::Null) => {
                    return Err(AdvisoryError::Schema("package.name".into()))
                }
                Some(other) => {
                    return Err(field_err(
                        "package.name",
                        format!("expected string, found {}", type_name(other)),
                    ))
                }
            }
        }
        Some(other) => {
            return Err(field_err("package", format!("expected object, found {}", type_name(other))))
        }
    };

    let cwe_ids = match obj.get("cwe_ids") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| parse_cwe(v).ok_or_else(|| field_err(&format!("cwe_ids[{i}]"), "expected CWE number")))
            .collect::<Result<_, _>>()?,
        Some(other) => return Err(field_err("cwe_ids", format!("expected array, found {}", type_name(other)))),
    };

    let references = match obj.get("references") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::String(s) => Ok(s.clone()),
                // OSV proper uses {"type": .., "url": ..} objects.
                Value::Object(o) => match o.get("url") {
                    Some(Value::String(s)) => Ok(s.clone()),
                    _ => Err(field_err(&format!("references[{i}].url"), "expected string")),
                },
                other => Err(field_err(
                    &format!("references[{i}]"),
                    format!("expected string, found {}", type_name(other)),
                )),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(field_err("references", format!("expected array, found {}", type_name(other))))
        }
    };

    let doc_source = opt_string(obj, "source")?;
    let source = match source {
        AdvisorySource::Other if !doc_source.is_empty() => AdvisorySource::from_tag(&doc_source),
        s => s,
    };

    Ok(VulnReport {
        id: id.trim().to_string(),
        source,
        summary: opt_string(obj, "summary")?,
        details: opt_string(obj, "details")?,
        package_name,
        affected_range: opt_string(obj, "affected_range")?,
        cwe_ids,
        references,
        published: opt_string(obj, "published")?,
    })
}

/// Accepts `1321`, `"1321"` and `"CWE-1321"`.
fn parse_cwe(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
        Value::String(s) => {
            let s = s.trim();
            let digits = s
                .strip_prefix("CWE-")
                .or_else(|| s.strip_prefix("cwe-"))
                .unwrap_or(s);
            digits.parse().ok()
        }
        _ => None,
    }
}

/// Serializes a report back into the advisory document schema.
pub fn advisory_to_value(report: &VulnReport) -> Value {
    serde_json::json!({
        "id": report.id,
        "source": match report.source {
            AdvisorySource::Ghsa => "GHSA",
            AdvisorySource::Snyk => "Snyk",
            AdvisorySource::Cve => "CVE",
            AdvisorySource::Other => "Other",
        },
        "summary": report.summary,
        "details": report.details,
        "package": { "ecosystem": "npm", "name": report.package_name },
        "affected_range": report.affected_range,
        "cwe_ids": report.cwe_ids,
        "references": report.references,
        "published": report.published,
    })
}

/// A corpus line that failed to parse. Corpus loading never aborts on one.
#[derive(Debug)]
pub struct RejectedLine {
    pub line: usize,
    pub error: AdvisoryError,
}

/// Reads a JSON-Lines corpus. Blank lines are skipped.
pub fn read_corpus(path: &Path, source: AdvisorySource) -> std::io::Result<(Vec<VulnReport>, Vec<RejectedLine>)> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_corpus(&text, source))
}

pub fn parse_corpus(text: &str, source: AdvisorySource) -> (Vec<VulnReport>, Vec<RejectedLine>) {
    let mut reports = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_advisory(line, source) {
            Ok(r) => reports.push(r),
            Err(error) => rejected.push(RejectedLine { line: i + 1, error }),
        }
    }
    (reports, rejected)
}

// ---------------------------------------------------------------------------
// classification

/// Maps a single CWE number to its class.
pub fn class_for_cwe(cwe: u32) -> Option<VulnClass> {
    match cwe {
        22 | 35 => Some(VulnClass::PathTraversal),
        1321 => Some(VulnClass::PrototypePollution),
        77 | 78 => Some(VulnClass::CommandInjection),
        94..=99 => Some(VulnClass::CodeInjection),
        400 | 730 | 1333 => Some(VulnClass::ReDoS),
        _ => None,
    }
}

pub fn classify_by_cwe(cwe_ids: &[u32]) -> Option<VulnClass> {
    cwe_ids.iter().find_map(|&c| class_for_cwe(c))
}

/// Keyword patterns per class, in priority order. Each pattern is matched
/// case-insensitively on word boundaries, so `exec` does not fire on
/// "code execution" and `eval` does not fire on "evaluate".
pub const CLASS_PATTERNS: [(VulnClass, &[&str]); 5] = [
    (VulnClass::PathTraversal, &["travers(e|al)"]),
    (VulnClass::PrototypePollution, &["prototype", "pollut(e|ion)"]),
    (
        VulnClass::CommandInjection,
        &["exec", "execSync", "shell injection", "os injection"],
    ),
    (VulnClass::CodeInjection, &["eval", "code injection", "code execution"]),
    (VulnClass::ReDoS, &["inefficient", "regular expression"]),
];

static PATTERN_REGEXES: LazyLock<Vec<(VulnClass, Vec<Regex>)>> = LazyLock::new(|| {
    CLASS_PATTERNS
        .iter()
        .map(|(class, pats)| {
            let regexes = pats
                .iter()
                .map(|p| Regex::new(&format!(r"(?i)\b(?:{p})\b")).expect("static pattern"))
                .collect();
            (*class, regexes)
        })
        .collect()
});

pub fn classify_by_pattern(text: &str) -> Option<VulnClass> {
    PATTERN_REGEXES
        .iter()
        .find(|(_, regexes)| regexes.iter().any(|r| r.is_match(text)))
        .map(|(class, _)| *class)
}

/// CWE map first, then patterns over summary and details. `None` when
/// neither mechanism recognizes the report.
pub fn classify_static(report: &VulnReport) -> Option<ClassifiedReport> {
    let (vuln_class, method) = if let Some(c) = classify_by_cwe(&report.cwe_ids) {
        (c, ClassificationMethod::CweMap)
    } else if let Some(c) = classify_by_pattern(&format!("{}\n{}", report.summary, report.details)) {
        (c, ClassificationMethod::PatternMatch)
    } else {
        return None;
    };
    Some(ClassifiedReport {
        report: report.clone(),
        vuln_class,
        method,
    })
}

static CLASS_NAMES: LazyLock<Vec<(VulnClass, Regex)>> = LazyLock::new(|| {
    [
        (VulnClass::PathTraversal, r"path[\s_-]*traversal|directory[\s_-]*traversal"),
        (VulnClass::PrototypePollution, r"prototype[\s_-]*pollution"),
        (VulnClass::CommandInjection, r"command[\s_-]*injection|os[\s_-]*command[\s_-]*injection"),
        (VulnClass::CodeInjection, r"code[\s_-]*injection"),
        (VulnClass::ReDoS, r"\bredos\b|regular[\s_-]*expression[\s_-]*denial[\s_-]*of[\s_-]*service"),
    ]
    .into_iter()
    .map(|(c, p)| (c, Regex::new(&format!("(?i){p}")).unwrap()))
    .collect()
});

/// Finds the earliest class name mentioned in a model answer.
pub fn parse_class_answer(text: &str) -> Option<VulnClass> {
    CLASS_NAMES
        .iter()
        .filter_map(|(c, re)| re.find(text).map(|m| (m.start(), *c)))
        .min()
        .map(|(_, c)| c)
}

fn classification_prompt(report: &VulnReport) -> String {
    let options = VulnClass::ALL
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}", i + 1, c.display_name()))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "The following vulnerability was reported for the npm package `{}`.\n\n## Vulnerability Description:\n```\n{}\n```\n\nSelect the most relevant vulnerability type from this list:\n{}\n\nAnswer with the name of exactly one type.",
        report.package_name,
        report.description(),
        options
    )
}

/// Asks the model for the class; one retry on an unusable answer.
pub fn classify_by_llm(report: &VulnReport, gateway: &mut Gateway) -> Result<VulnClass, ClassificationError> {
    let request = ChatRequest::user(classification_prompt(report)).with_purpose("classify");
    let mut last = String::new();
    for _ in 0..2 {
        let response = gateway.chat(request.clone())?;
        if let Some(c) = parse_class_answer(&response.text) {
            return Ok(c);
        }
        last = response.text;
    }
    Err(ClassificationError::Unparseable(last))
}

/// Full priority chain: CWE map, patterns, then the model.
pub fn classify(report: &VulnReport, gateway: &mut Gateway) -> Result<ClassifiedReport, ClassificationError> {
    if let Some(c) = classify_static(report) {
        return Ok(c);
    }
    let vuln_class = classify_by_llm(report, gateway)?;
    Ok(ClassifiedReport {
        report: report.clone(),
        vuln_class,
        method: ClassificationMethod::LlmClassified,
    })
}

/// Drops later records whose CVE id was already seen. Records without a CVE
/// id are always kept. Order is preserved.
pub fn dedup(reports: Vec<VulnReport>) -> Vec<VulnReport> {
    let mut seen = HashSet::new();
    reports
        .into_iter()
        .filter(|r| match r.cve_id() {
            Some(cve) => seen.insert(cve),
            None => true,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"{"id":"CVE-2024-57063","source":"GHSA","summary":"A prototype pollution in the lib function of php-date-formatter v1.3.6 allows attackers to cause a Denial of Service (DoS) via supplying a crafted payload.","details":"","package":{"ecosystem":"npm","name":"php-date-formatter"},"affected_range":"<=1.3.6","cwe_ids":[1321],"references":["https://nvd.nist.gov/vuln/detail/CVE-2024-57063"],"published":"2025-02-05"}"#;

    pub(crate) fn report(id: &str, refs: &[&str]) -> VulnReport {
        VulnReport {
            id: id.into(),
            source: AdvisorySource::Ghsa,
            summary: String::new(),
            details: String::new(),
            package_name: "pkg".into(),
            affected_range: String::new(),
            cwe_ids: vec![],
            references: refs.iter().map(|s| s.to_string()).collect(),
            published: String::new(),
        }
    }

    #[test]
    fn parses_ghsa_style_record() {
        let r = parse_advisory(FIG1, AdvisorySource::Ghsa).unwrap();
        assert_eq!(r.id, "CVE-2024-57063");
        assert_eq!(r.cwe_ids, vec![1321]);
        assert_eq!(r.package_name, "php-date-formatter");
    }

    #[test]
    fn missing_references_default_to_empty() {
        let raw = r#"{"id":"X-1","package":{"name":"a"}}"#;
        let r = parse_advisory(raw, AdvisorySource::Other).unwrap();
        assert!(r.references.is_empty());
        assert!(r.cwe_ids.is_empty());
        assert_eq!(r.summary, "");
    }

    #[test]
    fn missing_package_is_schema_error() {
        let raw = r#"{"id":"X-1","summary":"s"}"#;
        assert_eq!(
            parse_advisory(raw, AdvisorySource::Other),
            Err(AdvisoryError::Schema("package".into()))
        );
        let raw = r#"{"package":{"name":"a"}}"#;
        assert_eq!(parse_advisory(raw, AdvisorySource::Other), Err(AdvisoryError::Schema("id".into())));
    }

    #[test]
    fn malformed_fields_report_their_path() {
        let raw = r#"{"id":"X","package":{"name":"a"},"cwe_ids":[22,"oops"]}"#;
        match parse_advisory(raw, AdvisorySource::Other) {
            Err(AdvisoryError::Parse { path, .. }) => assert_eq!(path, "cwe_ids[1]"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_advisory("{not json", AdvisorySource::Other),
            Err(AdvisoryError::Parse { .. })
        ));
    }

    #[test]
    fn cwe_map_examples() {
        assert_eq!(classify_by_cwe(&[1321]), Some(VulnClass::PrototypePollution));
        assert_eq!(classify_by_cwe(&[400]), Some(VulnClass::ReDoS));
        assert_eq!(classify_by_cwe(&[79]), None);
        assert_eq!(classify_by_cwe(&[79, 78, 22]), Some(VulnClass::CommandInjection));
    }

    #[test]
    fn cwe_map_is_disjoint_over_a_wide_range() {
        let mapped: Vec<_> = (0..5000).filter_map(|c| class_for_cwe(c).map(|k| (c, k))).collect();
        assert_eq!(mapped.len(), 14);
        for class in VulnClass::ALL {
            assert!(mapped.iter().any(|(_, k)| *k == class));
        }
    }

    #[test]
    fn pattern_examples() {
        assert_eq!(
            classify_by_pattern("A prototype pollution in the lib function of php-date-formatter"),
            Some(VulnClass::PrototypePollution)
        );
        assert_eq!(
            classify_by_pattern("inefficient regular expression complexity"),
            Some(VulnClass::ReDoS)
        );
        assert_eq!(classify_by_pattern(""), None);
        assert_eq!(classify_by_pattern("Remote code execution"), Some(VulnClass::CodeInjection));
        assert_eq!(classify_by_pattern("uses execSync unsafely"), Some(VulnClass::CommandInjection));
        assert_eq!(classify_by_pattern("Directory TRAVERSAL"), Some(VulnClass::PathTraversal));
        assert_eq!(classify_by_pattern("cross-site scripting"), None);
    }

    #[test]
    fn cwe_wins_over_pattern() {
        let mut r = report("X", &[]);
        r.summary = "prototype pollution".into();
        r.cwe_ids = vec![22];
        let c = classify_static(&r).unwrap();
        assert_eq!(c.vuln_class, VulnClass::PathTraversal);
        assert_eq!(c.method, ClassificationMethod::CweMap);
    }

    #[test]
    fn details_are_scanned_too() {
        let mut r = report("X", &[]);
        r.details = "The function passes input to eval".into();
        let c = classify_static(&r).unwrap();
        assert_eq!(c.vuln_class, VulnClass::CodeInjection);
        assert_eq!(c.method, ClassificationMethod::PatternMatch);
    }

    #[test]
    fn class_answers() {
        assert_eq!(parse_class_answer("Prototype Pollution"), Some(VulnClass::PrototypePollution));
        assert_eq!(
            parse_class_answer("The answer is: 3. command injection (not code injection)"),
            Some(VulnClass::CommandInjection)
        );
        assert_eq!(parse_class_answer("SQL injection"), None);
        assert_eq!(parse_class_answer("ReDoS"), Some(VulnClass::ReDoS));
    }

    #[test]
    fn dedup_examples() {
        let a = report("GHSA-a", &["https://x/CVE-2020-1111"]);
        let b = report("GHSA-b", &["https://y/CVE-2020-1111"]);
        let c = report("CVE-2020-2222", &[]);
        let out = dedup(vec![a.clone(), b, c.clone()]);
        assert_eq!(out, vec![a, c]);
        assert!(dedup(vec![]).is_empty());
        let n1 = report("GHSA-1", &[]);
        let n2 = report("GHSA-2", &[]);
        assert_eq!(dedup(vec![n1.clone(), n2.clone()]), vec![n1, n2]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_report() -> impl Strategy<Value = VulnReport> {
            (0u8..6, proptest::option::of(0u8..4)).prop_map(|(n, cve)| {
                let refs: Vec<String> = cve.iter().map(|c| format!("https://nvd/CVE-2021-100{c}")).collect();
                let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
                report(&format!("GHSA-{n}"), &refs)
            })
        }

        /// Brute force: a record survives iff no earlier record shares its CVE.
        fn oracle(xs: &[VulnReport]) -> Vec<VulnReport> {
            let mut out = Vec::new();
            for (i, x) in xs.iter().enumerate() {
                let dup = x.cve_id().is_some() && xs[..i].iter().any(|y| y.cve_id() == x.cve_id());
                if !dup {
                    out.push(x.clone());
                }
            }
            out
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn dedup_matches_pairwise_oracle(xs in proptest::collection::vec(arb_report(), 0..12)) {
                prop_assert_eq!(dedup(xs.clone()), oracle(&xs));
            }

            #[test]
            fn dedup_is_idempotent(xs in proptest::collection::vec(arb_report(), 0..12)) {
                let once = dedup(xs);
                prop_assert_eq!(dedup(once.clone()), once);
            }

            #[test]
            fn cwe_priority_over_patterns(cwe in 0u32..1400, text in "[a-z ]{0,30}") {
                let mut r = report("X", &[]);
                r.summary = format!("{text} prototype");
                r.cwe_ids = vec![cwe];
                if let Some(c) = classify_static(&r) {
                    if class_for_cwe(cwe).is_some() {
                        prop_assert_eq!(c.method, ClassificationMethod::CweMap);
                    } else {
                        prop_assert_eq!(c.method, ClassificationMethod::PatternMatch);
                    }
                }
            }
        }
    }
}
