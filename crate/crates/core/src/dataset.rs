//! Builds a classified, deduplicated report set from advisory directories.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::report_store::{classify_static, dedup, parse_advisory, AdvisorySource, ClassifiedReport};

/// An advisory file that could not be read or parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedFile {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetBuild {
    pub records: Vec<ClassifiedReport>,
    /// Ids of deduplicated reports outside the five classes.
    pub unclassified: Vec<String>,
    pub rejected: Vec<RejectedFile>,
    /// Reports dropped because an earlier one had the same CVE id.
    pub duplicates: usize,
}

fn json_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every `*.json` advisory of each directory, in the given directory
/// order and by file name within a directory, then deduplicates by CVE id
/// and classifies by CWE and keyword. Earlier sources win duplicates.
pub fn build_dataset(sources: &[(PathBuf, AdvisorySource)]) -> std::io::Result<DatasetBuild> {
    let mut build = DatasetBuild::default();
    let mut reports = Vec::new();
    for (dir, source) in sources {
        for path in json_files(dir)? {
            let parsed = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|raw| parse_advisory(&raw, *source).map_err(|e| e.to_string()));
            match parsed {
                Ok(r) => reports.push(r),
                Err(error) => build.rejected.push(RejectedFile {
                    path: path.display().to_string(),
                    error,
                }),
            }
        }
    }
    let total = reports.len();
    let unique = dedup(reports);
    build.duplicates = total - unique.len();
    for report in unique {
        match classify_static(&report) {
            Some(c) => build.records.push(c),
            None => build.unclassified.push(report.id),
        }
    }
    Ok(build)
}

/// One JSON line per classified record.
pub fn write_records(path: &Path, records: &[ClassifiedReport]) -> std::io::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    std::fs::write(path, text)
}
