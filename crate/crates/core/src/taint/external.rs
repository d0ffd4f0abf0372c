//! Adapter for an out-of-process taint analyzer.
//!
//! The analyzer is started with the configured arguments, receives one JSON
//! request on stdin and must print a JSON array of [`TaintPath`] on stdout.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;
use wait_timeout::ChildExt;

use super::{Tier, TaintPath};
use crate::explorer::ExportedApi;
use crate::report_store::VulnClass;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("starting analyzer: {0}")]
    Spawn(String),
    #[error("analyzer timed out after {0:?}")]
    Timeout(Duration),
    #[error("analyzer exited with {code:?}: {stderr}")]
    Failed { code: Option<i32>, stderr: String },
    #[error("analyzer output is not a path list: {0}")]
    Output(String),
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    package_dir: &'a Path,
    vuln_class: VulnClass,
    candidates: &'a [ExportedApi],
    tier: Tier,
}

#[derive(Debug, Clone)]
pub struct ExternalAnalyzer {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalAnalyzer {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            timeout: Duration::from_secs(600),
        }
    }

    pub fn find_taint_paths(
        &self,
        package_dir: &Path,
        candidates: &[ExportedApi],
        class: VulnClass,
        tier: Tier,
    ) -> Result<Vec<TaintPath>, ExternalError> {
        let request = serde_json::to_vec(&Request {
            package_dir,
            vuln_class: class,
            candidates,
            tier,
        })
        .map_err(|e| ExternalError::Spawn(e.to_string()))?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ExternalError::Spawn(format!("{}: {e}", self.program.display())))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(&request);
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let status = match child.wait_timeout(self.timeout).map_err(|e| ExternalError::Spawn(e.to_string()))? {
            Some(s) => s,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ExternalError::Timeout(self.timeout));
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(ExternalError::Failed {
                code: status.code(),
                stderr: err.trim().to_string(),
            });
        }
        serde_json::from_slice(&out).map_err(|e| ExternalError::Output(e.to_string()))
    }
}
