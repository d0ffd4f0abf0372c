//! Orchestrator side of the in-runtime harness.
//!
//! The harness is an external script run once per request with a single JSON
//! argument. It writes its result to the file named by `POCGEN_RESULT_FILE`
//! and exits 0 when the result was written, 2 when the package failed to
//! load and 3 on timeout.

use std::collections::VecDeque;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::explorer::ExportedApi;
use crate::report_store::VulnClass;
use crate::validator::{ExecutionReport, ExitStatus};

pub const RESULT_FILE_ENV: &str = "POCGEN_RESULT_FILE";
pub const EXIT_OK: i32 = 0;
pub const EXIT_LOAD_FAILURE: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const EXPLOIT_FILE: &str = "exploit.js";
pub const SENTINEL_FILE: &str = "genpoc.sentinel";

static ENUM_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no harness available")]
    Unavailable,
    #[error("starting harness: {0}")]
    Spawn(String),
    #[error("package failed to load: {0}")]
    Load(String),
    #[error("harness produced no usable result: {0}")]
    Protocol(String),
    #[error("no recorded execution left for this exploit")]
    ReplayMiss,
}

/// Settings for one exploit run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub package_name: String,
    pub target_access_path: String,
    pub exploit_file: PathBuf,
    pub result_file: PathBuf,
    pub vuln_class: VulnClass,
    pub sentinel_path: PathBuf,
    #[serde(default)]
    pub debug_expressions: Vec<DebugExpression>,
    pub timeout_ms: u64,
}

/// Expression evaluated by the harness when execution reaches a line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebugExpression {
    pub file: String,
    pub line: u32,
    pub expression: String,
}

/// The single JSON argument handed to the harness script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum HarnessRequest {
    Enumerate { package_name: String, package_dir: PathBuf },
    Run(HarnessConfig),
}

/// Result file body of an enumeration request.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EnumerationResult {
    #[serde(default)]
    pub exports: Vec<ExportedApi>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Where an exploit run takes place.
#[derive(Debug, Clone)]
pub struct RunContext {
    /// Directory holding `node_modules/<package>`; the exploit runs here.
    pub sandbox_dir: PathBuf,
    pub package_name: String,
    pub target_access_path: String,
    pub vuln_class: VulnClass,
    pub debug_expressions: Vec<DebugExpression>,
    pub timeout_ms: u64,
}

impl RunContext {
    pub fn config(&self) -> HarnessConfig {
        HarnessConfig {
            package_name: self.package_name.clone(),
            target_access_path: self.target_access_path.clone(),
            exploit_file: self.sandbox_dir.join(EXPLOIT_FILE),
            result_file: self.sandbox_dir.join("result.json"),
            vuln_class: self.vuln_class,
            sentinel_path: self.sandbox_dir.join(SENTINEL_FILE),
            debug_expressions: self.debug_expressions.clone(),
            timeout_ms: self.timeout_ms.max(1),
        }
    }
}

/// Executes exploits and enumerates exports.
pub trait HarnessRunner: Send + Sync {
    fn enumerate(&self, package_dir: &Path, package_name: &str) -> Result<Vec<ExportedApi>, HarnessError>;
    fn run(&self, ctx: &RunContext, exploit: &str) -> Result<ExecutionReport, HarnessError>;
}

/// Stand-in when no harness is configured: every request is answered with
/// [`HarnessError::Unavailable`].
#[derive(Debug, Default)]
pub struct NoHarness;

impl HarnessRunner for NoHarness {
    fn enumerate(&self, _: &Path, _: &str) -> Result<Vec<ExportedApi>, HarnessError> {
        Err(HarnessError::Unavailable)
    }

    fn run(&self, _: &RunContext, _: &str) -> Result<ExecutionReport, HarnessError> {
        Err(HarnessError::Unavailable)
    }
}

/// Runs the harness script as a child process.
#[derive(Debug, Clone)]
pub struct NodeHarness {
    /// Interpreter, normally `node`.
    pub program: PathBuf,
    /// Arguments before the JSON request, normally the harness entry script.
    pub args: Vec<String>,
    /// Extra wall-clock allowance on top of the configured timeout.
    pub grace: Duration,
}

impl NodeHarness {
    pub fn new(entry_script: &Path) -> Self {
        Self {
            program: PathBuf::from("node"),
            args: vec![entry_script.display().to_string()],
            grace: Duration::from_secs(5),
        }
    }

    fn invoke(&self, request: &HarnessRequest, cwd: &Path, result_file: &Path, timeout: Duration) -> Result<(i32, String), HarnessError> {
        let arg = serde_json::to_string(request).map_err(|e| HarnessError::Spawn(e.to_string()))?;
        let _ = std::fs::remove_file(result_file);
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(arg)
            .current_dir(cwd)
            .env(RESULT_FILE_ENV, result_file)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| HarnessError::Spawn(format!("{}: {e}", self.program.display())))?;
        let mut stderr = child.stderr.take().expect("piped stderr");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let code = match child
            .wait_timeout(timeout + self.grace)
            .map_err(|e| HarnessError::Spawn(e.to_string()))?
        {
            Some(status) => status.code().unwrap_or(-1),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                // Orphaned grandchildren may still hold stderr open; leave the reader behind.
                return Ok((EXIT_TIMEOUT, String::new()));
            }
        };
        Ok((code, reader.join().unwrap_or_default()))
    }
}

fn read_report(path: &Path) -> Option<ExecutionReport> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

impl HarnessRunner for NodeHarness {
    fn enumerate(&self, package_dir: &Path, package_name: &str) -> Result<Vec<ExportedApi>, HarnessError> {
        let n = ENUM_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = std::env::temp_dir().join(format!("pocgen-enum-{}-{n}-{}.json", std::process::id(), short_hash(package_name)));
        let request = HarnessRequest::Enumerate {
            package_name: package_name.to_string(),
            package_dir: package_dir.to_path_buf(),
        };
        let cwd = package_dir.parent().unwrap_or(package_dir);
        let (code, stderr) = self.invoke(&request, cwd, &tmp, Duration::from_millis(DEFAULT_TIMEOUT_MS))?;
        let body = std::fs::read_to_string(&tmp).ok();
        let _ = std::fs::remove_file(&tmp);
        let parsed: Option<EnumerationResult> = body.as_deref().and_then(|b| serde_json::from_str(b).ok());
        match (code, parsed) {
            (EXIT_OK, Some(r)) => Ok(r.exports),
            (EXIT_LOAD_FAILURE, r) => Err(HarnessError::Load(
                r.and_then(|r| r.error).unwrap_or_else(|| stderr.trim().to_string()),
            )),
            (code, _) => Err(HarnessError::Protocol(format!("exit {code}: {}", stderr.trim()))),
        }
    }

    fn run(&self, ctx: &RunContext, exploit: &str) -> Result<ExecutionReport, HarnessError> {
        let config = ctx.config();
        std::fs::write(&config.exploit_file, exploit).map_err(|e| HarnessError::Spawn(e.to_string()))?;
        let _ = std::fs::remove_file(&config.sentinel_path);
        let result_file = config.result_file.clone();
        let timeout = Duration::from_millis(config.timeout_ms);
        let (code, stderr) = self.invoke(&HarnessRequest::Run(config), &ctx.sandbox_dir, &result_file, timeout)?;
        let report = read_report(&result_file);
        match (code, report) {
            (EXIT_OK, Some(r)) => Ok(r),
            (EXIT_TIMEOUT, r) => Ok(ExecutionReport {
                exit: ExitStatus::TimedOut,
                ..r.unwrap_or_default()
            }),
            (EXIT_LOAD_FAILURE, r) => Ok(r.unwrap_or_else(|| ExecutionReport::crashed(stderr.trim()))),
            (code, _) => Err(HarnessError::Protocol(format!("exit {code}: {}", stderr.trim()))),
        }
    }
}

fn short_hash(s: &str) -> String {
    hex::encode(&Sha256::digest(s.as_bytes())[..6])
}

/// sha256 of an exploit text, as stored in recorded executions.
pub fn exploit_digest(exploit: &str) -> String {
    hex::encode(Sha256::digest(exploit.as_bytes()))
}

/// One recorded harness run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedExecution {
    /// When present, the record only answers this exact exploit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploit_sha256: Option<String>,
    pub report: ExecutionReport,
}

/// Serves recorded reports in place of live execution. A record answers the
/// first run whose exploit digest matches; records without a digest answer
/// runs in order.
#[derive(Debug, Default)]
pub struct ReplayRunner {
    records: Mutex<VecDeque<RecordedExecution>>,
    exports: Option<Vec<ExportedApi>>,
}

impl ReplayRunner {
    pub fn new(records: Vec<RecordedExecution>) -> Self {
        Self {
            records: Mutex::new(records.into()),
            exports: None,
        }
    }

    /// Also answer enumeration requests with a fixed listing.
    pub fn with_exports(mut self, exports: Vec<ExportedApi>) -> Self {
        self.exports = Some(exports);
        self
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Protocol(format!("{}: {e}", path.display())))?;
        Ok(Self::new(parse_recorded(&text)?))
    }

    pub fn remaining(&self) -> usize {
        self.records.lock().expect("replay lock").len()
    }
}

pub fn parse_recorded(text: &str) -> Result<Vec<RecordedExecution>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| HarnessError::Protocol(format!("line {}: {e}", i + 1))))
        .collect()
}

impl HarnessRunner for ReplayRunner {
    fn enumerate(&self, _: &Path, _: &str) -> Result<Vec<ExportedApi>, HarnessError> {
        self.exports.clone().ok_or(HarnessError::Unavailable)
    }

    fn run(&self, _: &RunContext, exploit: &str) -> Result<ExecutionReport, HarnessError> {
        let digest = exploit_digest(exploit);
        let mut records = self.records.lock().expect("replay lock");
        let pos = records
            .iter()
            .position(|r| r.exploit_sha256.as_deref() == Some(digest.as_str()))
            .or_else(|| records.iter().position(|r| r.exploit_sha256.is_none()))
            .ok_or(HarnessError::ReplayMiss)?;
        Ok(records.remove(pos).expect("position in range").report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(dir: &Path) -> RunContext {
        RunContext {
            sandbox_dir: dir.to_path_buf(),
            package_name: "pkg".into(),
            target_access_path: "root.f".into(),
            vuln_class: VulnClass::CommandInjection,
            debug_expressions: vec![],
            timeout_ms: 2000,
        }
    }

    #[test]
    fn config_uses_exact_field_names() {
        let dir = Path::new("/sandbox");
        let v = serde_json::to_value(HarnessRequest::Run(ctx(dir).config())).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            [
                "command",
                "debug_expressions",
                "exploit_file",
                "package_name",
                "result_file",
                "sentinel_path",
                "target_access_path",
                "timeout_ms",
                "vuln_class"
            ]
        );
        assert_eq!(v["command"], "run");
        assert_eq!(v["vuln_class"], "command_injection");
    }

    #[test]
    fn replay_prefers_digest_match_then_order() {
        let tagged = RecordedExecution {
            exploit_sha256: Some(exploit_digest("b")),
            report: ExecutionReport {
                proto_exploited_present: true,
                ..Default::default()
            },
        };
        let plain = RecordedExecution {
            exploit_sha256: None,
            report: ExecutionReport::crashed("first"),
        };
        let r = ReplayRunner::new(vec![plain, tagged]);
        let c = ctx(Path::new("/x"));
        assert!(r.run(&c, "b").unwrap().proto_exploited_present);
        assert_eq!(r.run(&c, "a").unwrap().errors[0].message, "first");
        assert!(matches!(r.run(&c, "a"), Err(HarnessError::ReplayMiss)));
    }
}
