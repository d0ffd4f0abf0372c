//! Installing the target package into a work directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, LazyLock, Mutex};

use thiserror::Error;

#[derive(Debug, Error)]
#[error("installing {package}: {output}")]
pub struct InstallError {
    pub package: String,
    /// Captured tool output or the I/O failure.
    pub output: String,
}

/// Where the package comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PackageSource {
    /// `npm install name@version`.
    Registry,
    /// A directory already holding the package sources.
    LocalDir(PathBuf),
}

static LOCKS: LazyLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = LazyLock::new(Default::default);

/// `workdir/node_modules/<name>`.
pub fn installed_dir(name: &str, workdir: &Path) -> PathBuf {
    name.split('/').fold(workdir.join("node_modules"), |p, seg| p.join(seg))
}

fn manifest_version(dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(dir.join("package.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    Some(v.get("version")?.as_str()?.to_string())
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let name = entry.file_name();
        if name == ".git" {
            continue;
        }
        let target = to.join(&name);
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Installs `name@version` under `workdir` and returns the package
/// directory. An existing install with a matching manifest is reused.
pub fn install_package(name: &str, version: &str, workdir: &Path, source: &PackageSource) -> Result<PathBuf, InstallError> {
    let err = |output: String| InstallError {
        package: format!("{name}@{version}"),
        output,
    };
    let dir = installed_dir(name, workdir);
    let lock = LOCKS
        .lock()
        .expect("install lock table")
        .entry(dir.clone())
        .or_default()
        .clone();
    let _guard = lock.lock().expect("install lock");

    if let Some(found) = manifest_version(&dir) {
        if version.is_empty() || found == version {
            tracing::debug!(package = name, "install cache hit");
            return Ok(dir);
        }
    }
    match source {
        PackageSource::LocalDir(src) => {
            if !src.join("package.json").is_file() {
                return Err(err(format!("{} has no package.json", src.display())));
            }
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| err(e.to_string()))?;
            }
            copy_dir(src, &dir).map_err(|e| err(e.to_string()))?;
        }
        PackageSource::Registry => {
            std::fs::create_dir_all(workdir).map_err(|e| err(e.to_string()))?;
            let spec = if version.is_empty() { name.to_string() } else { format!("{name}@{version}") };
            let out = Command::new("npm")
                .args(["install", "--no-audit", "--no-fund", "--ignore-scripts", "--prefix"])
                .arg(workdir)
                .arg(&spec)
                .output()
                .map_err(|e| err(format!("running npm: {e}")))?;
            if !out.status.success() {
                let mut text = String::from_utf8_lossy(&out.stdout).into_owned();
                text.push_str(&String::from_utf8_lossy(&out.stderr));
                return Err(err(text.trim().to_string()));
            }
        }
    }
    if !dir.join("package.json").is_file() {
        return Err(err(format!("no manifest at {}", dir.display())));
    }
    Ok(dir)
}
