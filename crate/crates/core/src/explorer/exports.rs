//! Enumerating the functions a package exposes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ApiKind, ExportedApi, SourceLoc};
use crate::sandbox::{HarnessError, HarnessRunner};
use crate::taint::model::{CodeModel, FunctionInfo};

/// Property levels below the root that are explored.
pub const MAX_EXPORT_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumerationSource {
    Dynamic,
    Static,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enumeration {
    pub apis: Vec<ExportedApi>,
    pub source: EnumerationSource,
    /// Set when the package threw while loading.
    pub load_error: Option<String>,
}

fn loc(model: &CodeModel, f: &FunctionInfo) -> SourceLoc {
    SourceLoc {
        file: model.files[f.file].path.clone(),
        start_line: f.start_line,
        end_line: f.end_line,
    }
}

fn root_path(export: &str) -> Option<String> {
    let rest = export
        .strip_prefix("module.exports")
        .or_else(|| export.strip_prefix("exports"))?;
    if rest.is_empty() {
        Some("root".into())
    } else {
        rest.strip_prefix('.').map(|r| format!("root.{r}"))
    }
}

/// Exports found in the source: functions, constructors and their
/// prototype methods assigned to `module.exports` or `exports`, directly or
/// through object literals. Shallow paths come first, then source order.
pub fn static_exports(model: &CodeModel) -> Vec<ExportedApi> {
    let mut found: Vec<(usize, usize, u32, ExportedApi)> = Vec::new();
    let mut push = |f: &FunctionInfo, path: String, kind: ApiKind| {
        let depth = path.split('.').count() - 1;
        if depth > MAX_EXPORT_DEPTH || found.iter().any(|(_, _, _, a)| a.access_path == path) {
            return;
        }
        let mut api = ExportedApi::new(&path, kind, f.arity());
        api.source_loc = Some(loc(model, f));
        found.push((depth, f.file, f.start_line, api));
    };
    for f in &model.functions {
        for export in &f.export_names {
            let Some(base) = root_path(export) else { continue };
            let class = match f.kind {
                ApiKind::Constructor => f.class_name.clone(),
                ApiKind::Function => Some(f.name.clone()),
                ApiKind::Method => continue,
            };
            let methods: Vec<&FunctionInfo> = model
                .functions
                .iter()
                .filter(|g| g.kind == ApiKind::Method && g.file == f.file && g.class_name == class)
                .collect();
            let kind = if f.kind == ApiKind::Constructor || !methods.is_empty() {
                ApiKind::Constructor
            } else {
                ApiKind::Function
            };
            push(f, base.clone(), kind);
            for g in methods {
                push(g, format!("{base}.prototype.{}", g.name), ApiKind::Method);
            }
        }
    }
    found.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    found.into_iter().map(|(_, _, _, a)| a).collect()
}

/// Asks the harness for the runtime export graph and falls back to the
/// static listing when it is unavailable, fails or finds nothing.
pub fn enumerate_exports(package_dir: &Path, model: &CodeModel, runner: &dyn HarnessRunner) -> Enumeration {
    let fallback = |load_error: Option<String>| Enumeration {
        apis: static_exports(model),
        source: EnumerationSource::Static,
        load_error,
    };
    match runner.enumerate(package_dir, &model.package_name) {
        Ok(apis) if !apis.is_empty() => Enumeration {
            apis,
            source: EnumerationSource::Dynamic,
            load_error: None,
        },
        Ok(_) | Err(HarnessError::Unavailable) => fallback(None),
        Err(HarnessError::Load(msg)) => {
            tracing::warn!(package = %model.package_name, error = %msg, "package failed to load");
            fallback(Some(msg))
        }
        Err(e) => {
            tracing::warn!(package = %model.package_name, error = %e, "dynamic enumeration failed");
            fallback(None)
        }
    }
}
