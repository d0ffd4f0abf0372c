//! Markdown rendering of a taint path: one section per function, each with
//! the path lines and a few lines of surrounding context.

use super::model::{CodeModel, FunctionInfo};
use super::{path_matches, resolve_entry, Justification, TaintPath, TaintStep};
use crate::explorer::ApiKind;

pub const CONTEXT_LINES: u32 = 3;

/// Windows of `context` lines around each line, clipped to `span` and merged
/// when they overlap or touch. The result is sorted and disjoint.
pub fn merge_windows(lines: &[u32], context: u32, span: (u32, u32)) -> Vec<(u32, u32)> {
    let mut sorted: Vec<u32> = lines.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out: Vec<(u32, u32)> = Vec::new();
    for l in sorted {
        let lo = l.saturating_sub(context).max(span.0).max(1);
        let hi = l.saturating_add(context).min(span.1);
        match out.last_mut() {
            Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

struct Section<'a> {
    func: Option<&'a FunctionInfo>,
    file: String,
    called_as: Option<String>,
    steps: Vec<&'a TaintStep>,
}

fn split_sections<'a>(path: &'a TaintPath, model: &'a CodeModel) -> Vec<Section<'a>> {
    let mut sections: Vec<Section<'a>> = Vec::new();
    let mut current = resolve_entry(model, &path.entry).map(|i| &model.functions[i]);
    for step in &path.steps {
        let mut called_as = None;
        if let Justification::Param { callee } = &step.justification {
            current = model
                .functions
                .iter()
                .find(|f| f.start_line == step.line && path_matches(&model.files[f.file].path, &step.file));
            called_as = Some(callee.clone());
        }
        let fits = |f: &FunctionInfo| f.contains_line(step.line) && path_matches(&model.files[f.file].path, &step.file);
        if !current.is_some_and(fits) {
            current = model
                .file(&step.file)
                .and_then(|(idx, _)| model.function_at(idx, step.line));
        }
        let same = sections.last().is_some_and(|s| {
            s.file == step.file && s.func.map(|f| f.id) == current.map(|f| f.id) && called_as.is_none()
        });
        if same {
            sections.last_mut().expect("nonempty").steps.push(step);
        } else {
            let called_as = called_as.or_else(|| current.map(|f| f.name.clone()));
            sections.push(Section {
                func: current,
                file: step.file.clone(),
                called_as,
                steps: vec![step],
            });
        }
    }
    sections
}

fn first_header(func: Option<&FunctionInfo>, location: &str) -> String {
    match func {
        Some(f) if f.kind == ApiKind::Method && f.class_name.is_some() => format!(
            "Vulnerable method `{}` of class `{}` located in {location}:",
            f.name,
            f.class_name.as_deref().unwrap_or_default()
        ),
        Some(f) if f.kind == ApiKind::Constructor => format!(
            "Vulnerable constructor of class `{}` located in {location}:",
            f.class_name.as_deref().unwrap_or(&f.name)
        ),
        Some(f) => format!("Vulnerable function `{}` located in {location}:", f.name),
        None => format!("Vulnerable code located in {location}:"),
    }
}

fn dedent(lines: &[String]) -> Vec<String> {
    let indent = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    lines
        .iter()
        .map(|l| if l.len() >= indent { l[indent..].to_string() } else { l.trim_start().to_string() })
        .collect()
}

/// Renders `path`; `note` may add a trailing comment to each tainted line.
pub fn render_annotated(path: &TaintPath, model: &CodeModel, note: &dyn Fn(&TaintStep) -> Option<String>) -> String {
    let pkg = &model.package_name;
    let mut out = String::new();
    let sections = split_sections(path, model);
    for (i, section) in sections.iter().enumerate() {
        let location = format!("{pkg}/{}", section.file);
        let header = if i == 0 {
            first_header(section.func, &location)
        } else {
            let name = section.called_as.clone().unwrap_or_else(|| "function".into());
            if sections[i - 1].file == section.file {
                format!("Call to `{name}`:")
            } else {
                format!("Call to `{name}` located in {location}:")
            }
        };
        out.push_str(&header);
        out.push('\n');

        let Some((_, file)) = model.file(&section.file) else {
            // Unknown file: fall back to the recorded snippets.
            out.push_str("```js\n");
            for s in &section.steps {
                out.push_str(&format!("{} // tainted: \"{}\"\n", s.snippet.trim(), s.tainted_symbol));
            }
            out.push_str("```\n");
            continue;
        };
        let span = section
            .func
            .map(|f| (f.start_line, f.end_line))
            .unwrap_or((1, file.lines.len() as u32));
        let lines: Vec<u32> = section.steps.iter().map(|s| s.line).collect();
        for (lo, hi) in merge_windows(&lines, CONTEXT_LINES, span) {
            let raw: Vec<String> = (lo..=hi).map(|n| file.line(n).to_string()).collect();
            out.push_str("```js\n");
            for (n, text) in (lo..=hi).zip(dedent(&raw)) {
                out.push_str(&text);
                if let Some(step) = section.steps.iter().find(|s| s.line == n) {
                    out.push_str(&format!(" // tainted: \"{}\"", step.tainted_symbol));
                    if let Some(extra) = note(step) {
                        out.push_str(&format!(" // {extra}"));
                    }
                }
                out.push('\n');
            }
            out.push_str("```\n");
        }
    }
    out
}

/// Renders `path` as a sequence of headed code sections with every path line
/// marked `// tainted: "<symbol>"`.
pub fn render_taint_report(path: &TaintPath, model: &CodeModel) -> String {
    render_annotated(path, model, &|_| None)
}

/// `(symbol, text)` of every marked line in a rendered report.
pub fn marked_lines(report: &str) -> Vec<(String, String)> {
    report
        .lines()
        .filter_map(|l| {
            let idx = l.find(" // tainted: \"")?;
            let rest = &l[idx + " // tainted: \"".len()..];
            let end = rest.find('"')?;
            Some((rest[..end].to_string(), l[..idx].to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const NO_CLIP: (u32, u32) = (1, u32::MAX);

    #[test]
    fn overlapping_windows_merge() {
        assert_eq!(merge_windows(&[5, 9], 3, NO_CLIP), vec![(2, 12)]);
    }

    #[test]
    fn distant_windows_stay_apart() {
        assert_eq!(merge_windows(&[5, 20], 3, NO_CLIP), vec![(2, 8), (17, 23)]);
    }

    #[test]
    fn windows_clip_to_span() {
        assert_eq!(merge_windows(&[1, 2], 3, (1, 4)), vec![(1, 4)]);
        assert_eq!(merge_windows(&[5, 12], 3, NO_CLIP), vec![(2, 15)]);
        assert!(merge_windows(&[], 3, NO_CLIP).is_empty());
    }

    #[test]
    fn dedent_keeps_relative_indentation() {
        let raw = vec!["    a {".to_string(), "      b".to_string(), "".to_string(), "    }".to_string()];
        assert_eq!(dedent(&raw), vec!["a {", "  b", "", "}"]);
    }
}
