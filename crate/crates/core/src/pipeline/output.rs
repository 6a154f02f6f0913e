// SPDX-License-Identifier: MIT OR Apache-2.0

//! Write a finished analysis to an output directory.

use std::fs;
use std::path::{Path, PathBuf};

use super::analysis::AnalysisOutput;
use super::report::{emit_results_json, render_markdown, ResultsDocument};
use super::svg::{render_convergence, render_heatmap, render_probe_plot};
use crate::error::{Error, Result};
use crate::geometry::distance_matrix;
use crate::pooling::PoolingSpec;

pub const RESULTS_FILE: &str = "results.json";
pub const MARKDOWN_FILE: &str = "report.md";

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `results.json`, `report.md`, one convergence plot per comparison and
/// pooling, and a probe plot when probes exist. Returns the written paths.
pub fn write_document(doc: &ResultsDocument, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let results = out_dir.join(RESULTS_FILE);
    emit_results_json(doc, &results)?;
    written.push(results);
    let md = out_dir.join(MARKDOWN_FILE);
    write_text(&md, &render_markdown(doc))?;
    written.push(md);
    for c in &doc.comparisons {
        let p = out_dir.join(format!("convergence_{}_{}.svg", slug(&c.name), slug(&c.pooling)));
        write_text(&p, &render_convergence(c))?;
        written.push(p);
    }
    if let Some(rows) = &doc.probes {
        let p = out_dir.join("probes.svg");
        write_text(&p, &render_probe_plot(rows, "distance to target centroid"))?;
        written.push(p);
    }
    Ok(written)
}

/// Everything from [`write_document`] plus a heatmap over all manifest
/// documents per layer (first pooling spec).
pub fn write_analysis(output: &AnalysisOutput, pooling: &PoolingSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = write_document(&output.document, out_dir)?;
    let docs: Vec<(&str, &str)> = output
        .manifest
        .all_docs()
        .map(|(label, d)| (label, d.doc_id.as_str()))
        .collect();
    for &layer in &output.layers {
        let vectors: Vec<&[f64]> = docs
            .iter()
            .map(|(_, id)| {
                output.table.get(pooling, layer, id).ok_or_else(|| {
                    Error::Validation(format!("no {pooling} vector for '{id}' at layer {layer}"))
                })
            })
            .collect::<Result<_>>()?;
        let m = distance_matrix(&vectors)?;
        let labels: Vec<String> = docs.iter().map(|(_, id)| id.to_string()).collect();
        let groups: Vec<String> = docs.iter().map(|(l, _)| l.to_string()).collect();
        let svg = render_heatmap(&m, &labels, &groups, &format!("pairwise cosine distance, layer {layer} ({pooling})"))?;
        let p = out_dir.join(format!("heatmap_layer{layer}.svg"));
        write_text(&p, &svg)?;
        written.push(p);
    }
    Ok(written)
}
