//! JSON reports and contact sheets.

use std::path::Path;

use super::methods::{Evaluation, MetricReport};
use crate::error::{Error, Result};
use crate::render::write_png_rgb;

pub fn write_reports_json(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let text = serde_json::to_string_pretty(reports).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_reports_json(path: &Path) -> Result<Vec<MetricReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn gray(values: &[f64]) -> Vec<[f64; 3]> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    values.iter().map(|v| [(v * scale).clamp(0.0, 1.0); 3]).collect()
}

/// One column per evaluation, rows prediction / squared error / uncertainty,
/// showing the first evaluated view. Gray tiles are normalized by their max.
pub fn write_contact_sheet(path: &Path, evals: &[&Evaluation]) -> Result<()> {
    let first: Vec<_> = evals.iter().filter_map(|e| e.views.first()).collect();
    let Some(v0) = first.first() else {
        return Err(Error::invalid("contact sheet needs at least one rendered view"));
    };
    let (w, h) = (v0.width, v0.height);
    if first.iter().any(|v| v.width != w || v.height != h) {
        return Err(Error::invalid("contact sheet views differ in size"));
    }
    let cols = first.len();
    let mut pixels = vec![[0.0; 3]; cols * w * 3 * h];
    for (c, view) in first.iter().enumerate() {
        let tiles = [view.mean.clone(), gray(&view.sq_error), gray(&view.variance)];
        for (r, tile) in tiles.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    pixels[(r * h + y) * cols * w + c * w + x] = tile[y * w + x];
                }
            }
        }
    }
    write_png_rgb(path, cols * w, 3 * h, &pixels)
}
