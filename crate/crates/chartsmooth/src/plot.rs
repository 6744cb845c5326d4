//! CSV tables for external plotting.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::PipelineReport;

#[derive(Serialize)]
struct SandwichRow {
    i0: f64,
    eps: f64,
    ratio_min: f64,
    ratio_max: f64,
    points: usize,
}

fn write_rows<T: Serialize>(path: PathBuf, rows: impl IntoIterator<Item = T>) -> Result<PathBuf> {
    let csv_err = |source| Error::Csv { path: path.clone(), source };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Write one CSV per available report block into `dir`; returns the files
/// written.
pub fn emit_plot_data(report: &PipelineReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let mut out = Vec::new();
    if let Some(c) = &report.cell {
        out.push(write_rows(dir.join("radial_profile.csv"), &c.profile)?);
    }
    if let Some(s) = &report.smooth {
        let rows = s.scales.iter().map(|x| SandwichRow {
            i0: x.i0,
            eps: x.eps,
            ratio_min: x.ratio_min,
            ratio_max: x.ratio_max,
            points: x.points,
        });
        out.push(write_rows(dir.join("sandwich.csv"), rows)?);
        out.push(write_rows(dir.join("gtilde.csv"), &s.field)?);
    }
    if let Some(c) = &report.curvature {
        out.push(write_rows(dir.join("curvature.csv"), &c.rows)?);
    }
    if let Some(p) = &report.patch {
        out.push(write_rows(dir.join("consistency.csv"), &p.rows)?);
    }
    Ok(out)
}
