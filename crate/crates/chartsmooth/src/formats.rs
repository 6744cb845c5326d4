//! JSON inputs: chart metrics, flat-torus models and atlases.

use std::fs;
use std::path::Path;

use chartsmooth_core::domain::{build_chart_domain, ChartDomain};
use chartsmooth_core::metric::{sample_metric, MetricField, MetricGenerator};
use chartsmooth_core::norms::ChartAtlas;
use chartsmooth_core::patchwork::{PeriodicMetric, PeriodicPhi, QuotientModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_owned(), source })
}

/// Pretty JSON with a trailing newline; parent directories are created.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_owned(), source })?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_owned(), source })?;
    }
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_owned(), source })
}

fn default_dim() -> usize {
    2
}

/// A chart metric on `B(0, radius)`: either an analytic generator or
/// explicit planar coefficients.
///
/// Sampled coefficients run over the `(nodes + 1)²` grid of the bounding
/// square in row-major order (x fastest, starting at `(-radius, -radius)`);
/// entries outside the ball may be `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub radius: f64,
    /// Grid steps across the diameter.
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<MetricGenerator>,
    /// `"sampled"` for explicit coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g11: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g12: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g22: Option<Vec<Option<f64>>>,
}

impl MetricSpec {
    pub fn generated(generator: MetricGenerator, radius: f64, nodes: usize) -> Self {
        Self { dim: 2, radius, nodes, generator: Some(generator), kind: None, g11: None, g12: None, g22: None }
    }

    pub fn domain(&self) -> std::result::Result<ChartDomain, String> {
        build_chart_domain(self.dim, self.radius, self.nodes).map_err(|e| e.to_string())
    }

    pub fn build(&self) -> std::result::Result<MetricField, String> {
        let d = self.domain()?;
        match (&self.generator, self.kind.as_deref()) {
            (Some(g), None) => sample_metric(g, &d).map_err(|e| e.to_string()),
            (None, Some("sampled")) => self.sampled(d),
            (Some(_), Some(_)) => Err("give either `generator` or `kind: sampled`, not both".into()),
            (None, Some(k)) => Err(format!("unknown metric kind `{k}`")),
            (None, None) => Err("missing `generator` (or `kind: sampled` with g11, g12, g22)".into()),
        }
    }

    /// The generator sampled on a new ball and spacing.
    pub fn resample(&self, radius: f64, spacing: f64) -> std::result::Result<MetricField, String> {
        let g = self
            .generator
            .as_ref()
            .ok_or("resampling needs an analytic generator, not sampled coefficients")?;
        let d = ChartDomain::with_spacing(self.dim, radius, spacing).map_err(|e| e.to_string())?;
        sample_metric(g, &d).map_err(|e| e.to_string())
    }

    fn sampled(&self, d: ChartDomain) -> std::result::Result<MetricField, String> {
        if self.dim != 2 {
            return Err("sampled metrics are planar (g11, g12, g22)".into());
        }
        let arrays = [("g11", &self.g11), ("g12", &self.g12), ("g22", &self.g22)];
        let mut cols = Vec::with_capacity(3);
        for (name, a) in arrays {
            let a = a.as_ref().ok_or(format!("missing `{name}`"))?;
            if a.len() != d.len() {
                return Err(format!("`{name}` has {} entries, expected {} ({}²)", a.len(), d.len(), d.side()));
            }
            cols.push(a);
        }
        let mut coeffs = Vec::with_capacity(d.len() * 3);
        for i in 0..d.len() {
            let identity = [1.0, 0.0, 1.0];
            for (k, col) in cols.iter().enumerate() {
                match col[i] {
                    Some(v) => coeffs.push(v),
                    None if !d.mask()[i] => coeffs.push(identity[k]),
                    None => return Err(format!("null coefficient inside the ball at index {i}")),
                }
            }
        }
        MetricField::from_samples(d, coeffs).map_err(|e| e.to_string())
    }
}

/// Read and build a chart metric.
pub fn load_metric(path: &Path) -> Result<(MetricSpec, MetricField)> {
    let spec: MetricSpec = read_json(path)?;
    let field = spec.build().map_err(|reason| Error::Format { path: path.to_owned(), reason })?;
    Ok((spec, field))
}

/// Conformal flat-torus model with a net of chart centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSpec {
    /// Always `"flat_torus"`.
    pub kind: String,
    pub side: f64,
    /// Lattice points per axis; implied by sampled `phi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    /// Row-major samples (x fastest) or analytic terms.
    pub phi: PeriodicPhi,
    pub chart_centers: Vec<[f64; 2]>,
    pub chart_radius: f64,
}

impl TorusSpec {
    pub fn build(&self) -> std::result::Result<QuotientModel, String> {
        if self.kind != "flat_torus" {
            return Err(format!("unknown model kind `{}`", self.kind));
        }
        let cells = match (&self.phi, self.cells) {
            (_, Some(c)) => c,
            (PeriodicPhi::Samples(v), None) => {
                let c = (v.len() as f64).sqrt().round() as usize;
                if c * c != v.len() {
                    return Err(format!("{} phi samples do not form a square lattice", v.len()));
                }
                c
            }
            (PeriodicPhi::Terms(_), None) => return Err("analytic phi needs `cells`".into()),
        };
        let metric = PeriodicMetric::conformal(self.side, cells, &self.phi).map_err(|e| e.to_string())?;
        QuotientModel::new(metric, self.chart_centers.clone(), self.chart_radius).map_err(|e| e.to_string())
    }
}

pub fn load_torus(path: &Path) -> Result<(TorusSpec, QuotientModel)> {
    let spec: TorusSpec = read_json(path)?;
    let model = spec.build().map_err(|reason| Error::Format { path: path.to_owned(), reason })?;
    Ok((spec, model))
}

/// An atlas document is a torus model or a single chart metric.
pub fn load_atlas(path: &Path) -> Result<ChartAtlas> {
    let value: serde_json::Value = read_json(path)?;
    let fail = |reason: String| Error::Format { path: path.to_owned(), reason };
    if value.get("kind").and_then(|k| k.as_str()) == Some("flat_torus") {
        let spec: TorusSpec = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
        let model = spec.build().map_err(fail)?;
        model.atlas().map_err(|e| fail(e.to_string()))
    } else {
        let spec: MetricSpec = serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
        Ok(ChartAtlas::single(spec.build().map_err(fail)?))
    }
}
