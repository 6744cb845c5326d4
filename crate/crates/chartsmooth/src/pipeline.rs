//! Configuration, orchestration and the report of a full run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chartsmooth_core::cell::OracleFrame;
use chartsmooth_core::metric::eigen_range;
use chartsmooth_core::norms::{ChartAtlas, Flavor, ScaledNormReport};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::formats::{load_metric, load_torus, read_json, MetricSpec};
use crate::stages::{self, CellStage, ChartSource, CurvatureStage, NonInflation, PatchSettings, PatchStage, Probe, Resolution, SmoothStage};
use crate::SCHEMA_TAG;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSwitches {
    #[serde(default = "yes")]
    pub norm: bool,
    #[serde(default = "yes")]
    pub cell: bool,
    #[serde(default = "yes")]
    pub smooth: bool,
    #[serde(default = "yes")]
    pub curvature: bool,
    #[serde(default)]
    pub patch: bool,
}

impl Default for StageSwitches {
    fn default() -> Self {
        Self { norm: true, cell: true, smooth: true, curvature: true, patch: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSettings {
    /// Scale of the norm; defaults to the chart radius.
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default = "default_flavor")]
    pub flavor: String,
    /// Hölder exponent or Sobolev `p`, depending on the flavor.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default)]
    pub k: usize,
}

impl Default for NormSettings {
    fn default() -> Self {
        Self { scale: None, flavor: default_flavor(), exponent: default_exponent(), k: 0 }
    }
}

/// Curvature needs a finer grid than the sandwich; these override the
/// shared resolution and probe.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSettings {
    #[serde(default)]
    pub steps_per_radius: Option<f64>,
    #[serde(default)]
    pub probe: Option<Probe>,
}

/// Gate limits. A missing entry disables the gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// `|normalisation − 1|`.
    #[serde(default = "tol_calibration")]
    pub calibration: Option<f64>,
    /// Relative cell error against the flat closed form at the smallest scale.
    #[serde(default)]
    pub cell_value: Option<f64>,
    /// Sandwich exponent at the configured `i0`.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Support radius of `f_p` over `1.8 i0`.
    #[serde(default = "tol_support")]
    pub support: Option<f64>,
    /// Largest `|K|` of any curvature estimate.
    #[serde(default)]
    pub curvature: Option<f64>,
    #[serde(default = "tol_p2")]
    pub p2_residual: Option<f64>,
    #[serde(default = "tol_consistency")]
    pub consistency: Option<f64>,
    /// Allowed `smoothed − 2 input` of the norm components.
    #[serde(default = "tol_inflation")]
    pub inflation: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            calibration: tol_calibration(),
            cell_value: None,
            eps: None,
            support: tol_support(),
            curvature: None,
            p2_residual: tol_p2(),
            consistency: tol_consistency(),
            inflation: tol_inflation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Single-chart metric document.
    #[serde(default)]
    pub metric: Option<PathBuf>,
    /// Torus model document, needed by the patch stage.
    #[serde(default)]
    pub torus: Option<PathBuf>,
    #[serde(default)]
    pub stages: StageSwitches,
    pub i0: f64,
    /// Cell scales for the cell and smoothing sweeps; `[i0]` when empty.
    #[serde(default)]
    pub i0_sweep: Vec<f64>,
    #[serde(default)]
    pub steps_per_radius: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub probe: Probe,
    #[serde(default = "default_frame")]
    pub oracle_frame: OracleFrame,
    #[serde(default)]
    pub norm: NormSettings,
    #[serde(default)]
    pub curvature: CurvatureSettings,
    #[serde(default)]
    pub patch: PatchSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Recorded in the report; no stage samples randomly.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn yes() -> bool {
    true
}
fn default_flavor() -> String {
    "c".into()
}
fn default_exponent() -> f64 {
    0.5
}
fn default_stride() -> usize {
    1
}
fn default_margin() -> f64 {
    2.0
}
fn default_frame() -> OracleFrame {
    OracleFrame::FrozenAtCenter
}

fn tol_calibration() -> Option<f64> {
    Some(0.005)
}
fn tol_support() -> Option<f64> {
    Some(1.0)
}
fn tol_p2() -> Option<f64> {
    Some(1e-6)
}
fn tol_consistency() -> Option<f64> {
    Some(0.01)
}
fn tol_inflation() -> Option<f64> {
    Some(0.02)
}

impl PipelineConfig {
    /// Read a config; relative input paths are taken from the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.metric, &mut cfg.torus, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scales(&self) -> Vec<f64> {
        if self.i0_sweep.is_empty() {
            vec![self.i0]
        } else {
            self.i0_sweep.clone()
        }
    }

    fn needs_chart(&self) -> bool {
        let s = self.stages;
        s.norm || s.cell || s.smooth || s.curvature
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.needs_chart() && self.metric.is_none() {
            return bad("a `metric` file is required by the enabled stages".into());
        }
        if self.stages.patch && self.torus.is_none() {
            return bad("the patch stage requires a `torus` file".into());
        }
        for (name, p) in [("metric", &self.metric), ("torus", &self.torus)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::Io {
                        path: p.clone(),
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, format!("{name} file not found")),
                    });
                }
            }
        }
        if !self.scales().into_iter().chain([self.i0]).all(positive) {
            return bad("i0 values must be positive".into());
        }
        if self.stride == 0 || self.patch.net_stride == 0 {
            return bad("strides must be at least 1".into());
        }
        if !positive(self.margin) || !positive(self.patch.margin) {
            return bad("margins must be positive".into());
        }
        if [self.steps_per_radius, self.curvature.steps_per_radius].into_iter().flatten().any(|s| !positive(s)) {
            return bad("steps_per_radius must be positive".into());
        }
        let cp = self.curvature.probe.unwrap_or_default();
        for v in [self.probe.radius, self.probe.spacing, cp.radius, cp.spacing, self.norm.scale, self.patch.i0].into_iter().flatten() {
            if !positive(v) {
                return bad("probe, scale and patch values must be positive".into());
            }
        }
        let t = &self.tolerances;
        let all = [t.calibration, t.cell_value, t.eps, t.support, t.curvature, t.p2_residual, t.consistency, t.inflation];
        if !all.into_iter().flatten().all(positive) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub generator: Option<String>,
    pub dim: usize,
    pub radius: f64,
    pub spacing: f64,
    pub eigen_min: f64,
    pub eigen_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStage {
    pub report: ScaledNormReport,
    /// Input and smoothed field compared on the probe ball.
    pub smoothed: Option<NonInflation>,
}

/// A tolerance check: `value ≤ limit`, or `value < limit` when `strict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub strict: bool,
    pub passed: bool,
}

impl Gate {
    fn new(name: &str, value: f64, limit: f64, strict: bool) -> Self {
        let passed = if strict { value < limit } else { value <= limit };
        Self { name: name.into(), value, limit, strict, passed: passed && value.is_finite() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema: String,
    pub version: String,
    pub seed: u64,
    pub metric: Option<MetricSummary>,
    pub norm: Option<NormStage>,
    pub cell: Option<CellStage>,
    pub smooth: Option<SmoothStage>,
    pub curvature: Option<CurvatureStage>,
    pub patch: Option<PatchStage>,
    pub gates: Vec<Gate>,
    pub passed: bool,
    /// Wall-clock seconds per stage; kept out of the JSON so reports stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

struct Clock(Vec<(String, f64)>);

impl Clock {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f()?;
        self.0.push((name.into(), t.elapsed().as_secs_f64()));
        Ok(out)
    }
}

fn summary(spec: &MetricSpec, m: &chartsmooth_core::metric::MetricField) -> MetricSummary {
    let (lo, hi) = eigen_range(m);
    MetricSummary {
        generator: m.generator_tag().map(str::to_string).or_else(|| spec.kind.clone()),
        dim: m.dim(),
        radius: m.domain().radius(),
        spacing: m.domain().spacing(),
        eigen_min: lo,
        eigen_max: hi,
    }
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let mut clock = Clock(Vec::new());
    let mut gates = Vec::new();
    let res = Resolution { steps_per_radius: cfg.steps_per_radius, margin: cfg.margin };
    let scales = cfg.scales();

    let source = match &cfg.metric {
        Some(p) if cfg.needs_chart() => {
            let (spec, base) = load_metric(p)?;
            Some(ChartSource::new(spec, base))
        }
        _ => None,
    };
    let metric = source.as_ref().map(|s| summary(&s.spec, &s.base));

    let mut norm = match (&source, cfg.stages.norm) {
        (Some(src), true) => Some(clock.time("norm", || {
            let flavor = Flavor::parse(&cfg.norm.flavor, cfg.norm.exponent).stage("norm")?;
            let scale = cfg.norm.scale.unwrap_or(src.base.domain().radius());
            let report = stages::norm_report(&ChartAtlas::single(src.base.clone()), scale, &flavor, cfg.norm.k)?;
            Ok(NormStage { report, smoothed: None })
        })?),
        _ => None,
    };

    let cell = match (&source, cfg.stages.cell) {
        (Some(src), true) => Some(clock.time("cell", || {
            let mut out = Vec::new();
            let mut profile = Vec::new();
            for &i0 in &scales {
                let m = src.metric_at(i0, &res, &cfg.probe)?;
                stages::check_scale(&m, i0)?;
                let (scale, sol) = stages::solve_center_cell(&m, i0, cfg.oracle_frame)?;
                if i0 == cfg.i0 || (profile.is_empty() && !scales.contains(&cfg.i0) && i0 == scales[0]) {
                    profile = stages::radial_profile(&m, &sol, cfg.oracle_frame);
                }
                out.push(scale);
            }
            let profile_i0 = if scales.contains(&cfg.i0) { cfg.i0 } else { scales[0] };
            Ok(CellStage { frame: cfg.oracle_frame, scales: out, profile_i0, profile })
        })?),
        _ => None,
    };
    if let (Some(c), Some(tol)) = (&cell, cfg.tolerances.cell_value) {
        let smallest = c.scales.iter().min_by(|a, b| a.i0.total_cmp(&b.i0)).expect("nonempty");
        gates.push(Gate::new("cell.rel_value_error", smallest.deviation.rel_value_error, tol, false));
    }

    let need_cutoff = cfg.stages.smooth || cfg.stages.curvature || cfg.stages.patch;
    let calibration = if need_cutoff { Some(stages::calibrated(2)?) } else { None };

    let smooth = match (&source, cfg.stages.smooth, &calibration) {
        (Some(src), true, Some((cutoff, _))) => Some(clock.time("smooth", || {
            let mut out = Vec::new();
            let mut field = None;
            let mut sweep = scales.clone();
            if !sweep.contains(&cfg.i0) {
                sweep.push(cfg.i0);
            }
            for &i0 in &sweep {
                let m = src.metric_at(i0, &res, &cfg.probe)?;
                stages::check_scale(&m, i0)?;
                let (scale, f) = stages::smooth_scale(&m, *cutoff, i0, cfg.stride, cfg.margin, &cfg.probe)?;
                if i0 == cfg.i0 {
                    field = Some((stages::field_rows(&m, &f), m.domain().spacing(), m.into_owned()));
                }
                if scales.contains(&i0) {
                    out.push(scale);
                }
            }
            Ok((out, field.expect("i0 is in the sweep")))
        })?),
        _ => None,
    };
    let smooth = match smooth {
        Some((scales_out, (rows, spacing, chart))) => {
            let (_, cal) = calibration.as_ref().expect("calibrated");
            if let Some(tol) = cfg.tolerances.calibration {
                gates.push(Gate::new("smooth.calibration", (cal.normalization - 1.0).abs(), tol, false));
            }
            if let Some(tol) = cfg.tolerances.support {
                let v = scales_out.iter().map(|s| s.support_ratio).fold(0.0, f64::max);
                gates.push(Gate::new("smooth.support", v, tol, false));
            }
            let at_i0 = scales_out.iter().find(|s| s.i0 == cfg.i0);
            if let (Some(tol), Some(s)) = (cfg.tolerances.eps, at_i0) {
                gates.push(Gate::new("smooth.eps", s.eps, tol, false));
            }
            let decreasing = stages::strictly_decreasing(&scales_out);
            if scales_out.len() > 1 {
                let mut by = scales_out.clone();
                by.sort_by(|a, b| b.i0.total_cmp(&a.i0));
                let worst = by.windows(2).map(|w| w[1].eps / w[0].eps).fold(0.0, f64::max);
                gates.push(Gate::new("smooth.eps_ratio", worst, 1.0, true));
            }
            // norm of the smoothed field on the probe ball
            if let (Some(n), Some(r)) = (norm.as_mut(), cfg.probe.radius) {
                let sub = cfg.probe.spacing.map(|s| (s / spacing).round().max(1.0)).unwrap_or(1.0);
                if let Some(smoothed) = stages::field_chart(&rows, sub * spacing, r) {
                    let flavor = Flavor::parse(&cfg.norm.flavor, cfg.norm.exponent).stage("norm")?;
                    let input = stages::chart_components(&chart, r, &flavor, cfg.norm.k)?;
                    let out = stages::chart_components(&smoothed, r, &flavor, cfg.norm.k)?;
                    let ni = NonInflation::new(r, input, out);
                    if let Some(tol) = cfg.tolerances.inflation {
                        gates.push(Gate::new("norm.non_inflation", ni.excess, tol, false));
                    }
                    n.smoothed = Some(ni);
                }
            }
            Some(SmoothStage {
                calibration: *cal,
                margin: cfg.margin,
                scales: scales_out,
                eps_strictly_decreasing: decreasing,
                field_i0: cfg.i0,
                field: rows,
            })
        }
        None => None,
    };

    let curvature = match (&source, cfg.stages.curvature, &calibration) {
        (Some(src), true, Some((cutoff, _))) => Some(clock.time("curvature", || {
            let probe = cfg.curvature.probe.unwrap_or(cfg.probe);
            let res = Resolution { steps_per_radius: cfg.curvature.steps_per_radius.or(cfg.steps_per_radius), ..res };
            let m = src.metric_at(cfg.i0, &res, &probe)?;
            stages::check_scale(&m, cfg.i0)?;
            stages::curvature_stage(&m, *cutoff, cfg.i0, cfg.stride, cfg.margin, &probe)
        })?),
        _ => None,
    };
    if let Some(c) = &curvature {
        if let Some(tol) = cfg.tolerances.curvature {
            let sup = c.sup_commutator.max(c.sup_gauss).max(c.sup_direct);
            gates.push(Gate::new("curvature.sup", sup, tol, false));
        }
        if let Some(tol) = cfg.tolerances.p2_residual {
            gates.push(Gate::new("curvature.p2_residual", c.p2_residual, tol, false));
        }
    }

    let patch = match (&cfg.torus, cfg.stages.patch, &calibration) {
        (Some(path), true, Some((cutoff, _))) => Some(clock.time("patch", || {
            let (_, model) = load_torus(path)?;
            let i0 = cfg.patch.i0.unwrap_or(cfg.i0);
            let (stage, _) = stages::patch_stage(&model, *cutoff, i0, &cfg.patch)?;
            Ok(stage)
        })?),
        _ => None,
    };
    if let Some(p) = &patch {
        if let Some(tol) = cfg.tolerances.consistency {
            gates.push(Gate::new("patch.consistency", p.consistency, tol, false));
        }
        if let Some(tol) = cfg.tolerances.inflation {
            gates.push(Gate::new("patch.non_inflation", p.non_inflation.excess, tol, false));
        }
    }

    let passed = gates.iter().all(|g| g.passed);
    Ok(PipelineReport {
        schema: SCHEMA_TAG.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        metric,
        norm,
        cell,
        smooth,
        curvature,
        patch,
        gates,
        passed,
        timings: clock.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> std::result::Result<PipelineConfig, serde_json::Error> {
        serde_json::from_str(&format!(r#"{{"i0": 0.1{extra}}}"#))
    }

    #[test]
    fn defaults_fill_an_empty_config() {
        let c = minimal("").unwrap();
        assert!(c.stages.smooth && !c.stages.patch);
        assert_eq!(c.scales(), vec![0.1]);
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.oracle_frame, OracleFrame::FrozenAtCenter);
        assert!(minimal(r#", "surprise": 1"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let no_metric = minimal("").unwrap();
        assert!(matches!(no_metric.validate(), Err(Error::Config(_))));
        let patch_only = minimal(r#", "stages": {"norm": false, "cell": false, "smooth": false, "curvature": false}"#).unwrap();
        assert!(patch_only.validate().is_ok());
        let needs_torus = minimal(
            r#", "stages": {"norm": false, "cell": false, "smooth": false, "curvature": false, "patch": true}"#,
        )
        .unwrap();
        assert!(needs_torus.validate().unwrap_err().to_string().contains("torus"));
        let mut c = patch_only.clone();
        c.tolerances.consistency = Some(-1.0);
        assert!(c.validate().unwrap_err().to_string().contains("tolerances"));
        let mut c = patch_only.clone();
        c.i0_sweep = vec![0.1, 0.0];
        assert!(c.validate().is_err());
        let mut c = patch_only;
        c.stride = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn gates_compare_as_declared() {
        assert!(Gate::new("a", 1.0, 1.0, false).passed);
        assert!(!Gate::new("a", 1.0, 1.0, true).passed);
        assert!(!Gate::new("a", f64::NAN, 1.0, false).passed);
    }
}
