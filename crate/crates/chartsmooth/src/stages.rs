//! Stage computations shared by the subcommands and the pipeline.

use std::borrow::Cow;
use std::collections::BTreeMap;

use chartsmooth_core::cell::{cell_deviation_report, euclidean_cell_oracle, solve_cell, CellDeviation, CellOptions, CellSolution, OracleFrame};
use chartsmooth_core::cutoff::{build_cutoff, calibrate, normalization_integral, CutoffProfile, RadialPlan};
use chartsmooth_core::domain::{ChartDomain, Node};
use chartsmooth_core::embedding::{select_stride, EmbeddingKernel, KernelOptions, PullbackField};
use chartsmooth_core::gauss::reference_gauss_curvature;
use chartsmooth_core::linalg::SmallMat;
use chartsmooth_core::metric::{eigen_range, MetricField};
use chartsmooth_core::norms::{atlas_norm_on_scale, chart_norm_components, CoverOptions, Flavor, ScaledNormReport};
use chartsmooth_core::patchwork::{
    assemble_global_metric, consistency_check, smooth_torus, GlobalMetric, PeriodicMetric, QuotientModel,
};
use chartsmooth_core::submanifold::{curvature_report, CurvatureOptions};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::formats::MetricSpec;

/// Largest relative change of `g̃` accepted before a source stride is used.
pub const STRIDE_TOLERANCE: f64 = 0.005;

/// Where the smoothed quantities are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Probe {
    /// Only nodes within this coordinate radius of the chart centre.
    pub radius: Option<f64>,
    /// Approximate spacing between evaluation nodes.
    pub spacing: Option<f64>,
}

/// Grid used at each cell scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Resample the generator with this many grid steps per cell radius,
    /// measured in the metric at the chart centre. `None` keeps the grid of
    /// the metric document for every scale.
    pub steps_per_radius: Option<f64>,
    pub margin: f64,
}

/// A chart metric document together with its default sampling.
#[derive(Debug, Clone)]
pub struct ChartSource {
    pub spec: MetricSpec,
    pub base: MetricField,
}

impl ChartSource {
    pub fn new(spec: MetricSpec, base: MetricField) -> Self {
        Self { spec, base }
    }

    /// The chart grid for cell scale `i0`.
    pub fn metric_at(&self, i0: f64, res: &Resolution, probe: &Probe) -> Result<Cow<'_, MetricField>> {
        let Some(steps) = res.steps_per_radius else {
            return Ok(Cow::Borrowed(&self.base));
        };
        if !(steps > 0.0) {
            return Err(Error::Config("steps_per_radius must be positive".into()));
        }
        let n = self.base.dim();
        let g0 = self.base.at_node([0, 0, 0]).unwrap_or_else(|| SmallMat::identity(n));
        let ev = g0.sym_eigenvalues();
        let lmin = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let lmax = ev.iter().copied().fold(0.0, f64::max);
        let h = i0 / (steps * lmax.sqrt());
        let radius = match probe.radius {
            Some(p) => {
                let reach = 1.25 * (res.margin * i0 + 4.0 * h * lmax.sqrt()) / lmin.sqrt() + 3.0 * h;
                (p + reach).min(self.spec.radius)
            }
            None => self.spec.radius,
        };
        self.spec.resample(radius, h).map(Cow::Owned).map_err(Error::Config)
    }
}

/// Reject scales too small for the chart grid.
pub fn check_scale(metric: &MetricField, i0: f64) -> Result<()> {
    let h = metric.domain().spacing();
    if !(i0 >= 6.0 * h * (1.0 - 1e-12)) {
        return Err(Error::Config(format!("i0 = {i0} is below six grid steps ({h})")));
    }
    Ok(())
}

fn coords(metric: &MetricField, p: Node) -> [f64; 2] {
    let x = metric.domain().coords(p);
    [x[0], x[1]]
}

/// Evaluation nodes selected by `probe`, in grid order.
pub fn probe_points(kernel: &EmbeddingKernel, probe: &Probe) -> Vec<Node> {
    let d = kernel.domain();
    let h = d.spacing();
    let sub = probe.spacing.map(|s| ((s / h).round() as i32).max(1)).unwrap_or(1);
    kernel
        .eval_region()
        .iter()
        .copied()
        .filter(|p| p.iter().all(|c| c.rem_euclid(sub) == 0))
        .filter(|p| match probe.radius {
            Some(r) => {
                let x = d.coords(*p);
                x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= r * r * (1.0 + 1e-12)
            }
            None => true,
        })
        .collect()
}

// ---------------------------------------------------------------- cells

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScale {
    pub i0: f64,
    pub spacing: f64,
    pub deviation: CellDeviation,
    pub unknowns: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// One interior node of a cell against the flat closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub x: f64,
    pub y: f64,
    /// Distance to the centre in the comparison frame.
    pub distance: f64,
    pub h: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStage {
    pub frame: OracleFrame,
    pub scales: Vec<CellScale>,
    pub profile_i0: f64,
    pub profile: Vec<ProfileRow>,
}

pub fn solve_center_cell(metric: &MetricField, i0: f64, frame: OracleFrame) -> Result<(CellScale, CellSolution)> {
    let sol = solve_cell(metric, [0, 0, 0], i0, &CellOptions::default()).stage("cell")?;
    let deviation = cell_deviation_report(&sol, metric, frame);
    let scale = CellScale {
        i0,
        spacing: metric.domain().spacing(),
        deviation,
        unknowns: sol.unknowns,
        iterations: sol.iterations,
        residual: sol.residual,
    };
    Ok((scale, sol))
}

/// Interior nodes of `sol` with the oracle in the chosen frame.
pub fn radial_profile(metric: &MetricField, sol: &CellSolution, frame: OracleFrame) -> Vec<ProfileRow> {
    let d = metric.domain();
    let n = sol.dim;
    let g0 = match frame {
        OracleFrame::Chart => SmallMat::identity(n),
        OracleFrame::FrozenAtCenter => metric.at_node(sol.center).unwrap_or_else(|| SmallMat::identity(n)),
    };
    // |L^T v| = √(vᵀ g0 v) with g0 = L Lᵀ
    let l = g0.cholesky().unwrap_or_else(|| SmallMat::identity(n));
    let xs = d.coords(sol.center);
    let limit = sol.interior_fraction * sol.i0;
    let inner = sol.bbox.grow(-1, n);
    let mut rows = Vec::new();
    for node in sol.bbox.nodes() {
        if !inner.contains(node) {
            continue;
        }
        let x = d.coords(node);
        let mut y = [0.0; 3];
        for a in 0..n {
            for b in a..n {
                y[a] += l.a[b][a] * (x[b] - xs[b]);
            }
        }
        let dist = y[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist > limit {
            continue;
        }
        rows.push(ProfileRow {
            x: x[0],
            y: x[1],
            distance: dist,
            h: sol.value_at(node),
            oracle: euclidean_cell_oracle(&[0.0; 3][..n], sol.i0, &y[..n], n),
        });
    }
    rows
}

// ---------------------------------------------------------------- smoothing

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBlock {
    pub amplitude: f64,
    pub unit_integral: f64,
    pub refinement_change: f64,
    /// Normalisation integral recomputed with the calibrated amplitude.
    pub normalization: f64,
}

pub fn calibrated(n: usize) -> Result<(CutoffProfile, CalibrationBlock)> {
    let raw = build_cutoff(n).stage("calibration")?;
    let cal = calibrate(n, &raw).stage("calibration")?;
    let cutoff = raw.with_amplitude(cal.amplitude);
    let normalization = normalization_integral(n, &cutoff, RadialPlan::default());
    Ok((
        cutoff,
        CalibrationBlock {
            amplitude: cal.amplitude,
            unit_integral: cal.unit_integral,
            refinement_change: cal.refinement_change,
            normalization,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothScale {
    pub i0: f64,
    pub spacing: f64,
    pub stride: usize,
    /// Relative change of `g̃` between the configured stride and stride 1.
    pub stride_difference: f64,
    pub points: usize,
    /// `max |log λ|` of `g̃` against `g`.
    pub eps: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub cells: usize,
    /// Support radius of `f_p` at the central point over `1.8 i₀`, in
    /// coordinates and with the smallest metric eigenvalue.
    pub support_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothStage {
    pub calibration: CalibrationBlock,
    pub margin: f64,
    pub scales: Vec<SmoothScale>,
    /// `eps` strictly decreases as `i₀` decreases.
    pub eps_strictly_decreasing: bool,
    pub field_i0: f64,
    pub field: Vec<FieldRow>,
}

pub fn kernel_for(metric: &MetricField, cutoff: CutoffProfile, i0: f64, stride: usize, margin: f64) -> Result<(EmbeddingKernel, f64)> {
    let opts = KernelOptions { stride, margin, ..Default::default() };
    let (stride, diff) = select_stride(metric, cutoff, i0, opts, STRIDE_TOLERANCE).stage("smooth")?;
    let kernel = EmbeddingKernel::new(metric, cutoff, i0, KernelOptions { stride, ..opts }).stage("smooth")?;
    Ok((kernel, diff))
}

pub fn field_rows(metric: &MetricField, field: &PullbackField) -> Vec<FieldRow> {
    field
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = coords(metric, *p);
            let g = &field.gtilde[i];
            FieldRow { x: x[0], y: x[1], g11: g[0], g12: g[1], g22: g[2], ratio_lo: field.ratio_lo[i], ratio_hi: field.ratio_hi[i] }
        })
        .collect()
}

/// Pull-back metric at the probe points of one scale.
pub fn smooth_scale(
    metric: &MetricField,
    cutoff: CutoffProfile,
    i0: f64,
    stride: usize,
    margin: f64,
    probe: &Probe,
) -> Result<(SmoothScale, PullbackField)> {
    let (kernel, diff) = kernel_for(metric, cutoff, i0, stride, margin)?;
    let points = probe_points(&kernel, probe);
    if points.is_empty() {
        return Err(Error::Config(format!("no evaluation points at i0 = {i0}; enlarge the chart or the probe")));
    }
    let mut bank = kernel.bank(metric).stage("smooth")?;
    let field = kernel.pullback_metric(&mut bank, &points).stage("smooth")?;
    let d = metric.domain();
    let central = *points
        .iter()
        .min_by(|a, b| {
            let (x, y) = (d.coords(**a), d.coords(**b));
            (x[0] * x[0] + x[1] * x[1]).total_cmp(&(y[0] * y[0] + y[1] * y[1]))
        })
        .expect("nonempty");
    let f = kernel.embedding_function(&mut bank, central).stage("smooth")?;
    let (lmin, _) = eigen_range(metric);
    let support_ratio = f.support_reach(central) as f64 * d.spacing() * lmin.sqrt() / (1.8 * i0);
    let scale = SmoothScale {
        i0,
        spacing: d.spacing(),
        stride: kernel.opts.stride,
        stride_difference: diff,
        points: points.len(),
        eps: field.max_log_ratio(),
        ratio_min: field.ratio_lo.iter().copied().fold(f64::INFINITY, f64::min),
        ratio_max: field.ratio_hi.iter().copied().fold(0.0, f64::max),
        cells: bank.len(),
        support_ratio,
    };
    Ok((scale, field))
}

/// `eps` strictly decreasing along decreasing `i₀`.
pub fn strictly_decreasing(scales: &[SmoothScale]) -> bool {
    let mut s: Vec<&SmoothScale> = scales.iter().collect();
    s.sort_by(|a, b| b.i0.total_cmp(&a.i0));
    s.windows(2).all(|w| w[1].eps < w[0].eps)
}

// ---------------------------------------------------------------- curvature

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureRow {
    pub x: f64,
    pub y: f64,
    pub k_commutator: f64,
    pub k_gauss: f64,
    pub k_direct: f64,
    /// Curvature of the input metric, when the grid allows it.
    pub k_input: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureStage {
    pub i0: f64,
    pub spacing: f64,
    pub stride: usize,
    pub rows: Vec<CurvatureRow>,
    pub sup_commutator: f64,
    pub sup_gauss: f64,
    pub sup_direct: f64,
    pub sup_input: f64,
    /// `max ‖d_v P‖ i₀ / ‖d_v F‖`.
    pub dp_bound: f64,
    pub p2_residual: f64,
}

pub fn curvature_stage(
    metric: &MetricField,
    cutoff: CutoffProfile,
    i0: f64,
    stride: usize,
    margin: f64,
    probe: &Probe,
) -> Result<CurvatureStage> {
    let (kernel, _) = kernel_for(metric, cutoff, i0, stride, margin)?;
    let opts = CurvatureOptions::default();
    let reach = opts.reach().max(opts.direct_step);
    let region: Vec<Node> = probe_points(&kernel, probe)
        .into_iter()
        .filter(|p| {
            (-reach..=reach).all(|a| (-reach..=reach).all(|b| kernel.in_eval_region([p[0] + a, p[1] + b, 0])))
        })
        .collect();
    if region.is_empty() {
        return Err(Error::Config(format!("no curvature points at i0 = {i0}; enlarge the chart or the probe")));
    }
    let mut bank = kernel.bank(metric).stage("curvature")?;
    let rep = curvature_report(&kernel, &mut bank, &region, &opts).stage("curvature")?;
    let input = reference_gauss_curvature(metric).stage("curvature")?;
    let d = metric.domain();
    let rows: Vec<CurvatureRow> = rep
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = coords(metric, *p);
            let k = d.index(*p).map(|j| input[j]).filter(|v| v.is_finite());
            CurvatureRow { x: x[0], y: x[1], k_commutator: rep.k_commutator[i], k_gauss: rep.k_gauss[i], k_direct: rep.k_direct[i], k_input: k }
        })
        .collect();
    let sup_input = rows.iter().filter_map(|r| r.k_input).fold(0.0, |a: f64, v| a.max(v.abs()));
    Ok(CurvatureStage {
        i0,
        spacing: d.spacing(),
        stride: kernel.opts.stride,
        sup_commutator: rep.sup_commutator(),
        sup_gauss: rep.sup_gauss(),
        sup_direct: rep.sup_direct(),
        sup_input,
        dp_bound: rep.dp_bound,
        p2_residual: rep.p2_residual,
        rows,
    })
}

// ---------------------------------------------------------------- norms

pub fn norm_report(atlas: &chartsmooth_core::norms::ChartAtlas, scale: f64, flavor: &Flavor, k: usize) -> Result<ScaledNormReport> {
    atlas_norm_on_scale(atlas, scale, flavor, k, &CoverOptions::default()).stage("norm")
}

// ---------------------------------------------------------------- patching

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub q_quasi: f64,
    pub q_deriv: f64,
}

/// Norm components of an input metric and its smoothing at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonInflation {
    pub scale: f64,
    pub input: Components,
    pub smoothed: Components,
    /// `max(smoothed - 2 input)` over the components.
    pub excess: f64,
}

impl NonInflation {
    pub fn new(scale: f64, input: Components, smoothed: Components) -> Self {
        let excess = (smoothed.q_quasi - 2.0 * input.q_quasi).max(smoothed.q_deriv - 2.0 * input.q_deriv);
        Self { scale, input, smoothed, excess }
    }
}

/// The smoothed field as a chart of radius `radius`, when the rows cover
/// every node of that chart at `spacing`.
pub fn field_chart(rows: &[FieldRow], spacing: f64, radius: f64) -> Option<MetricField> {
    let key = |x: f64, y: f64| ((x / spacing).round() as i64, (y / spacing).round() as i64);
    let by_node: BTreeMap<(i64, i64), &FieldRow> = rows.iter().map(|r| (key(r.x, r.y), r)).collect();
    let domain = ChartDomain::with_spacing(2, radius, spacing).ok()?;
    let mut coeffs = Vec::with_capacity(3 * domain.len());
    for i in 0..domain.len() {
        let x = domain.coords(domain.node_of(i));
        match by_node.get(&key(x[0], x[1])) {
            Some(r) => coeffs.extend_from_slice(&[r.g11, r.g12, r.g22]),
            None if domain.mask()[i] => return None,
            None => coeffs.extend_from_slice(&[1.0, 0.0, 1.0]),
        }
    }
    MetricField::from_samples(domain, coeffs).ok()
}

pub fn chart_components(chart: &MetricField, scale: f64, flavor: &Flavor, k: usize) -> Result<Components> {
    let c = chart_norm_components(chart, scale, flavor, k).stage("norm")?;
    Ok(Components { q_quasi: c.q_quasi, q_deriv: c.q_deriv })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub x: f64,
    pub y: f64,
    pub discrepancy: f64,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchStage {
    pub i0: f64,
    pub net_stride: usize,
    pub flavor: String,
    /// Norm of the input atlas, used for the clearance radius.
    pub q_input: f64,
    pub cells_solved: usize,
    pub cells_shared: usize,
    pub consistency: f64,
    pub pairs: usize,
    pub metric_defect: f64,
    /// Input and glued metric compared on the sample net.
    pub non_inflation: NonInflation,
    pub rows: Vec<ConsistencyRow>,
}

/// Settings for the gluing stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSettings {
    /// Cell scale; defaults to the pipeline `i0`.
    #[serde(default)]
    pub i0: Option<f64>,
    #[serde(default = "default_net_stride")]
    pub net_stride: usize,
    #[serde(default = "default_margin_patch")]
    pub margin: f64,
    #[serde(default = "default_patch_flavor")]
    pub flavor: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub k: usize,
}

fn default_net_stride() -> usize {
    3
}
fn default_margin_patch() -> f64 {
    2.0
}
fn default_patch_flavor() -> String {
    "c,weak".into()
}
fn default_alpha() -> f64 {
    0.5
}

impl Default for PatchSettings {
    fn default() -> Self {
        Self { i0: None, net_stride: 3, margin: 2.0, flavor: default_patch_flavor(), alpha: 0.5, k: 0 }
    }
}

/// Every `stride`-th lattice point of `m`.
pub fn subsample(m: &PeriodicMetric, stride: usize) -> PeriodicMetric {
    let cells = m.cells / stride;
    let mut coeffs = Vec::with_capacity(cells * cells);
    for j in 0..cells {
        for i in 0..cells {
            coeffs.push(m.at((i * stride) as i64, (j * stride) as i64));
        }
    }
    PeriodicMetric { side: m.side, cells, coeffs }
}

fn net_components(model: &QuotientModel, metric: PeriodicMetric, flavor: &Flavor, k: usize) -> Result<Components> {
    let h = metric.spacing();
    let centers = model.chart_centers.iter().map(|c| [(c[0] / h).round() * h, (c[1] / h).round() * h]).collect();
    let net = QuotientModel::new(metric, centers, model.chart_radius).stage("patch")?;
    let rep = norm_report(&net.atlas().stage("patch")?, model.chart_radius, flavor, k)?;
    Ok(Components { q_quasi: rep.q_quasi, q_deriv: rep.q_deriv })
}

/// Norm components of the input and the glued metric at the chart radius,
/// both on the sample net of `global`.
pub fn net_non_inflation(model: &QuotientModel, global: &GlobalMetric, flavor: &Flavor, k: usize) -> Result<NonInflation> {
    let stride = model.metric.cells / global.net_cells;
    let input = net_components(model, subsample(&model.metric, stride), flavor, k)?;
    let smoothed = net_components(model, global.as_periodic(), flavor, k)?;
    Ok(NonInflation::new(model.chart_radius, input, smoothed))
}

pub fn patch_stage(model: &QuotientModel, cutoff: CutoffProfile, i0: f64, settings: &PatchSettings) -> Result<(PatchStage, GlobalMetric)> {
    let flavor = Flavor::parse(&settings.flavor, settings.alpha).stage("patch")?;
    let atlas = model.atlas().stage("patch")?;
    let input = norm_report(&atlas, model.chart_radius, &flavor, settings.k)?;
    let q = input
        .norm_value
        .ok_or_else(|| Error::Config("the torus atlas has no norm witness at its chart radius".into()))?;
    let opts = KernelOptions { stride: 1, margin: settings.margin, ..Default::default() };
    let sm = smooth_torus(model, cutoff, i0, opts, settings.net_stride, q).stage("patch")?;
    let global = assemble_global_metric(model, &sm.fields, q, settings.net_stride).stage("patch")?;
    let cons = consistency_check(model, &global, q).stage("patch")?;
    let non_inflation = net_non_inflation(model, &global, &flavor, settings.k)?;
    let rows = global
        .sample_points
        .iter()
        .zip(&cons.per_point)
        .zip(&global.provenance)
        .map(|((p, d), c)| ConsistencyRow { x: p[0], y: p[1], discrepancy: *d, candidates: c.len() })
        .collect();
    let stage = PatchStage {
        i0,
        net_stride: settings.net_stride,
        flavor: flavor.label(),
        q_input: q,
        cells_solved: sm.cells_solved,
        cells_shared: sm.cells_shared,
        consistency: cons.max_discrepancy,
        pairs: cons.pairs,
        metric_defect: cons.max_metric_defect,
        non_inflation,
        rows,
    };
    Ok((stage, global))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chartsmooth_core::metric::{sample_metric, MetricGenerator};
    use chartsmooth_core::patchwork::PeriodicPhi;

    fn scale(i0: f64, eps: f64) -> SmoothScale {
        SmoothScale {
            i0,
            spacing: 0.01,
            stride: 1,
            stride_difference: 0.0,
            points: 1,
            eps,
            ratio_min: 1.0,
            ratio_max: 1.0,
            cells: 1,
            support_ratio: 0.5,
        }
    }

    #[test]
    fn decreasing_is_judged_along_decreasing_scale() {
        assert!(strictly_decreasing(&[scale(0.05, 0.1), scale(0.2, 0.3), scale(0.1, 0.2)]));
        assert!(!strictly_decreasing(&[scale(0.2, 0.3), scale(0.1, 0.3)]));
        assert!(strictly_decreasing(&[scale(0.1, 0.3)]));
    }

    #[test]
    fn excess_takes_the_worse_component() {
        let c = |q, d| Components { q_quasi: q, q_deriv: d };
        let n = NonInflation::new(0.4, c(0.3, 1.0), c(0.5, 2.5));
        assert!((n.excess - 0.5).abs() < 1e-15);
        assert!(NonInflation::new(0.4, c(0.0, 0.0), c(0.0, 0.0)).excess == 0.0);
    }

    #[test]
    fn subsampled_lattice_keeps_every_stride_point() {
        let phi: Vec<f64> = (0..36).map(|i| i as f64 * 0.01).collect();
        let m = PeriodicMetric::conformal(0.6, 6, &PeriodicPhi::Samples(phi)).unwrap();
        let s = subsample(&m, 3);
        assert_eq!(s.cells, 2);
        assert_eq!(s.coeffs[1], m.at(3, 0));
        assert_eq!(s.coeffs[3], m.at(3, 3));
        assert!((s.spacing() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn field_rows_rebuild_a_chart() {
        let d = ChartDomain::with_spacing(2, 0.2, 0.01).unwrap();
        let m = sample_metric(&MetricGenerator::Sphere { rho: 1.0 }, &d).unwrap();
        let rows: Vec<FieldRow> = d
            .masked_indices()
            .map(|i| {
                let x = d.coords(d.node_of(i));
                let g = m.packed(i);
                FieldRow { x: x[0], y: x[1], g11: g[0], g12: g[1], g22: g[2], ratio_lo: 1.0, ratio_hi: 1.0 }
            })
            .collect();
        let back = field_chart(&rows, 0.01, 0.2).unwrap();
        for i in d.masked_indices() {
            assert_eq!(back.packed(i), m.packed(i));
        }
        // a coarser or larger chart is not covered
        assert!(field_chart(&rows, 0.01, 0.21).is_none());
        assert!(field_chart(&rows[1..], 0.01, 0.2).is_none());
    }

    #[test]
    fn scales_below_six_steps_fail() {
        let d = ChartDomain::with_spacing(2, 0.2, 0.01).unwrap();
        let m = sample_metric(&MetricGenerator::Flat, &d).unwrap();
        assert!(check_scale(&m, 0.06).is_ok());
        assert!(matches!(check_scale(&m, 0.059), Err(Error::Config(_))));
    }

    #[test]
    fn resampling_follows_the_requested_steps() {
        let spec = MetricSpec::generated(MetricGenerator::Sphere { rho: 1.0 }, 1.0, 64);
        let base = spec.build().unwrap();
        let src = ChartSource::new(spec, base);
        let res = Resolution { steps_per_radius: Some(10.0), margin: 2.0 };
        let probe = Probe { radius: Some(0.05), spacing: None };
        let m = src.metric_at(0.1, &res, &probe).unwrap();
        // sqrt of the largest eigenvalue at the centre is 2
        assert!((m.domain().spacing() - 0.005).abs() < 1e-15);
        assert!(m.domain().radius() < 1.0 && m.domain().radius() > 0.05 + 0.2 / 2.0);
        let same = src.metric_at(0.1, &Resolution { steps_per_radius: None, margin: 2.0 }, &probe).unwrap();
        assert!(matches!(same, Cow::Borrowed(_)));
    }
}
