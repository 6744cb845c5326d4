//! Regularity norms on scale for a chart or an atlas.
//!
//! Every quantity is measured relative to the given atlas, so the result is
//! an upper witness for the infimum over all atlases.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::distance::{boundary_distance, DistanceOptions};
use crate::domain::{ChartDomain, Node};
use crate::error::{invalid, Error, Result};
use crate::fmath;
use crate::linalg::packed_len;
use crate::metric::{metric_eigen_bounds, partial_field, volume_measure, MetricField, VolumeWeights};

/// Pair budget for Hölder seminorms.
pub const MAX_HOLDER_PAIRS: usize = 1_000_000;

/// Highest derivative order the grid stencils support.
pub const MAX_DERIVATIVE_ORDER: usize = 2;

/// Measure for `L^p` norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpMeasure {
    #[default]
    Riemannian,
    Lebesgue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularity {
    Holder { alpha: f64 },
    Sobolev { p: f64, measure: LpMeasure },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flavor {
    pub regularity: Regularity,
    pub harmonic: bool,
    pub weak: bool,
}

impl Flavor {
    pub fn holder(alpha: f64) -> Self {
        Self {
            regularity: Regularity::Holder { alpha },
            harmonic: false,
            weak: false,
        }
    }

    pub fn sobolev(p: f64) -> Self {
        Self {
            regularity: Regularity::Sobolev {
                p,
                measure: LpMeasure::default(),
            },
            harmonic: false,
            weak: false,
        }
    }

    pub fn harmonic(mut self) -> Self {
        self.harmonic = true;
        self
    }

    pub fn weak(mut self) -> Self {
        self.weak = true;
        self
    }

    /// Parse `c`, `l`, optionally followed by `,harmonic` and/or `,weak`.
    /// `exponent` is `α` for `c` and `p` for `l`.
    pub fn parse(s: &str, exponent: f64) -> Result<Self> {
        let mut parts = s.split(',').map(str::trim);
        let mut flavor = match parts.next() {
            Some("c") => Self::holder(exponent),
            Some("l") => Self::sobolev(exponent),
            _ => return Err(invalid("flavor", alloc::format!("`{s}` must start with `c` or `l`"))),
        };
        for p in parts {
            match p {
                "harmonic" => flavor.harmonic = true,
                "weak" => flavor.weak = true,
                other => return Err(invalid("flavor", alloc::format!("unknown modifier `{other}`"))),
            }
        }
        Ok(flavor)
    }

    /// Inverse of [`Flavor::parse`] without the exponent.
    pub fn label(&self) -> String {
        let mut s = String::from(match self.regularity {
            Regularity::Holder { .. } => "c",
            Regularity::Sobolev { .. } => "l",
        });
        if self.harmonic {
            s.push_str(",harmonic");
        }
        if self.weak {
            s.push_str(",weak");
        }
        s
    }

    fn validate(&self, n: usize, k: usize) -> Result<()> {
        if k > MAX_DERIVATIVE_ORDER {
            return Err(Error::InsufficientResolution {
                k,
                max: MAX_DERIVATIVE_ORDER,
            });
        }
        match self.regularity {
            Regularity::Holder { alpha } => check_alpha(alpha),
            Regularity::Sobolev { p, .. } => {
                if k == 0 {
                    return Err(invalid("k", "L^{k,p} norms need k ≥ 1"));
                }
                let need = if k == 1 { n as f64 } else { n as f64 / 2.0 };
                if !(p > need) || !p.is_finite() {
                    return Err(invalid("p", alloc::format!("need p > {need} for k = {k}")));
                }
                Ok(())
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    Ok(())
}

/// `sup |u(x) - u(y)| / |x - y|^α` over distinct masked nodes with finite
/// values.
///
/// Up to [`MAX_HOLDER_PAIRS`] pairs are examined exhaustively. Larger grids
/// combine all pairs of a strided node subset with every short-range pair
/// (lattice offsets up to two steps) of a strided set of base nodes.
pub fn holder_seminorm(domain: &ChartDomain, values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let nodes: Vec<usize> = domain.masked_indices().filter(|&i| values[i].is_finite()).collect();
    if nodes.len() < 2 {
        return Err(invalid("field", "needs at least two nodes"));
    }
    let ratio = |a: usize, b: usize| -> f64 {
        let (x, y) = (domain.coords(domain.node_of(a)), domain.coords(domain.node_of(b)));
        let r2 = sq(x[0] - y[0]) + sq(x[1] - y[1]) + sq(x[2] - y[2]);
        fmath::abs(values[a] - values[b]) / fmath::powf(r2, 0.5 * alpha)
    };
    let total = nodes.len() * (nodes.len() - 1) / 2;
    let mut best: f64 = 0.0;
    if total <= MAX_HOLDER_PAIRS {
        for (ia, &a) in nodes.iter().enumerate() {
            for &b in &nodes[ia + 1..] {
                best = best.max(ratio(a, b));
            }
        }
        return Ok(best);
    }
    let half = MAX_HOLDER_PAIRS / 2;
    // all pairs of every `t`-th node
    let m = fmath::floor(fmath::sqrt(2.0 * half as f64)) as usize;
    let t = nodes.len().div_ceil(m);
    let sub: Vec<usize> = nodes.iter().copied().step_by(t).collect();
    for (ia, &a) in sub.iter().enumerate() {
        for &b in &sub[ia + 1..] {
            best = best.max(ratio(a, b));
        }
    }
    // short-range pairs from every `u`-th base node
    let dim = domain.dim();
    let mut offsets: Vec<Node> = Vec::new();
    let zr = if dim == 3 { 2 } else { 0 };
    for z in -zr..=zr {
        for y in -2..=2 {
            for x in -2..=2 {
                let o = [x, y, z];
                if o > [0, 0, 0] {
                    offsets.push(o);
                }
            }
        }
    }
    let u = (nodes.len() * offsets.len()).div_ceil(half).max(1);
    for &a in nodes.iter().step_by(u) {
        let na = domain.node_of(a);
        for o in &offsets {
            let nb = [na[0] + o[0], na[1] + o[1], na[2] + o[2]];
            if let Some(b) = domain.index(nb) {
                if domain.mask()[b] && values[b].is_finite() {
                    best = best.max(ratio(a, b));
                }
            }
        }
    }
    Ok(best)
}

/// `Σ_i ∂_i (g^{ij} √det g)` for every `j`, by central differences on nodes
/// whose axis neighbours are all masked (`NaN` elsewhere).
pub fn harmonic_residual_field(m: &MetricField) -> Vec<Vec<f64>> {
    let d = m.domain();
    let n = d.dim();
    let len = d.len();
    // V^{ij} = g^{ij} √det g
    let mut v = vec![vec![f64::NAN; len]; n * n];
    for idx in d.masked_indices() {
        let g = m.at(idx);
        let inv = g.inverse().expect("metric is positive definite");
        let s = fmath::sqrt(g.det());
        for i in 0..n {
            for j in 0..n {
                v[i * n + j][idx] = inv.a[i][j] * s;
            }
        }
    }
    let h = d.spacing();
    let mut out = vec![vec![f64::NAN; len]; n];
    for idx in d.masked_indices() {
        let node = d.node_of(idx);
        if !d.is_interior(node, 1) {
            continue;
        }
        for (j, row) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                let mut f = node;
                let mut b = node;
                f[i] += 1;
                b[i] -= 1;
                let (fi, bi) = (d.index(f).unwrap(), d.index(b).unwrap());
                s += (v[i * n + j][fi] - v[i * n + j][bi]) / (2.0 * h);
            }
            row[idx] = s;
        }
    }
    out
}

/// Sup norm of [`harmonic_residual_field`] over `j` and interior nodes.
pub fn harmonic_residual(m: &MetricField) -> f64 {
    harmonic_residual_field(m)
        .iter()
        .flat_map(|f| f.iter())
        .filter(|v| v.is_finite())
        .fold(0.0, |a, v| a.max(fmath::abs(*v)))
}

/// The chart restricted to the concentric ball of radius `r`, on the same
/// lattice.
pub fn restrict_chart(m: &MetricField, r: f64) -> Result<MetricField> {
    let d = m.domain();
    if !(r > 0.0) || r > d.radius() * (1.0 + 1e-12) {
        return Err(invalid("scale", alloc::format!("{r} exceeds the chart radius {}", d.radius())));
    }
    if r >= d.radius() {
        return Ok(m.clone());
    }
    let sub = ChartDomain::with_spacing(d.dim(), r, d.spacing())?;
    let pl = packed_len(d.dim());
    let mut coeffs = Vec::with_capacity(sub.len() * pl);
    for i in 0..sub.len() {
        let node = sub.node_of(i);
        match d.index(node) {
            Some(j) if sub.mask()[i] => coeffs.extend_from_slice(m.packed(j)),
            _ => {
                for a in 0..d.dim() {
                    for b in a..d.dim() {
                        coeffs.push(if a == b { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }
    MetricField::from_samples(sub, coeffs)
}

/// Minimal `Q` per condition for one chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartComponents {
    /// Quasi-isometry constant.
    pub q_quasi: f64,
    /// Scaled derivative bound.
    pub q_deriv: f64,
    /// `r · sup |Σ_i ∂_i(g^{ij} √det g)|`, for harmonic flavours.
    pub harmonic_residual: Option<f64>,
}

impl ChartComponents {
    pub fn max(&self) -> f64 {
        self.q_quasi.max(self.q_deriv).max(self.harmonic_residual.unwrap_or(0.0))
    }
}

/// Component fields `∂^j (g_ab - δ_ab)` for all `|j| ≤ k`, tagged by `|j|`.
fn derivative_fields(m: &MetricField, k: usize) -> Vec<(usize, Vec<f64>)> {
    let d = m.domain();
    let n = d.dim();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            let mut base = m.component(a, b);
            if a == b {
                base.iter_mut().for_each(|v| *v -= 1.0);
            }
            for (i, v) in base.iter_mut().enumerate() {
                if !d.mask()[i] {
                    *v = f64::NAN;
                }
            }
            if k >= 1 {
                for p in 0..n {
                    let first = partial_field(d, &base, p);
                    if k >= 2 {
                        for q in p..n {
                            out.push((2, partial_field(d, &first, q)));
                        }
                    }
                    out.push((1, first));
                }
            }
            out.push((0, base));
        }
    }
    out
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().filter(|x| x.is_finite()).fold(0.0, |a, x| a.max(fmath::abs(*x)))
}

fn lp_norm(v: &[f64], w: &VolumeWeights, p: f64) -> f64 {
    let mut s = 0.0;
    for (i, x) in v.iter().enumerate() {
        if x.is_finite() {
            s += w.get(i) * fmath::powf(fmath::abs(*x), p);
        }
    }
    fmath::powf(s, 1.0 / p)
}

/// Conditions 1 and 3 (and the harmonic residual) for one chart, restricted
/// to the ball of radius `r`.
///
/// The Hölder variant bounds `r^{|j|} sup|∂^j(g - δ)| + r^{|j|+α} [∂^j g]_α`
/// over `|j| ≤ k`; the Sobolev variant bounds `r^{|j|-n/p} ‖∂^j g‖_{L^p}`
/// over `1 ≤ |j| ≤ k`.
pub fn chart_norm_components(chart: &MetricField, r: f64, flavor: &Flavor, k: usize) -> Result<ChartComponents> {
    let n = chart.dim();
    flavor.validate(n, k)?;
    let m = restrict_chart(chart, r)?;
    let d = m.domain();
    let q_quasi = metric_eigen_bounds(&m);
    let fields = derivative_fields(&m, k);
    let mut q_deriv: f64 = 0.0;
    match flavor.regularity {
        Regularity::Holder { alpha } => {
            for (order, f) in &fields {
                let sup = sup_abs(f);
                let semi = if sup == 0.0 { 0.0 } else { holder_seminorm(d, f, alpha)? };
                let o = *order as f64;
                q_deriv = q_deriv.max(fmath::powf(r, o) * sup + fmath::powf(r, o + alpha) * semi);
            }
        }
        Regularity::Sobolev { p, measure } => {
            let w = match measure {
                LpMeasure::Riemannian => volume_measure(&m),
                LpMeasure::Lebesgue => VolumeWeights::lebesgue(d),
            };
            for (order, f) in fields.iter().filter(|(o, _)| *o >= 1) {
                let scale = fmath::powf(r, *order as f64 - n as f64 / p);
                q_deriv = q_deriv.max(scale * lp_norm(f, &w, p));
            }
        }
    }
    let harmonic_residual = flavor.harmonic.then(|| r * harmonic_residual(&m));
    Ok(ChartComponents {
        q_quasi,
        q_deriv,
        harmonic_residual,
    })
}

/// The space the charts map into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldModel {
    /// One chart that is the whole space; covering is not checked.
    SingleChart,
    /// `R² / (L Z)²`; each chart is `x ↦ center + x mod L`.
    FlatTorus { side: f64 },
}

impl ManifoldModel {
    /// Chart coordinates of the preimages of manifold point `p` under the
    /// chart centred at `center` that lie in the closed ball of radius `r`.
    pub fn preimages(&self, center: [f64; 2], p: [f64; 2], r: f64) -> Vec<[f64; 2]> {
        match *self {
            ManifoldModel::SingleChart => {
                let x = [p[0] - center[0], p[1] - center[1]];
                if x[0] * x[0] + x[1] * x[1] <= r * r {
                    vec![x]
                } else {
                    Vec::new()
                }
            }
            ManifoldModel::FlatTorus { side } => {
                let mut out = Vec::new();
                let base = [wrap(p[0] - center[0], side), wrap(p[1] - center[1], side)];
                let reach = fmath::ceil(r / side) as i32 + 1;
                for my in -reach..=reach {
                    for mx in -reach..=reach {
                        let x = [base[0] + mx as f64 * side, base[1] + my as f64 * side];
                        if x[0] * x[0] + x[1] * x[1] <= r * r * (1.0 + 1e-12) {
                            out.push(x);
                        }
                    }
                }
                out.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
                out
            }
        }
    }

    /// Do `a` and `b` represent the same manifold point?
    pub fn same_point(&self, a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
        match *self {
            ManifoldModel::SingleChart => fmath::abs(a[0] - b[0]) <= tol && fmath::abs(a[1] - b[1]) <= tol,
            ManifoldModel::FlatTorus { side } => {
                let dx = wrap(a[0] - b[0] + 0.5 * side, side) - 0.5 * side;
                let dy = wrap(a[1] - b[1] + 0.5 * side, side) - 0.5 * side;
                fmath::abs(dx) <= tol && fmath::abs(dy) <= tol
            }
        }
    }
}

/// `x mod L` in `[0, L)`.
pub fn wrap(x: f64, side: f64) -> f64 {
    let y = x - side * fmath::floor(x / side);
    if y >= side {
        0.0
    } else {
        y
    }
}

/// One chart: its centre on the manifold and the pulled-back metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasChart {
    pub center: [f64; 2],
    pub metric: MetricField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartAtlas {
    pub charts: Vec<AtlasChart>,
    pub model: ManifoldModel,
    /// Known deck transformations (lattice translations for the torus).
    #[serde(default)]
    pub deck_hints: Vec<[f64; 2]>,
}

impl ChartAtlas {
    pub fn single(metric: MetricField) -> Self {
        Self {
            charts: vec![AtlasChart {
                center: [0.0, 0.0],
                metric,
            }],
            model: ManifoldModel::SingleChart,
            deck_hints: Vec::new(),
        }
    }

    /// Fails when some chart, restricted to radius `r`, contains two
    /// distinct preimages of one manifold point.
    pub fn check_injective(&self, r: f64) -> Result<()> {
        if let ManifoldModel::FlatTorus { side } = self.model {
            // preimages differ by lattice vectors; the shortest has length
            // `side` and fits in a closed ball of radius r iff side ≤ 2r
            for c in &self.charts {
                let rr = r.min(c.metric.domain().radius());
                if side <= 2.0 * rr * (1.0 + 1e-12) {
                    return Err(Error::ChartNotInjective);
                }
            }
        }
        Ok(())
    }
}

/// Settings for the covering condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverOptions {
    /// Net spacing on the manifold; defaults to the chart grid spacing.
    pub net_spacing: Option<f64>,
    /// Largest `Q` accepted as a witness.
    pub q_max: f64,
    pub distance: DistanceOptions,
}

impl Default for CoverOptions {
    fn default() -> Self {
        Self {
            net_spacing: None,
            q_max: 20.0,
            distance: DistanceOptions::default(),
        }
    }
}

/// Outcome of the covering check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Covering {
    NotApplicable,
    /// Every net point `p` has a preimage whose distance to its chart
    /// boundary is at least `min_clearance`, so condition 2 holds for every
    /// `Q ≥ q_cover`.
    Satisfied { q_cover: f64, min_clearance: f64, net_points: usize },
    /// No `Q ≤ q_max` works; `worst_point` has the smallest clearance.
    NoWitness { worst_point: [f64; 2], min_clearance: f64 },
}

/// Norm on scale of an atlas, with the per-condition minimal `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledNormReport {
    pub scale: f64,
    pub flavor: Flavor,
    pub flavor_label: String,
    pub k: usize,
    pub q_quasi: f64,
    pub q_deriv: f64,
    pub q_cover: Option<f64>,
    pub harmonic_residual: Option<f64>,
    pub covering: Covering,
    /// Maximum of the applicable components, `None` without a witness.
    pub norm_value: Option<f64>,
    pub per_chart: Vec<ChartComponents>,
}

/// Largest clearance `d_{g_s}(p̃, ∂B(0, r))` over preimages of every net point.
fn covering(atlas: &ChartAtlas, restricted: &[MetricField], r: f64, opts: &CoverOptions) -> Result<Covering> {
    let side = match atlas.model {
        ManifoldModel::SingleChart => return Ok(Covering::NotApplicable),
        ManifoldModel::FlatTorus { side } => side,
    };
    let h = opts
        .net_spacing
        .unwrap_or_else(|| restricted.iter().map(|m| m.domain().spacing()).fold(f64::INFINITY, f64::min));
    if !(h > 0.0) {
        return Err(invalid("net_spacing", "must be positive"));
    }
    let per_axis = fmath::ceil(side / h - 1e-9).max(1.0) as usize;
    let bdist: Vec<Vec<f64>> = restricted.iter().map(|m| boundary_distance(m, &opts.distance)).collect();
    let mut worst = (f64::INFINITY, [0.0, 0.0]);
    for j in 0..per_axis {
        for i in 0..per_axis {
            let p = [i as f64 * side / per_axis as f64, j as f64 * side / per_axis as f64];
            let mut best: f64 = 0.0;
            for ((c, m), bd) in atlas.charts.iter().zip(restricted).zip(&bdist) {
                let d = m.domain();
                for x in atlas.model.preimages(c.center, p, r) {
                    let node = d.nearest_node(&x);
                    if let Some(idx) = d.index(node).filter(|&i| d.mask()[i]) {
                        best = best.max(bd[idx]);
                    }
                }
            }
            if best < worst.0 {
                worst = (best, p);
            }
        }
    }
    let min_clearance = worst.0;
    if min_clearance > 0.0 {
        let q = fmath::ln(r / (10.0 * min_clearance)).max(0.0);
        if q <= opts.q_max {
            return Ok(Covering::Satisfied {
                q_cover: q,
                min_clearance,
                net_points: per_axis * per_axis,
            });
        }
    }
    Ok(Covering::NoWitness {
        worst_point: worst.1,
        min_clearance,
    })
}

/// Norm on scale `r` of the atlas: the smallest `Q` meeting conditions 1
/// and 3 (and the harmonic residual bound) on every chart restricted to
/// `B(0, r)`, together with condition 2 for balls of radius `(r/10) e^{-Q}`.
///
/// Condition 2 only gets easier as `Q` grows, so the minimal `Q` is the
/// largest per-condition minimum.
pub fn atlas_norm_on_scale(
    atlas: &ChartAtlas,
    r: f64,
    flavor: &Flavor,
    k: usize,
    cover: &CoverOptions,
) -> Result<ScaledNormReport> {
    if atlas.charts.is_empty() {
        return Err(invalid("atlas", "has no charts"));
    }
    if !flavor.weak {
        atlas.check_injective(r)?;
    }
    let mut per_chart = Vec::with_capacity(atlas.charts.len());
    let mut restricted = Vec::with_capacity(atlas.charts.len());
    for c in &atlas.charts {
        per_chart.push(chart_norm_components(&c.metric, r, flavor, k)?);
        restricted.push(restrict_chart(&c.metric, r)?);
    }
    let q_quasi = per_chart.iter().fold(0.0, |a: f64, c| a.max(c.q_quasi));
    let q_deriv = per_chart.iter().fold(0.0, |a: f64, c| a.max(c.q_deriv));
    let harmonic_residual = flavor
        .harmonic
        .then(|| per_chart.iter().fold(0.0, |a: f64, c| a.max(c.harmonic_residual.unwrap_or(0.0))));
    let covering = covering(atlas, &restricted, r, cover)?;
    let q_cover = match covering {
        Covering::Satisfied { q_cover, .. } => Some(q_cover),
        _ => None,
    };
    let base = q_quasi.max(q_deriv).max(harmonic_residual.unwrap_or(0.0));
    let norm_value = match covering {
        Covering::NotApplicable => Some(base),
        Covering::Satisfied { q_cover, .. } => Some(base.max(q_cover)),
        Covering::NoWitness { .. } => None,
    };
    Ok(ScaledNormReport {
        scale: r,
        flavor: *flavor,
        flavor_label: flavor.label(),
        k,
        q_quasi,
        q_deriv,
        q_cover,
        harmonic_residual,
        covering,
        norm_value,
        per_chart,
    })
}

fn sq(x: f64) -> f64 {
    x * x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_chart_domain;
    use crate::metric::{sample_metric, MetricGenerator, PhiTerm, Quadratic};

    fn field(gen: MetricGenerator, r: f64, npd: usize) -> MetricField {
        sample_metric(&gen, &build_chart_domain(2, r, npd).unwrap()).unwrap()
    }

    #[test]
    fn holder_of_constant_is_zero() {
        let d = build_chart_domain(2, 1.0, 32).unwrap();
        let v = vec![3.5; d.len()];
        assert_eq!(holder_seminorm(&d, &v, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn holder_of_linear_matches_brute_force() {
        let r = 0.5;
        let d = build_chart_domain(2, r, 32).unwrap();
        let v: Vec<f64> = (0..d.len()).map(|i| d.coords(d.node_of(i))[0]).collect();
        for alpha in [0.3, 0.5, 0.8] {
            let got = holder_seminorm(&d, &v, alpha).unwrap();
            let want = (2.0 * r).powf(1.0 - alpha);
            assert!((got - want).abs() < 1e-12, "{got} {want}");
            // independent brute force over all masked pairs
            let nodes: Vec<usize> = d.masked_indices().collect();
            let mut best: f64 = 0.0;
            for &a in &nodes {
                for &b in &nodes {
                    if a != b {
                        let (x, y) = (d.coords(d.node_of(a)), d.coords(d.node_of(b)));
                        let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                        best = best.max((v[a] - v[b]).abs() / dist.powf(alpha));
                    }
                }
            }
            assert!((got - best).abs() < 1e-12);
        }
        let near_one = holder_seminorm(&d, &v, 0.999_999).unwrap();
        assert!((near_one - 1.0).abs() < 1e-5);
    }

    #[test]
    fn holder_subsampling_keeps_extremes() {
        let d = build_chart_domain(2, 1.0, 128).unwrap();
        let v: Vec<f64> = (0..d.len()).map(|i| d.coords(d.node_of(i))[0]).collect();
        let got = holder_seminorm(&d, &v, 0.5).unwrap();
        assert!(got <= 2f64.sqrt() + 1e-12 && got > 0.98 * 2f64.sqrt(), "{got}");
    }

    #[test]
    fn holder_rejects_bad_alpha() {
        let d = build_chart_domain(2, 1.0, 32).unwrap();
        let v = vec![0.0; d.len()];
        assert!(holder_seminorm(&d, &v, 0.0).is_err());
        assert!(holder_seminorm(&d, &v, 1.0).is_err());
    }

    #[test]
    fn harmonic_residual_flat_and_conformal() {
        assert!(harmonic_residual(&field(MetricGenerator::Flat, 1.0, 64)) <= 1e-10);
        let gen = MetricGenerator::Conformal {
            terms: vec![
                PhiTerm::Gaussian { amplitude: 0.4, center: [0.2, 0.1, 0.0], width: 0.3 },
                PhiTerm::Cosine { amplitude: 0.2, wavevector: [3.0, -1.0, 0.0], phase: 0.4 },
            ],
        };
        assert!(harmonic_residual(&field(gen, 1.0, 64)) <= 1e-8);
    }

    #[test]
    fn harmonic_residual_anisotropic_oracle() {
        let gen = MetricGenerator::Anisotropic {
            a: Quadratic { constant: 1.0, linear: [0.0; 3], quadratic: [1.0, 0.0, 0.0] },
            b: Quadratic { constant: 1.0, ..Default::default() },
        };
        let m = field(gen, 1.0, 64);
        let res = harmonic_residual_field(&m);
        let d = m.domain();
        let idx = d.index(d.nearest_node(&[0.5, 0.0])).unwrap();
        // ∂₁ (1 + x₁²)^{-1/2}
        let want = 0.5 * (1.0f64 + 0.25).powf(-1.5);
        assert!(((res[0][idx]).abs() - want).abs() <= 0.01 * want);
        assert!(res[1][idx].abs() < 1e-12);
    }

    #[test]
    fn flat_components_vanish_for_every_flavor() {
        let m = field(MetricGenerator::Flat, 1.0, 64);
        for flavor in [Flavor::holder(0.5), Flavor::holder(0.5).harmonic().weak(), Flavor::sobolev(3.0).harmonic()] {
            let k = if matches!(flavor.regularity, Regularity::Sobolev { .. }) { 2 } else { 1 };
            for r in [0.5, 1.0] {
                let c = chart_norm_components(&m, r, &flavor, k).unwrap();
                assert_eq!(c.q_quasi, 0.0);
                assert_eq!(c.q_deriv, 0.0);
                assert!(c.harmonic_residual.unwrap_or(0.0) == 0.0);
            }
        }
    }

    #[test]
    fn constant_conformal_components() {
        let c: f64 = -0.3;
        let m = field(MetricGenerator::Conformal { terms: vec![PhiTerm::Constant { value: c }] }, 1.0, 64);
        let comp = chart_norm_components(&m, 0.8, &Flavor::holder(0.5), 0).unwrap();
        assert!((comp.q_quasi - 2.0 * c.abs()).abs() < 1e-14);
        assert!((comp.q_deriv - (1.0 - (2.0 * c).exp())).abs() < 1e-14);
    }

    #[test]
    fn flavor_validation() {
        let m = field(MetricGenerator::Flat, 1.0, 64);
        assert!(matches!(
            chart_norm_components(&m, 1.0, &Flavor::holder(0.5), 3),
            Err(Error::InsufficientResolution { .. })
        ));
        assert!(chart_norm_components(&m, 1.0, &Flavor::sobolev(2.0), 1).is_err());
        assert!(chart_norm_components(&m, 1.0, &Flavor::sobolev(1.5), 2).is_ok());
        assert!(chart_norm_components(&m, 1.0, &Flavor::sobolev(3.0), 0).is_err());
        assert!(chart_norm_components(&m, 1.5, &Flavor::holder(0.5), 1).is_err());
    }

    #[test]
    fn flavor_parse_roundtrip() {
        for s in ["c", "l", "c,harmonic", "c,weak", "l,harmonic,weak"] {
            assert_eq!(Flavor::parse(s, 0.5).unwrap().label(), s);
        }
        assert!(Flavor::parse("x", 0.5).is_err());
        assert!(Flavor::parse("c,strong", 0.5).is_err());
    }

    #[test]
    fn torus_preimages_and_wrap() {
        let t = ManifoldModel::FlatTorus { side: 0.5 };
        let pre = t.preimages([0.0, 0.0], [0.3, 0.0], 0.4);
        assert_eq!(pre.len(), 2);
        assert!((pre[0][0] + 0.2).abs() < 1e-15 && (pre[1][0] - 0.3).abs() < 1e-15);
        assert!(t.same_point([0.49999999, 0.0], [-1e-8, 0.5], 1e-6));
        assert_eq!(wrap(-0.1, 0.5), 0.4);
    }

    #[test]
    fn single_chart_skips_covering() {
        let atlas = ChartAtlas::single(field(MetricGenerator::Flat, 1.0, 64));
        let rep = atlas_norm_on_scale(&atlas, 1.0, &Flavor::holder(0.5).weak(), 1, &CoverOptions::default()).unwrap();
        assert_eq!(rep.covering, Covering::NotApplicable);
        assert_eq!(rep.q_cover, None);
        assert_eq!(rep.norm_value, Some(0.0));
    }
}
