//! Gluing chart-wise smoothed metrics on a flat torus quotient.
//!
//! Chart `s` is the covering map `x ↦ c_s + x mod L` restricted to the ball
//! `B(0, r)`. Chart centres and the torus side are multiples of the grid
//! spacing, so every chart grid is a translate of one periodic lattice and
//! deck transformations map nodes to nodes.

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cell::CellSolution;
use crate::cutoff::CutoffProfile;
use crate::distance::{boundary_distance, DistanceOptions};
use crate::domain::{ChartDomain, Node};
use crate::embedding::{EmbeddingKernel, KernelOptions, PullbackField};
use crate::error::{invalid, Error, Result};
use crate::fmath;
use crate::metric::{MetricField, PhiTerm};
use crate::norms::{wrap, AtlasChart, ChartAtlas, ManifoldModel};

/// Tolerance for lattice alignment and point identification.
const SNAP: f64 = 1e-9;

/// Periodic conformal exponent: explicit samples or analytic terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeriodicPhi {
    /// `cells²` values in row-major order (x fastest).
    Samples(Vec<f64>),
    Terms(Vec<PhiTerm>),
}

/// Planar metric sampled on the periodic lattice `(L/N) Z² / L Z²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicMetric {
    pub side: f64,
    pub cells: usize,
    /// Packed `[g11, g12, g22]` per lattice point, row-major.
    pub coeffs: Vec<[f64; 3]>,
}

impl PeriodicMetric {
    /// `e^{2φ} δ` with `φ` given by `phi`.
    pub fn conformal(side: f64, cells: usize, phi: &PeriodicPhi) -> Result<Self> {
        if !(side > 0.0) || cells == 0 {
            return Err(invalid("torus", "side and cell count must be positive"));
        }
        let h = side / cells as f64;
        let values: Vec<f64> = match phi {
            PeriodicPhi::Samples(v) => {
                if v.len() != cells * cells {
                    return Err(Error::InvalidModel(alloc::format!(
                        "phi has {} samples, expected {}",
                        v.len(),
                        cells * cells
                    )));
                }
                v.clone()
            }
            PeriodicPhi::Terms(terms) => {
                let eval = |x: f64, y: f64| -> f64 {
                    let m = crate::metric::MetricGenerator::Conformal { terms: terms.clone() };
                    m.conformal_phi(&[x, y, 0.0]).unwrap_or(0.0)
                };
                // boundary rows and columns must agree
                for i in 0..=cells {
                    let t = i as f64 * h;
                    let dx = fmath::abs(eval(0.0, t) - eval(side, t));
                    let dy = fmath::abs(eval(t, 0.0) - eval(t, side));
                    if dx > 1e-12 || dy > 1e-12 {
                        return Err(Error::InvalidModel("phi is not periodic with the torus side".to_string()));
                    }
                }
                let mut v = Vec::with_capacity(cells * cells);
                for j in 0..cells {
                    for i in 0..cells {
                        v.push(eval(i as f64 * h, j as f64 * h));
                    }
                }
                v
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("phi has non-finite samples".to_string()));
        }
        let coeffs = values
            .iter()
            .map(|&p| {
                let e = fmath::exp(2.0 * p);
                [e, 0.0, e]
            })
            .collect();
        Ok(Self { side, cells, coeffs })
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.cells as f64
    }

    pub fn at(&self, i: i64, j: i64) -> [f64; 3] {
        let n = self.cells as i64;
        let (a, b) = (i.rem_euclid(n) as usize, j.rem_euclid(n) as usize);
        self.coeffs[b * self.cells + a]
    }

    /// Lattice index of a point, which must be a lattice point.
    pub fn lattice_index(&self, x: [f64; 2]) -> Result<[i64; 2]> {
        let h = self.spacing();
        let mut out = [0i64; 2];
        for k in 0..2 {
            let t = x[k] / h;
            let r = fmath::round(t);
            if fmath::abs(t - r) > SNAP * (1.0 + fmath::abs(t)) {
                return Err(Error::InvalidModel(alloc::format!("{x:?} is not on the lattice of spacing {h}")));
            }
            out[k] = r as i64;
        }
        Ok(out)
    }

    /// Chart metric `g_s(x) = g(c + x)` on `B(0, radius)`.
    pub fn chart(&self, center: [f64; 2], radius: f64) -> Result<MetricField> {
        let c = self.lattice_index(center)?;
        let d = ChartDomain::with_spacing(2, radius, self.spacing())?;
        let mut coeffs = Vec::with_capacity(d.len() * 3);
        for i in 0..d.len() {
            let node = d.node_of(i);
            coeffs.extend_from_slice(&self.at(c[0] + node[0] as i64, c[1] + node[1] as i64));
        }
        MetricField::from_samples(d, coeffs)
    }

    pub fn atlas(&self, centers: &[[f64; 2]], radius: f64) -> Result<ChartAtlas> {
        let charts = centers
            .iter()
            .map(|&c| {
                Ok(AtlasChart {
                    center: c,
                    metric: self.chart(c, radius)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChartAtlas {
            charts,
            model: ManifoldModel::FlatTorus { side: self.side },
            deck_hints: vec![[self.side, 0.0], [0.0, self.side]],
        })
    }
}

/// Flat torus with a conformal metric and a net of chart centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientModel {
    pub metric: PeriodicMetric,
    pub chart_centers: Vec<[f64; 2]>,
    pub chart_radius: f64,
}

impl QuotientModel {
    pub fn new(metric: PeriodicMetric, chart_centers: Vec<[f64; 2]>, chart_radius: f64) -> Result<Self> {
        if chart_centers.is_empty() {
            return Err(Error::InvalidModel("no chart centres".to_string()));
        }
        for c in &chart_centers {
            metric.lattice_index(*c)?;
        }
        ChartDomain::with_spacing(2, chart_radius, metric.spacing())?;
        Ok(Self {
            metric,
            chart_centers,
            chart_radius,
        })
    }

    /// `k × k` centres at `(i + 1/2) L / k`, snapped down to the lattice.
    pub fn grid_centers(metric: &PeriodicMetric, k: usize) -> Vec<[f64; 2]> {
        let h = metric.spacing();
        let mut out = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                let x = fmath::floor((i as f64 + 0.5) * metric.side / k as f64 / h + SNAP) * h;
                let y = fmath::floor((j as f64 + 0.5) * metric.side / k as f64 / h + SNAP) * h;
                out.push([x, y]);
            }
        }
        out
    }

    pub fn side(&self) -> f64 {
        self.metric.side
    }

    pub fn spacing(&self) -> f64 {
        self.metric.spacing()
    }

    pub fn manifold(&self) -> ManifoldModel {
        ManifoldModel::FlatTorus { side: self.side() }
    }

    pub fn chart_metric(&self, s: usize) -> Result<MetricField> {
        self.metric.chart(self.chart_centers[s], self.chart_radius)
    }

    pub fn atlas(&self) -> Result<ChartAtlas> {
        self.metric.atlas(&self.chart_centers, self.chart_radius)
    }

    /// Manifold point (in `[0, L)²`) of chart `s` coordinates `x`.
    pub fn project(&self, s: usize, x: [f64; 2]) -> [f64; 2] {
        let c = self.chart_centers[s];
        [wrap(c[0] + x[0], self.side()), wrap(c[1] + x[1], self.side())]
    }

    fn node_of(&self, x: [f64; 2]) -> Node {
        let h = self.spacing();
        [fmath::round(x[0] / h) as i32, fmath::round(x[1] / h) as i32, 0]
    }

    fn in_ball(&self, x: [f64; 2]) -> bool {
        x[0] * x[0] + x[1] * x[1] <= self.chart_radius * self.chart_radius * (1.0 + 1e-12)
    }
}

/// Lift a polyline on the torus through chart `s`, starting at the preimage
/// `start` of its first vertex.
///
/// Each vertex is replaced by its representative nearest to the current
/// preimage; a step longer than a quarter of the side is ambiguous.
pub fn lift_curve(model: &QuotientModel, s: usize, start: [f64; 2], curve: &[[f64; 2]]) -> Result<[f64; 2]> {
    if s >= model.chart_centers.len() {
        return Err(invalid("chart", alloc::format!("index {s} out of range")));
    }
    let side = model.side();
    let c = model.chart_centers[s];
    let first = curve.first().ok_or_else(|| invalid("curve", "is empty"))?;
    if !model.manifold().same_point(model.project(s, start), *first, SNAP) {
        return Err(Error::PreimageMismatch);
    }
    if !model.in_ball(start) {
        return Err(Error::LiftExitsChart { step: 0 });
    }
    let mut x = start;
    for (step, q) in curve.iter().enumerate().skip(1) {
        let base = [q[0] - c[0], q[1] - c[1]];
        let mut next = [0.0; 2];
        for k in 0..2 {
            let m = fmath::round((x[k] - base[k]) / side);
            next[k] = base[k] + m * side;
        }
        let len = fmath::sqrt(sq(next[0] - x[0]) + sq(next[1] - x[1]));
        if len > 0.25 * side {
            return Err(Error::StepTooLong { step });
        }
        if !model.in_ball(next) {
            return Err(Error::LiftExitsChart { step });
        }
        x = next;
    }
    Ok(x)
}

/// Isometric embedding between two chart balls over a common point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallMap {
    pub from_chart: usize,
    pub to_chart: usize,
    pub from_center: [f64; 2],
    pub to_center: [f64; 2],
    /// `ψ(x) = x + translation`.
    pub translation: [f64; 2],
    /// Source ball radius `r₄ = (r/20) e^{-4Q}` (Euclidean).
    pub r4: f64,
    /// Target ball radius `r₃ = (r/20) e^{-3Q}`.
    pub r3: f64,
    /// Nodes of the source ball where `ψ` was built by lifting.
    pub samples: usize,
    /// `max |g_{s'}(ψ(x)) - g_s(x)|` over those nodes.
    pub metric_defect: f64,
}

impl BallMap {
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0] + self.translation[0], x[1] + self.translation[1]]
    }
}

/// Build `ψ: B_{g₀}(p̃, r₄) → B(p̃′, r₃)` by lifting straight segments from
/// `p̃` through chart `s′`, then check that it is the deck translation
/// `p̃′ - p̃` and an isometry on grid nodes.
pub fn ball_correspondence(
    model: &QuotientModel,
    q: f64,
    s: usize,
    p: [f64; 2],
    s2: usize,
    p2: [f64; 2],
) -> Result<BallMap> {
    let manifold = model.manifold();
    if !manifold.same_point(model.project(s, p), model.project(s2, p2), SNAP) {
        return Err(Error::PreimageMismatch);
    }
    let r = model.chart_radius;
    let r4 = r / 20.0 * fmath::exp(-4.0 * q);
    let r3 = r / 20.0 * fmath::exp(-3.0 * q);
    let h = model.spacing();
    let translation = [p2[0] - p[0], p2[1] - p[1]];
    let center = model.node_of(p);
    let reach = fmath::floor(r4 / h) as i32;
    let mut samples = 0;
    let mut defect: f64 = 0.0;
    for b in -reach..=reach {
        for a in -reach..=reach {
            let x = [(center[0] + a) as f64 * h, (center[1] + b) as f64 * h];
            let off = [x[0] - p[0], x[1] - p[1]];
            if off[0] * off[0] + off[1] * off[1] > r4 * r4 || !model.in_ball(x) {
                continue;
            }
            let steps = fmath::ceil(fmath::sqrt(off[0] * off[0] + off[1] * off[1]) / h).max(1.0) as usize;
            let curve: Vec<[f64; 2]> = (0..=steps)
                .map(|t| {
                    let u = t as f64 / steps as f64;
                    model.project(s, [p[0] + u * off[0], p[1] + u * off[1]])
                })
                .collect();
            let y = lift_curve(model, s2, p2, &curve)?;
            let expect = [x[0] + translation[0], x[1] + translation[1]];
            if fmath::abs(y[0] - expect[0]) > SNAP || fmath::abs(y[1] - expect[1]) > SNAP {
                return Err(Error::InvalidModel("lifted map is not the deck translation".to_string()));
            }
            let ga = model.metric.at(
                model.metric.lattice_index(model.project(s, x))?[0],
                model.metric.lattice_index(model.project(s, x))?[1],
            );
            let ib = model.metric.lattice_index(model.project(s2, y))?;
            let gb = model.metric.at(ib[0], ib[1]);
            for k in 0..3 {
                defect = defect.max(fmath::abs(ga[k] - gb[k]));
            }
            samples += 1;
        }
    }
    Ok(BallMap {
        from_chart: s,
        to_chart: s2,
        from_center: p,
        to_center: p2,
        translation,
        r4,
        r3,
        samples,
        metric_defect: defect,
    })
}

/// One chart-wise definition of `ḡ` at a sample point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub chart: usize,
    pub preimage: [f64; 2],
    pub node: Node,
    pub value: [f64; 3],
}

/// `ḡ` on a sample net of the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetric {
    pub side: f64,
    /// Net points per axis.
    pub net_cells: usize,
    pub sample_points: Vec<[f64; 2]>,
    pub gbar: Vec<[f64; 3]>,
    /// Every admissible definition per point; the first is the designated
    /// one (lowest chart, then lexicographic preimage).
    pub provenance: Vec<Vec<Candidate>>,
    /// Largest relative difference between candidates at one point.
    pub max_discrepancy: f64,
}

impl GlobalMetric {
    pub fn as_periodic(&self) -> PeriodicMetric {
        PeriodicMetric {
            side: self.side,
            cells: self.net_cells,
            coeffs: self.gbar.clone(),
        }
    }
}

fn rel_diff(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut d = 0.0;
    let mut s = 0.0;
    for k in 0..3 {
        let w = if k == 1 { 2.0 } else { 1.0 };
        d += w * sq(a[k] - b[k]);
        s += w * a[k] * a[k];
    }
    fmath::sqrt(d / s)
}

/// Lattice points on the net of stride `stride` (a divisor of the cell count).
pub fn sample_net(model: &QuotientModel, stride: usize) -> Result<Vec<[f64; 2]>> {
    let cells = model.metric.cells;
    if stride == 0 || cells % stride != 0 {
        return Err(invalid("stride", alloc::format!("must divide the cell count {cells}")));
    }
    let h = model.spacing();
    let m = cells / stride;
    let mut out = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            out.push([(i * stride) as f64 * h, (j * stride) as f64 * h]);
        }
    }
    Ok(out)
}

/// Chart nodes needed to evaluate `ḡ` on the net: every preimage of a net
/// point whose `g_s`-distance to the chart boundary is at least
/// `clearance`.
pub fn preimage_nodes(model: &QuotientModel, stride: usize, clearance: f64) -> Result<Vec<Vec<Node>>> {
    let net = sample_net(model, stride)?;
    let mut out = Vec::with_capacity(model.chart_centers.len());
    for s in 0..model.chart_centers.len() {
        let m = model.chart_metric(s)?;
        let bd = boundary_distance(&m, &DistanceOptions::default());
        let d = m.domain();
        let mut nodes = Vec::new();
        for p in &net {
            for x in model.manifold().preimages(model.chart_centers[s], *p, model.chart_radius) {
                let node = model.node_of(x);
                if let Some(i) = d.index(node).filter(|&i| d.mask()[i]) {
                    if bd[i] >= clearance {
                        nodes.push(node);
                    }
                }
            }
        }
        nodes.sort();
        nodes.dedup();
        out.push(nodes);
    }
    Ok(out)
}

/// Define `ḡ` at every net point from chart-wise pull-back metrics
/// (`fields[s]` belongs to chart `s`).
///
/// Preimages must keep `B_{g_s}(p̃, r₁)` inside the chart with
/// `r₁ = (r/10) e^{-Q}`; the covering charts have identity Jacobian, so
/// `ḡ(p) = g̃_s(p̃)`.
pub fn assemble_global_metric(model: &QuotientModel, fields: &[PullbackField], q: f64, stride: usize) -> Result<GlobalMetric> {
    if fields.len() != model.chart_centers.len() {
        return Err(invalid("fields", "need one pull-back field per chart"));
    }
    let r1 = model.chart_radius / 10.0 * fmath::exp(-q);
    let net = sample_net(model, stride)?;
    let mut lookup: Vec<BTreeMap<Node, usize>> = Vec::with_capacity(fields.len());
    let mut clear: Vec<(MetricField, Vec<f64>)> = Vec::with_capacity(fields.len());
    for (s, f) in fields.iter().enumerate() {
        lookup.push(f.points.iter().enumerate().map(|(i, p)| (*p, i)).collect());
        let m = model.chart_metric(s)?;
        let bd = boundary_distance(&m, &DistanceOptions::default());
        clear.push((m, bd));
    }
    let mut gbar = Vec::with_capacity(net.len());
    let mut provenance = Vec::with_capacity(net.len());
    let mut worst: f64 = 0.0;
    for (index, p) in net.iter().enumerate() {
        let mut cands = Vec::new();
        for (s, f) in fields.iter().enumerate() {
            let (m, bd) = &clear[s];
            for x in model.manifold().preimages(model.chart_centers[s], *p, model.chart_radius) {
                let node = model.node_of(x);
                let Some(gi) = m.domain().index(node).filter(|&i| m.domain().mask()[i]) else {
                    continue;
                };
                if bd[gi] < r1 {
                    continue;
                }
                if let Some(&k) = lookup[s].get(&node) {
                    let g = &f.gtilde[k];
                    cands.push(Candidate {
                        chart: s,
                        preimage: x,
                        node,
                        value: [g[0], g[1], g[2]],
                    });
                }
            }
        }
        let Some(first) = cands.first() else {
            return Err(Error::Uncovered { index, point: *p });
        };
        for c in &cands[1..] {
            worst = worst.max(rel_diff(&first.value, &c.value));
        }
        gbar.push(first.value);
        provenance.push(cands);
    }
    Ok(GlobalMetric {
        side: model.side(),
        net_cells: model.metric.cells / stride,
        sample_points: net,
        gbar,
        provenance,
        max_discrepancy: worst,
    })
}

/// Chart-wise pull-back metrics at every admissible preimage of the net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusSmoothing {
    pub i0: f64,
    pub net_stride: usize,
    pub fields: Vec<PullbackField>,
    /// Cells solved from scratch.
    pub cells_solved: usize,
    /// Cells reused from another chart through a deck translation.
    pub cells_shared: usize,
}

/// Run the embedding on every chart of the model, evaluating `g̃` at the
/// preimages of the net of stride `net_stride` that lie in each chart's
/// evaluation region and clear the boundary by `r₁ = (r/10) e^{-Q}`.
///
/// Chart grids are translates of one periodic lattice, so a cell solved in
/// one chart is moved to the other charts instead of being solved again.
pub fn smooth_torus(
    model: &QuotientModel,
    cutoff: CutoffProfile,
    i0: f64,
    opts: KernelOptions,
    net_stride: usize,
    q: f64,
) -> Result<TorusSmoothing> {
    let r1 = model.chart_radius / 10.0 * fmath::exp(-q);
    let wanted = preimage_nodes(model, net_stride, r1)?;
    let mut shared: BTreeMap<[i64; 2], CellSolution> = BTreeMap::new();
    let mut out = TorusSmoothing {
        i0,
        net_stride,
        fields: Vec::with_capacity(wanted.len()),
        cells_solved: 0,
        cells_shared: 0,
    };
    for (s, nodes) in wanted.iter().enumerate() {
        let metric = model.chart_metric(s)?;
        let kernel = EmbeddingKernel::new(&metric, cutoff, i0, opts)?;
        let c = model.metric.lattice_index(model.chart_centers[s])?;
        let key = |x: Node| [(c[0] + x[0] as i64).rem_euclid(model.metric.cells as i64), (c[1] + x[1] as i64).rem_euclid(model.metric.cells as i64)];
        let mut bank = kernel.bank(&metric)?;
        let d = metric.domain();
        let mut adopted = 0;
        for i in d.masked_indices() {
            let x = d.node_of(i);
            if kernel.source_weight(x) > 0.0 {
                if let Some(sol) = shared.get(&key(x)) {
                    if bank.adopt(sol, x) {
                        adopted += 1;
                    }
                }
            }
        }
        let points: Vec<Node> = nodes.iter().copied().filter(|p| kernel.in_eval_region(*p)).collect();
        out.fields.push(kernel.pullback_metric(&mut bank, &points)?);
        out.cells_shared += adopted;
        for sol in bank.solved() {
            let k = key(sol.center);
            if !shared.contains_key(&k) {
                shared.insert(k, sol.clone());
                out.cells_solved += 1;
            }
        }
    }
    Ok(out)
}

/// Cross-chart agreement of `g̃` after transport by the ball correspondence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Largest relative Frobenius difference over all candidate pairs.
    pub max_discrepancy: f64,
    pub pairs: usize,
    /// Worst discrepancy per sample point.
    pub per_point: Vec<f64>,
    /// Largest metric defect of the correspondences used.
    pub max_metric_defect: f64,
}

/// Compare every pair of definitions at every sample point, transporting
/// through [`ball_correspondence`] (translations have identity Jacobian).
pub fn consistency_check(model: &QuotientModel, global: &GlobalMetric, q: f64) -> Result<ConsistencyReport> {
    let mut rep = ConsistencyReport {
        max_discrepancy: 0.0,
        pairs: 0,
        per_point: Vec::with_capacity(global.provenance.len()),
        max_metric_defect: 0.0,
    };
    for cands in &global.provenance {
        let mut worst: f64 = 0.0;
        for (i, a) in cands.iter().enumerate() {
            for b in &cands[i + 1..] {
                let psi = ball_correspondence(model, q, a.chart, a.preimage, b.chart, b.preimage)?;
                rep.max_metric_defect = rep.max_metric_defect.max(psi.metric_defect);
                worst = worst.max(rel_diff(&a.value, &b.value));
                rep.pairs += 1;
            }
        }
        rep.max_discrepancy = rep.max_discrepancy.max(worst);
        rep.per_point.push(worst);
    }
    Ok(rep)
}

fn sq(x: f64) -> f64 {
    x * x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(side: f64, cells: usize, radius: f64, k: usize) -> QuotientModel {
        let phi = PeriodicPhi::Terms(vec![PhiTerm::Cosine {
            amplitude: 0.1,
            wavevector: [2.0 * core::f64::consts::PI / side, 0.0, 0.0],
            phase: 0.3,
        }]);
        let metric = PeriodicMetric::conformal(side, cells, &phi).unwrap();
        let centers = QuotientModel::grid_centers(&metric, k);
        QuotientModel::new(metric, centers, radius).unwrap()
    }

    #[test]
    fn non_periodic_phi_is_rejected() {
        let phi = PeriodicPhi::Terms(vec![PhiTerm::Cosine { amplitude: 0.1, wavevector: [5.0, 0.0, 0.0], phase: 0.0 }]);
        assert!(matches!(PeriodicMetric::conformal(0.5, 40, &phi), Err(Error::InvalidModel(_))));
        assert!(PeriodicMetric::conformal(0.5, 40, &PeriodicPhi::Samples(vec![0.0; 10])).is_err());
    }

    #[test]
    fn off_lattice_center_is_rejected() {
        let m = PeriodicMetric::conformal(0.5, 40, &PeriodicPhi::Samples(vec![0.0; 1600])).unwrap();
        assert!(QuotientModel::new(m, vec![[0.0031, 0.0]], 0.4).is_err());
    }

    #[test]
    fn contractible_loop_returns_to_start() {
        let t = torus(0.5, 80, 0.4, 3);
        let c = t.chart_centers[0];
        let start = [0.05, -0.02];
        let p0 = [c[0] + start[0], c[1] + start[1]];
        let curve: Vec<[f64; 2]> = (0..=40)
            .map(|i| {
                let a = i as f64 / 40.0 * core::f64::consts::TAU;
                [p0[0] + 0.1 * (1.0 - a.cos()), p0[1] + 0.1 * a.sin()]
            })
            .collect();
        let end = lift_curve(&t, 0, start, &curve).unwrap();
        assert!((end[0] - start[0]).abs() < 1e-12 && (end[1] - start[1]).abs() < 1e-12);
    }

    #[test]
    fn winding_loop_picks_up_deck_translation() {
        let t = torus(0.5, 80, 0.4, 1);
        let c = t.chart_centers[0];
        let start = [-0.25, 0.0];
        let curve: Vec<[f64; 2]> = (0..=20).map(|i| [c[0] - 0.25 + 0.025 * i as f64, c[1]]).collect();
        let end = lift_curve(&t, 0, start, &curve).unwrap();
        assert!((end[0] - 0.25).abs() < 1e-12 && end[1].abs() < 1e-12);
    }

    #[test]
    fn lift_errors() {
        let t = torus(0.5, 80, 0.2, 1);
        let c = t.chart_centers[0];
        let long: Vec<[f64; 2]> = (0..=20).map(|i| [c[0] + 0.025 * i as f64, c[1]]).collect();
        assert!(matches!(lift_curve(&t, 0, [0.0, 0.0], &long), Err(Error::LiftExitsChart { .. })));
        let jump = [[c[0], c[1]], [c[0] + 0.2, c[1]]];
        assert!(matches!(lift_curve(&t, 0, [0.0, 0.0], &jump), Err(Error::StepTooLong { step: 1 })));
        assert!(matches!(lift_curve(&t, 0, [0.01, 0.0], &jump), Err(Error::PreimageMismatch)));
    }

    #[test]
    fn ball_correspondence_identity_and_translation() {
        let t = torus(0.5, 80, 0.4, 3);
        let id = ball_correspondence(&t, 0.2, 1, [0.0125, 0.025], 1, [0.0125, 0.025]).unwrap();
        assert_eq!(id.translation, [0.0, 0.0]);
        assert!(id.samples > 1);
        let p = [0.1, 0.05];
        let m = t.project(0, p);
        let other = t.manifold().preimages(t.chart_centers[4], m, 0.4);
        for q in other {
            let psi = ball_correspondence(&t, 0.2, 0, p, 4, q).unwrap();
            assert!(psi.metric_defect <= 1e-8);
            let y = psi.apply(p);
            assert!((y[0] - q[0]).abs() < 1e-12 && (y[1] - q[1]).abs() < 1e-12);
        }
        assert!(matches!(
            ball_correspondence(&t, 0.2, 0, p, 4, [0.0, 0.0]),
            Err(Error::PreimageMismatch)
        ));
    }

    #[test]
    fn chart_metrics_are_translates() {
        let t = torus(0.5, 80, 0.3, 2);
        let a = t.chart_metric(0).unwrap();
        let b = t.chart_metric(3).unwrap();
        let shift = [
            ((t.chart_centers[0][0] - t.chart_centers[3][0]) / t.spacing()).round() as i32,
            ((t.chart_centers[0][1] - t.chart_centers[3][1]) / t.spacing()).round() as i32,
        ];
        let node = [0, 0, 0];
        let moved = [node[0] + shift[0], node[1] + shift[1], 0];
        assert_eq!(a.at_node(node), b.at_node(moved));
    }
}
