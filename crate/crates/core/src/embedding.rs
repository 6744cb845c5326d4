//! The averaged embedding `F: Ω₁ → L²(Ω)`.
//!
//! For a centre `s` the factor `a_s(x) = β(2n h_s(x)/i₀²)` is kept only
//! inside `B_g(s, 0.9 i₀)`. Then
//!
//! ```text
//! f_p(q) = Σ_s w_s a_s(p) a_s(q),      F(p) = i₀^{1-3n/2} f_p
//! ```
//!
//! with `w_s` the source quadrature weights. Differentiating in `p` only
//! touches the first factor, so derivatives of `F` are again sums of the
//! fields `a_s` with scalar coefficients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cell::{CellBank, CellOptions, CellSolution};
use crate::cutoff::CutoffProfile;
use crate::distance::boundary_distance;
use crate::domain::{BBox, ChartDomain, Node};
use crate::error::{invalid, Error, Result};
use crate::fmath;
use crate::linalg::{packed_index, packed_len, SmallMat};
use crate::metric::{eigen_range, volume_measure, MetricField, VolumeWeights};

/// Fraction of `i₀` beyond which a source factor is cut off.
pub const SUPPORT_FRACTION: f64 = 0.9;

/// Measure used for the source integral `ds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceMeasure {
    #[default]
    Riemannian,
    Lebesgue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Sources sit on nodes whose coordinates are multiples of `stride`.
    pub stride: usize,
    /// Evaluation points keep `margin · i₀` from the chart boundary.
    pub margin: f64,
    pub measure: SourceMeasure,
    pub cell: CellOptions,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { stride: 2, margin: 2.5, measure: SourceMeasure::Riemannian, cell: CellOptions::default() }
    }
}

/// Everything needed to evaluate `F` on one chart at one scale.
#[derive(Debug, Clone)]
pub struct EmbeddingKernel {
    pub cutoff: CutoffProfile,
    pub i0: f64,
    pub n: usize,
    pub opts: KernelOptions,
    /// Source weight per grid index, zero for non-sources.
    source_weight: Vec<f64>,
    eval_region: Vec<Node>,
    eval_mask: Vec<bool>,
    weights: VolumeWeights,
    domain: ChartDomain,
}

impl EmbeddingKernel {
    pub fn new(metric: &MetricField, cutoff: CutoffProfile, i0: f64, opts: KernelOptions) -> Result<Self> {
        let d = metric.domain();
        let n = d.dim();
        if opts.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        if !(opts.margin >= 1.0 + SUPPORT_FRACTION) {
            return Err(invalid("margin", "must be at least 1.9"));
        }
        let bdist = boundary_distance(metric, &opts.cell.distance);
        let vol = volume_measure(metric);
        let stride = opts.stride as i32;
        let cell = fmath::powf(d.spacing() * opts.stride as f64, n as f64);
        let source_gap = (opts.margin - SUPPORT_FRACTION) * i0;
        // cell balls are explored slightly past i₀; keep that ring inside too
        let (_, lmax) = eigen_range(metric);
        let guard = 3.0 * d.spacing() * fmath::sqrt(lmax);
        let mut source_weight = vec![0.0; d.len()];
        let mut eval_mask = vec![false; d.len()];
        let mut eval_region = Vec::new();
        for i in d.masked_indices() {
            let node = d.node_of(i);
            if node.iter().all(|c| c.rem_euclid(stride) == 0) && bdist[i] >= source_gap {
                source_weight[i] = match opts.measure {
                    SourceMeasure::Riemannian => cell * fmath::sqrt(metric.at(i).det()),
                    SourceMeasure::Lebesgue => cell,
                };
            }
            if bdist[i] >= opts.margin * i0 + guard {
                eval_mask[i] = true;
                eval_region.push(node);
            }
        }
        if eval_region.is_empty() {
            return Err(invalid("i0", format!("no evaluation points keep {} i0 from the boundary", opts.margin)));
        }
        Ok(Self {
            cutoff,
            i0,
            n,
            opts,
            source_weight,
            eval_region,
            eval_mask,
            weights: vol,
            domain: d.clone(),
        })
    }

    /// Cell cache matching this kernel.
    pub fn bank<'m>(&self, metric: &'m MetricField) -> Result<CellBank<'m>> {
        CellBank::new(metric, self.i0, self.opts.cell)
    }

    pub fn eval_region(&self) -> &[Node] {
        &self.eval_region
    }

    pub fn in_eval_region(&self, p: Node) -> bool {
        self.domain.index(p).map(|i| self.eval_mask[i]).unwrap_or(false)
    }

    pub fn weights(&self) -> &VolumeWeights {
        &self.weights
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn source_weight(&self, s: Node) -> f64 {
        self.domain.index(s).map(|i| self.source_weight[i]).unwrap_or(0.0)
    }

    pub fn source_count(&self) -> usize {
        self.source_weight.iter().filter(|w| **w > 0.0).count()
    }

    /// `i₀^{1-3n/2}`.
    pub fn scale(&self) -> f64 {
        fmath::powf(self.i0, 1.0 - 1.5 * self.n as f64)
    }

    /// `2n/i₀²`.
    fn slope(&self) -> f64 {
        2.0 * self.n as f64 / (self.i0 * self.i0)
    }

    /// `a_s(x)` for a solved cell.
    pub fn factor(&self, cell: &CellSolution, x: Node) -> f64 {
        if cell.dist_at(x) < SUPPORT_FRACTION * self.i0 {
            self.cutoff.value(self.slope() * cell.value_at(x))
        } else {
            0.0
        }
    }

    /// Inner product in `L²(vol_g)`.
    pub fn inner(&self, a: &L2Vector, b: &L2Vector) -> f64 {
        a.dot(b, &self.domain, &self.weights)
    }

    pub fn norm(&self, a: &L2Vector) -> f64 {
        fmath::sqrt(self.inner(a, a).max(0.0))
    }

    /// Sources contributing at `p`, solving their cells on demand.
    fn sources(&self, bank: &mut CellBank<'_>, p: Node) -> Result<Vec<Node>> {
        let reach = SUPPORT_FRACTION * self.i0;
        let (local, _) = bank.solver_mut().local_distances(p, reach)?;
        let candidates: Vec<Node> = local
            .nodes_within(reach * (1.0 + 1e-9))
            .filter(|s| self.source_weight(*s) > 0.0)
            .collect();
        bank.ensure(&candidates);
        let mut out = Vec::with_capacity(candidates.len());
        for s in candidates {
            let cell = bank.get(s)?;
            if cell.dist_at(p) < reach {
                out.push(s);
            }
        }
        Ok(out)
    }

    fn require_eval(&self, p: Node) -> Result<()> {
        if self.in_eval_region(p) {
            Ok(())
        } else {
            Err(Error::OutsideEvaluationRegion(p))
        }
    }

    /// Scalar coefficients `c_s` and the field `Σ c_s w_s a_s`.
    fn assemble<F>(&self, bank: &CellBank<'_>, sources: &[Node], outputs: usize, mut coeff: F) -> Result<Vec<L2Vector>>
    where
        F: FnMut(&CellSolution, &mut [f64]),
    {
        let mut bbox: Option<BBox> = None;
        for &s in sources {
            let b = bank.get(s)?.bbox;
            bbox = Some(match bbox {
                Some(x) => x.union(&b),
                None => b,
            });
        }
        let bbox = bbox.unwrap_or(BBox::point([0, 0, 0]));
        let mut out = vec![L2Vector::zeros(bbox); outputs];
        let mut c = vec![0.0; outputs];
        for &s in sources {
            let cell = bank.get(s)?;
            c.iter_mut().for_each(|x| *x = 0.0);
            coeff(cell, &mut c);
            let w = self.source_weight(s);
            if c.iter().all(|x| *x == 0.0) {
                continue;
            }
            for (li, node) in cell.bbox.nodes().enumerate() {
                if cell.dist[li] >= SUPPORT_FRACTION * self.i0 {
                    continue;
                }
                let a = self.cutoff.value(self.slope() * cell.values[li]);
                if a == 0.0 {
                    continue;
                }
                let k = bbox.local(node).expect("union box");
                for (o, cv) in out.iter_mut().zip(&c) {
                    o.values[k] += w * cv * a;
                }
            }
        }
        Ok(out)
    }

    /// `f_p`, without the `i₀` scaling.
    pub fn embedding_function(&self, bank: &mut CellBank<'_>, p: Node) -> Result<L2Vector> {
        self.require_eval(p)?;
        let src = self.sources(bank, p)?;
        let mut v = self.assemble(bank, &src, 1, |cell, c| c[0] = self.factor(cell, p))?;
        Ok(v.pop().expect("one output"))
    }

    /// `F(p) = i₀^{1-3n/2} f_p`.
    pub fn embedding_map(&self, bank: &mut CellBank<'_>, p: Node) -> Result<L2Vector> {
        let mut f = self.embedding_function(bank, p)?;
        f.scale(self.scale());
        Ok(f)
    }

    /// First and (optionally) second coordinate derivatives of `F` at `p`.
    pub fn jet(&self, bank: &mut CellBank<'_>, p: Node, with_hessian: bool) -> Result<Jet> {
        self.require_eval(p)?;
        let n = self.n;
        let src = self.sources(bank, p)?;
        let scale = self.scale();
        let k = self.slope();
        let outputs = n + if with_hessian { packed_len(n) } else { 0 };
        let mut out = self.assemble(bank, &src, outputs, |cell, c| {
            let t = k * cell.value_at(p);
            let b1 = self.cutoff.d1(t);
            let b2 = self.cutoff.d2(t);
            if b1 == 0.0 && b2 == 0.0 {
                return;
            }
            let g = cell.grad_at(p);
            for a in 0..n {
                c[a] = scale * b1 * k * g[a];
            }
            if with_hessian {
                let hs = cell.hess_at(p);
                for a in 0..n {
                    for b in a..n {
                        c[n + packed_index(n, a, b)] = scale * (b2 * k * k * g[a] * g[b] + b1 * k * hs.a[a][b]);
                    }
                }
            }
        })?;
        let hessians = out.split_off(n);
        Ok(Jet { base: p, partials: out, hessians })
    }

    /// `d_v F(p)`.
    pub fn embedding_differential(&self, bank: &mut CellBank<'_>, p: Node, v: &[f64]) -> Result<L2Vector> {
        let jet = self.jet(bank, p, false)?;
        Ok(jet.directional(v))
    }

    /// `∇²_{v,w} F(p)` in coordinates.
    pub fn embedding_hessian(&self, bank: &mut CellBank<'_>, p: Node, v: &[f64], w: &[f64]) -> Result<L2Vector> {
        let jet = self.jet(bank, p, true)?;
        Ok(jet.hessian(v, w))
    }

    /// `g̃ = F* g_{L²}` at every point of `region`.
    pub fn pullback_metric(&self, bank: &mut CellBank<'_>, region: &[Node]) -> Result<PullbackField> {
        let metric = bank.metric();
        let n = self.n;
        let mut field = PullbackField { points: Vec::new(), gtilde: Vec::new(), ratio_lo: Vec::new(), ratio_hi: Vec::new() };
        for &p in region {
            let jet = self.jet(bank, p, false)?;
            let gt = jet.gram(self);
            let g = metric.at_node(p).ok_or(Error::NodeOutsideMask(p))?;
            let ev = gt.generalized_eigenvalues(&g).ok_or(Error::NotPositiveDefinite { coords: self.domain.coords(p) })?;
            if !(ev[0] > 0.0) {
                return Err(Error::NotPositiveDefinite { coords: self.domain.coords(p) });
            }
            field.points.push(p);
            field.gtilde.push(gt.to_packed());
            field.ratio_lo.push(ev[0]);
            field.ratio_hi.push(ev[n - 1]);
        }
        Ok(field)
    }
}

/// A field on a box of nodes, zero outside it, viewed as an element of
/// `L²(vol_g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Vector {
    pub bbox: BBox,
    pub values: Vec<f64>,
}

impl L2Vector {
    pub fn zeros(bbox: BBox) -> Self {
        Self { values: vec![0.0; bbox.len()], bbox }
    }

    pub fn at(&self, node: Node) -> f64 {
        self.bbox.local(node).map(|i| self.values[i]).unwrap_or(0.0)
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// Weighted sum over the common box in node order.
    pub fn dot(&self, other: &Self, domain: &ChartDomain, w: &VolumeWeights) -> f64 {
        let Some(bb) = self.bbox.intersect(&other.bbox) else { return 0.0 };
        let mut s = 0.0;
        for node in bb.nodes() {
            let a = self.values[self.bbox.local(node).expect("in box")];
            if a == 0.0 {
                continue;
            }
            let b = other.values[other.bbox.local(node).expect("in box")];
            if let Some(i) = domain.index(node) {
                s += a * b * w.get(i);
            }
        }
        s
    }

    /// `Σ c_k v_k` over the union of the boxes.
    pub fn combine(terms: &[(f64, &L2Vector)]) -> Self {
        let mut bb: Option<BBox> = None;
        for (_, v) in terms {
            bb = Some(match bb {
                Some(b) => b.union(&v.bbox),
                None => v.bbox,
            });
        }
        let mut out = Self::zeros(bb.unwrap_or(BBox::point([0, 0, 0])));
        for (c, v) in terms {
            if *c == 0.0 {
                continue;
            }
            for (li, node) in v.bbox.nodes().enumerate() {
                let k = out.bbox.local(node).expect("union box");
                out.values[k] += c * v.values[li];
            }
        }
        out
    }

    /// Largest coordinate distance (in nodes, max-norm) from `center` to a
    /// nonzero entry.
    pub fn support_reach(&self, center: Node) -> i32 {
        let mut r = 0;
        for (li, node) in self.bbox.nodes().enumerate() {
            if self.values[li] != 0.0 {
                for k in 0..3 {
                    r = r.max((node[k] - center[k]).abs());
                }
            }
        }
        r
    }
}

/// `∂_k F(p)` and packed `∂_k∂_l F(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub base: Node,
    pub partials: Vec<L2Vector>,
    pub hessians: Vec<L2Vector>,
}

impl Jet {
    pub fn dim(&self) -> usize {
        self.partials.len()
    }

    pub fn directional(&self, v: &[f64]) -> L2Vector {
        let terms: Vec<(f64, &L2Vector)> = v.iter().copied().zip(self.partials.iter()).collect();
        L2Vector::combine(&terms)
    }

    pub fn hessian(&self, v: &[f64], w: &[f64]) -> L2Vector {
        let n = self.dim();
        let mut terms = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let c = v[a] * w[b];
                if c != 0.0 {
                    terms.push((c, &self.hessians[packed_index(n, a, b)]));
                }
            }
        }
        L2Vector::combine(&terms)
    }

    pub fn gram(&self, kernel: &EmbeddingKernel) -> SmallMat {
        let n = self.dim();
        let mut g = SmallMat::zeros(n);
        for a in 0..n {
            for b in a..n {
                let v = kernel.inner(&self.partials[a], &self.partials[b]);
                g.a[a][b] = v;
                g.a[b][a] = v;
            }
        }
        g
    }
}

/// Pulled-back metric at a set of points and its sandwich against `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackField {
    pub points: Vec<Node>,
    pub gtilde: Vec<Vec<f64>>,
    /// Smallest generalised eigenvalue of `g̃` relative to `g`.
    pub ratio_lo: Vec<f64>,
    pub ratio_hi: Vec<f64>,
}

impl PullbackField {
    /// `max |log λ|` over all points and both extremes.
    pub fn max_log_ratio(&self) -> f64 {
        self.ratio_lo
            .iter()
            .chain(&self.ratio_hi)
            .map(|r| fmath::abs(fmath::ln(*r)))
            .fold(0.0, f64::max)
    }

    pub fn at(&self, p: Node) -> Option<&[f64]> {
        self.points.iter().position(|q| *q == p).map(|i| self.gtilde[i].as_slice())
    }
}

/// Relative difference of `g̃(p)` between the kernel's stride and stride 1.
pub fn stride_consistency(metric: &MetricField, kernel: &EmbeddingKernel, p: Node) -> Result<f64> {
    let full = EmbeddingKernel::new(metric, kernel.cutoff, kernel.i0, KernelOptions { stride: 1, ..kernel.opts })?;
    let mut bank = kernel.bank(metric)?;
    let a = kernel.pullback_metric(&mut bank, &[p])?;
    let b = full.pullback_metric(&mut bank, &[p])?;
    let mut diff: f64 = 0.0;
    let mut size: f64 = 0.0;
    for (x, y) in a.gtilde[0].iter().zip(&b.gtilde[0]) {
        diff = diff.max(fmath::abs(x - y));
        size = size.max(fmath::abs(*y));
    }
    Ok(diff / size)
}

/// Largest admissible stride: the configured one when it reproduces the
/// stride-1 metric at the evaluation point nearest the chart centre within
/// `tolerance`, otherwise 1. Returns the stride and the measured difference.
pub fn select_stride(
    metric: &MetricField,
    cutoff: CutoffProfile,
    i0: f64,
    opts: KernelOptions,
    tolerance: f64,
) -> Result<(usize, f64)> {
    if opts.stride <= 1 {
        return Ok((1, 0.0));
    }
    let kernel = EmbeddingKernel::new(metric, cutoff, i0, opts)?;
    let d = metric.domain();
    let p = *kernel
        .eval_region()
        .iter()
        .min_by(|a, b| {
            let da = d.coords(**a);
            let db = d.coords(**b);
            let ra = da[0] * da[0] + da[1] * da[1] + da[2] * da[2];
            let rb = db[0] * db[0] + db[1] * db[1] + db[2] * db[2];
            ra.total_cmp(&rb)
        })
        .expect("evaluation region is nonempty");
    let diff = stride_consistency(metric, &kernel, p)?;
    Ok((if diff <= tolerance { opts.stride } else { 1 }, diff))
}
