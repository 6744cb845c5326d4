//! Geodesic distances on the chart grid: Dijkstra on a `k`-neighbour lattice
//! graph with metric edge lengths, closed forms for the generators that
//! admit them, and straight-segment lengths for small balls.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::domain::{add, BBox, ChartDomain, Node};
use crate::error::{Error, Result};
use crate::fmath;
use crate::metric::{MetricField, MetricGenerator, PhiTerm};

/// How a distance field was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMethod {
    GraphSearch,
    AnalyticOverride,
    /// Metric length of the coordinate segment from the source.
    Segment,
}

/// Lattice neighbourhood used by the graph search: every primitive offset
/// with max-norm at most `radius` (radius 1 → 8, 2 → 16, 3 → 32 neighbours
/// in the plane).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceOptions {
    pub neighbor_radius: u8,
    /// Use closed forms whenever the generator admits one, or the
    /// coefficients are constant.
    pub analytic_override: bool,
    /// Without a closed form, bounded searches measure the straight
    /// coordinate segment instead of walking the graph. Graph paths carry a
    /// direction-dependent bias that does not shrink under refinement; the
    /// segment length is exact for constant metrics and off by a term
    /// quadratic in the ball radius otherwise.
    #[serde(default)]
    pub segments: bool,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            neighbor_radius: 3,
            analytic_override: true,
            segments: false,
        }
    }
}

impl DistanceOptions {
    pub fn graph(neighbor_radius: u8) -> Self {
        Self {
            neighbor_radius,
            analytic_override: false,
            segments: false,
        }
    }

    /// Settings for small-ball searches: closed forms, else segments.
    pub fn local() -> Self {
        Self {
            segments: true,
            ..Self::default()
        }
    }
}

/// Primitive lattice offsets with max-norm `≤ radius`.
pub fn neighbor_offsets(dim: usize, radius: u8) -> Vec<Node> {
    let r = radius.max(1) as i32;
    let zr = if dim == 3 { r } else { 0 };
    let mut out = Vec::new();
    for z in -zr..=zr {
        for y in -r..=r {
            for x in -r..=r {
                if x == 0 && y == 0 && z == 0 {
                    continue;
                }
                if gcd(gcd(x.unsigned_abs(), y.unsigned_abs()), z.unsigned_abs()) == 1 {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Geodesic distance from one source to every masked node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub source: Node,
    /// Indexed like the domain; `+∞` outside the mask.
    pub values: Vec<f64>,
    pub method: DistanceMethod,
}

impl DistanceField {
    pub fn at(&self, domain: &ChartDomain, node: Node) -> Option<f64> {
        domain.index(node).map(|i| self.values[i])
    }
}

/// Closed-form distance between two coordinate points, when the generator
/// admits one.
pub fn analytic_distance(gen: &MetricGenerator, dim: usize, x: &[f64; 3], y: &[f64; 3]) -> Option<f64> {
    let mut e2 = 0.0;
    for k in 0..dim {
        e2 += (x[k] - y[k]) * (x[k] - y[k]);
    }
    let e = fmath::sqrt(e2);
    match gen {
        MetricGenerator::Flat => Some(e),
        MetricGenerator::Conformal { terms } if gen.has_closed_form_distance() => {
            let c: f64 = terms
                .iter()
                .map(|t| match t {
                    PhiTerm::Constant { value } => *value,
                    _ => 0.0,
                })
                .sum();
            Some(fmath::exp(c) * e)
        }
        MetricGenerator::Sphere { rho } => {
            let r2 = rho * rho;
            let nx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            let ny = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
            let chord = 2.0 * r2 * e / fmath::sqrt((r2 + nx) * (r2 + ny));
            Some(2.0 * rho * fmath::asin((chord / (2.0 * rho)).min(1.0)))
        }
        _ => None,
    }
}

enum ClosedForm<'a> {
    Generator(MetricGenerator),
    /// Constant coefficients: `d(x, y)² = (x − y)ᵀ G (x − y)`.
    Uniform(&'a [f64]),
    Segment(&'a MetricField),
}

impl ClosedForm<'_> {
    fn distance(&self, dim: usize, x: &[f64; 3], y: &[f64; 3]) -> Option<f64> {
        match self {
            ClosedForm::Generator(gen) => analytic_distance(gen, dim, x, y),
            ClosedForm::Uniform(g) => {
                let mut s = 0.0;
                let mut idx = 0;
                for i in 0..dim {
                    for j in i..dim {
                        let w = if i == j { 1.0 } else { 2.0 };
                        s += w * g[idx] * (x[i] - y[i]) * (x[j] - y[j]);
                        idx += 1;
                    }
                }
                Some(fmath::sqrt(s))
            }
            ClosedForm::Segment(m) => Some(segment_length(m, x, y)),
        }
    }

    fn method(&self) -> DistanceMethod {
        match self {
            ClosedForm::Segment(_) => DistanceMethod::Segment,
            _ => DistanceMethod::AnalyticOverride,
        }
    }
}

/// `∫₀¹ √(eᵀ g(x + t e) e) dt` with `e = y − x`, two Gauss points per grid
/// step and bilinear coefficients.
pub fn segment_length(m: &MetricField, x: &[f64; 3], y: &[f64; 3]) -> f64 {
    let n = m.dim();
    let mut e = [0.0; 3];
    let mut e2 = 0.0;
    for k in 0..n {
        e[k] = y[k] - x[k];
        e2 += e[k] * e[k];
    }
    if e2 == 0.0 {
        return 0.0;
    }
    let panels = fmath::ceil(fmath::sqrt(e2) / m.domain().spacing()).max(1.0) as usize;
    let off = 0.5 / fmath::sqrt(3.0);
    let mut g = [0.0; 6];
    let mut total = 0.0;
    for p in 0..panels {
        for t in [0.5 - off, 0.5 + off] {
            let u = (p as f64 + t) / panels as f64;
            let mut z = [0.0; 3];
            for k in 0..n {
                z[k] = x[k] + u * e[k];
            }
            m.interpolate(&z, &mut g);
            let mut q = 0.0;
            let mut idx = 0;
            for i in 0..n {
                for j in i..n {
                    let w = if i == j { 1.0 } else { 2.0 };
                    q += w * g[idx] * e[i] * e[j];
                    idx += 1;
                }
            }
            total += fmath::sqrt(q.max(0.0));
        }
    }
    total * 0.5 / panels as f64
}

fn analytic_for<'a>(m: &'a MetricField, opts: &DistanceOptions) -> Option<ClosedForm<'a>> {
    if !opts.analytic_override {
        return None;
    }
    match m.generator().filter(|g| g.has_closed_form_distance()) {
        Some(g) => Some(ClosedForm::Generator(g.clone())),
        None => m.uniform().map(ClosedForm::Uniform),
    }
}

fn local_form<'a>(m: &'a MetricField, opts: &DistanceOptions) -> Option<ClosedForm<'a>> {
    analytic_for(m, opts).or_else(|| opts.segments.then_some(ClosedForm::Segment(m)))
}

/// Length of the lattice edge `node → node + offset` under the midpoint
/// (endpoint-averaged) metric.
#[inline]
fn edge_length(m: &MetricField, a: usize, b: usize, off: &Node, h: f64) -> f64 {
    let n = m.dim();
    let ga = m.packed(a);
    let gb = m.packed(b);
    let mut s = 0.0;
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let g = 0.5 * (ga[idx] + gb[idx]);
            let w = if i == j { 1.0 } else { 2.0 };
            s += w * g * off[i] as f64 * off[j] as f64;
            idx += 1;
        }
    }
    h * fmath::sqrt(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Item {
    d: f64,
    idx: usize,
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    // min-heap on distance, ties by index for determinism
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d).then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Shortest-path distance from `source` to all masked nodes.
pub fn geodesic_distance(m: &MetricField, source: Node, opts: &DistanceOptions) -> Result<DistanceField> {
    let d = m.domain();
    let src = match d.index(source) {
        Some(i) if d.mask()[i] => i,
        _ => return Err(Error::NodeOutsideMask(source)),
    };
    if let Some(gen) = analytic_for(m, opts) {
        let xs = d.coords(source);
        let values = (0..d.len())
            .map(|i| {
                if d.mask()[i] {
                    gen.distance(d.dim(), &xs, &d.coords(d.node_of(i))).unwrap_or(f64::INFINITY)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        return Ok(DistanceField {
            source,
            values,
            method: DistanceMethod::AnalyticOverride,
        });
    }
    let mut scratch = DijkstraScratch::new(d.len());
    scratch.run(m, src, f64::INFINITY, &neighbor_offsets(d.dim(), opts.neighbor_radius));
    let mut values = vec![f64::INFINITY; d.len()];
    for &i in &scratch.touched {
        values[i] = scratch.dist[i];
    }
    scratch.reset();
    let unreachable = d.masked_indices().filter(|&i| !values[i].is_finite()).count();
    if unreachable > 0 {
        return Err(Error::Unreachable { count: unreachable });
    }
    Ok(DistanceField {
        source,
        values,
        method: DistanceMethod::GraphSearch,
    })
}

/// Distance from every masked node to the chart boundary sphere.
///
/// Nodes next to the mask edge are seeded with their radial coordinate gap
/// measured in the local metric; the graph search then propagates inward.
pub fn boundary_distance(m: &MetricField, opts: &DistanceOptions) -> Vec<f64> {
    let d = m.domain();
    let dim = d.dim();
    let mut seeds = Vec::new();
    for i in d.masked_indices() {
        let node = d.node_of(i);
        let edge = (0..dim).any(|k| {
            let mut a = node;
            let mut b = node;
            a[k] += 1;
            b[k] -= 1;
            !d.is_masked(a) || !d.is_masked(b)
        });
        if !edge {
            continue;
        }
        let x = d.coords(node);
        let r = fmath::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        let g = m.at(i);
        let radial = if r > 0.0 {
            let u = [x[0] / r, x[1] / r, x[2] / r];
            fmath::sqrt(g.quad_form(&u[..dim]))
        } else {
            1.0
        };
        seeds.push((i, d.boundary_gap(node).max(0.0) * radial));
    }
    let mut scratch = DijkstraScratch::new(d.len());
    scratch.run_seeded(m, &seeds, f64::INFINITY, &neighbor_offsets(dim, opts.neighbor_radius));
    let mut out = vec![f64::INFINITY; d.len()];
    for &i in &scratch.touched {
        out[i] = scratch.dist[i];
    }
    out
}

/// Reusable Dijkstra buffers sized to the whole grid; only touched entries
/// are reset between runs.
#[derive(Debug, Clone)]
pub struct DijkstraScratch {
    dist: Vec<f64>,
    touched: Vec<usize>,
    heap: BinaryHeap<Item>,
}

impl DijkstraScratch {
    pub fn new(len: usize) -> Self {
        Self {
            dist: vec![f64::INFINITY; len],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn reset(&mut self) {
        for &i in &self.touched {
            self.dist[i] = f64::INFINITY;
        }
        self.touched.clear();
        self.heap.clear();
    }

    /// Settle every node whose distance is at most `settle_bound`.
    fn run(&mut self, m: &MetricField, src: usize, settle_bound: f64, offsets: &[Node]) {
        self.run_seeded(m, &[(src, 0.0)], settle_bound, offsets);
    }

    fn run_seeded(&mut self, m: &MetricField, seeds: &[(usize, f64)], settle_bound: f64, offsets: &[Node]) {
        let d = m.domain();
        let h = d.spacing();
        for &(src, d0) in seeds {
            if d0 < self.dist[src] {
                if !self.dist[src].is_finite() {
                    self.touched.push(src);
                }
                self.dist[src] = d0;
                self.heap.push(Item { d: d0, idx: src });
            }
        }
        while let Some(Item { d: du, idx: u }) = self.heap.pop() {
            if du > self.dist[u] {
                continue;
            }
            if du > settle_bound {
                break;
            }
            let nu = d.node_of(u);
            for off in offsets {
                let nv = add(nu, *off);
                let v = match d.index(nv) {
                    Some(v) if d.mask()[v] => v,
                    _ => continue,
                };
                let nd = du + edge_length(m, u, v, off, h);
                if nd < self.dist[v] {
                    if !self.dist[v].is_finite() {
                        self.touched.push(v);
                    }
                    self.dist[v] = nd;
                    self.heap.push(Item { d: nd, idx: v });
                }
            }
        }
    }
}

/// Distances from one source on a bounding box around it. Entries beyond
/// the explored region are `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDistances {
    pub source: Node,
    pub bbox: BBox,
    pub values: Vec<f64>,
    pub method: DistanceMethod,
}

impl LocalDistances {
    #[inline]
    pub fn at(&self, node: Node) -> f64 {
        self.bbox.local(node).map(|i| self.values[i]).unwrap_or(f64::INFINITY)
    }

    /// Nodes with distance strictly below `radius`, in box order.
    pub fn nodes_within(&self, radius: f64) -> impl Iterator<Item = Node> + '_ {
        self.bbox
            .nodes()
            .zip(self.values.iter())
            .filter(move |(_, d)| **d < radius)
            .map(|(n, _)| n)
    }
}

/// Distances from `source` to every node whose distance is at most
/// `settle_bound`; nodes reached but not settled keep their tentative value.
///
/// `touched_boundary` is set when the search hit an unmasked neighbour.
pub fn bounded_distances(
    m: &MetricField,
    source: Node,
    settle_bound: f64,
    opts: &DistanceOptions,
    scratch: &mut DijkstraScratch,
) -> Result<(LocalDistances, bool)> {
    let d = m.domain();
    let src = match d.index(source) {
        Some(i) if d.mask()[i] => i,
        _ => return Err(Error::NodeOutsideMask(source)),
    };
    let dim = d.dim();
    let mut hit_boundary = false;
    let method;
    if let Some(gen) = local_form(m, opts) {
        // flood fill over axis neighbours while inside the bound
        method = gen.method();
        let xs = d.coords(source);
        let mut stack = vec![src];
        scratch.dist[src] = 0.0;
        scratch.touched.push(src);
        while let Some(u) = stack.pop() {
            let nu = d.node_of(u);
            for k in 0..dim {
                for s in [-1, 1] {
                    let mut nv = nu;
                    nv[k] += s;
                    let v = match d.index(nv) {
                        Some(v) if d.mask()[v] => v,
                        _ => {
                            hit_boundary = true;
                            continue;
                        }
                    };
                    if scratch.dist[v].is_finite() {
                        continue;
                    }
                    let dv = gen.distance(dim, &xs, &d.coords(nv)).unwrap_or(f64::INFINITY);
                    scratch.dist[v] = dv;
                    scratch.touched.push(v);
                    if dv <= settle_bound {
                        stack.push(v);
                    }
                }
            }
        }
    } else {
        method = DistanceMethod::GraphSearch;
        let offsets = neighbor_offsets(dim, opts.neighbor_radius);
        scratch.run(m, src, settle_bound, &offsets);
        // any settled node with an unmasked axis neighbour means the ball
        // reaches the chart edge
        for &u in &scratch.touched {
            if scratch.dist[u] <= settle_bound {
                let nu = d.node_of(u);
                for k in 0..dim {
                    for s in [-1, 1] {
                        let mut nv = nu;
                        nv[k] += s;
                        if !d.is_masked(nv) {
                            hit_boundary = true;
                        }
                    }
                }
            }
        }
    }
    let mut bbox = BBox::point(source);
    for &i in &scratch.touched {
        bbox.include(d.node_of(i));
    }
    let mut values = vec![f64::INFINITY; bbox.len()];
    for &i in &scratch.touched {
        let li = bbox.local(d.node_of(i)).expect("inside bbox");
        values[li] = scratch.dist[i];
    }
    scratch.reset();
    Ok((
        LocalDistances {
            source,
            bbox,
            values,
            method,
        },
        hit_boundary,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_chart_domain;
    use crate::metric::{metric_eigen_bounds, sample_metric};

    #[test]
    fn boundary_distance_flat_and_scaled() {
        let d = build_chart_domain(2, 1.0, 80).unwrap();
        let m = sample_metric(&MetricGenerator::Flat, &d).unwrap();
        let b = boundary_distance(&m, &DistanceOptions::default());
        let i = d.index([0, 0, 0]).unwrap();
        assert!((b[i] - 1.0).abs() < 0.01, "{}", b[i]);
        let j = d.index([20, 0, 0]).unwrap();
        assert!((b[j] - 0.5).abs() < 0.01);
        let m2 = m.scaled(4.0);
        let b2 = boundary_distance(&m2, &DistanceOptions::default());
        assert!((b2[i] - 2.0 * b[i]).abs() < 1e-12);
    }

    #[test]
    fn constant_samples_use_the_quadratic_form() {
        let d = build_chart_domain(2, 1.0, 40).unwrap();
        let coeffs = (0..d.len()).flat_map(|_| [2.0, 0.5, 1.0]).collect();
        let m = MetricField::from_samples(d.clone(), coeffs).unwrap();
        let f = geodesic_distance(&m, [0, 0, 0], &DistanceOptions::default()).unwrap();
        assert_eq!(f.method, DistanceMethod::AnalyticOverride);
        // (3, -4) steps of 1/20: 2·0.15² + 2·0.5·0.15·(−0.2) + 0.2²
        let want = (2.0f64 * 0.0225 - 0.03 + 0.04).sqrt();
        assert!((f.at(&d, [3, -4, 0]).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn segment_length_along_a_symmetry_axis() {
        // g = (1 + x) δ: the x axis is a geodesic, of length ∫ √(1 + x) dx
        let d = build_chart_domain(2, 0.5, 40).unwrap();
        let coeffs = (0..d.len())
            .flat_map(|i| {
                let x = d.coords(d.node_of(i))[0];
                [1.0 + x, 0.0, 1.0 + x]
            })
            .collect();
        let m = MetricField::from_samples(d.clone(), coeffs).unwrap();
        let (a, b) = (-0.3f64, 0.4f64);
        let want = 2.0 / 3.0 * ((1.0 + b).powf(1.5) - (1.0 + a).powf(1.5));
        let got = segment_length(&m, &[a, 0.0, 0.0], &[b, 0.0, 0.0]);
        assert!((got - want).abs() < 1e-6, "{got} {want}");
        let four = m.scaled(4.0);
        let got4 = segment_length(&four, &[a, 0.0, 0.0], &[b, 0.0, 0.0]);
        assert!((got4 - 2.0 * got).abs() < 1e-14);

        let mut scratch = DijkstraScratch::new(d.len());
        let (local, hit) = bounded_distances(&m, [0, 0, 0], 0.1, &DistanceOptions::local(), &mut scratch).unwrap();
        assert!(!hit);
        assert_eq!(local.method, DistanceMethod::Segment);
        let li = local.bbox.local([3, 0, 0]).unwrap();
        let want = 2.0 / 3.0 * (1.075f64.powf(1.5) - 1.0);
        assert!((local.values[li] - want).abs() < 1e-6);
    }

    #[test]
    fn interpolation_reproduces_bilinear_fields() {
        let d = build_chart_domain(2, 0.5, 32).unwrap();
        let f = |x: [f64; 3]| [2.0 + x[0] - 0.5 * x[1] + 0.3 * x[0] * x[1], 0.1 * x[0], 1.5 + x[1]];
        let coeffs = (0..d.len()).flat_map(|i| f(d.coords(d.node_of(i)))).collect();
        let m = MetricField::from_samples(d, coeffs).unwrap();
        let mut out = [0.0; 6];
        let z = [0.123, -0.271, 0.0];
        m.interpolate(&z, &mut out);
        let want = f(z);
        for k in 0..3 {
            assert!((out[k] - want[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbourhood_sizes() {
        assert_eq!(neighbor_offsets(2, 1).len(), 8);
        assert_eq!(neighbor_offsets(2, 2).len(), 16);
        assert_eq!(neighbor_offsets(2, 3).len(), 32);
        assert_eq!(neighbor_offsets(3, 1).len(), 26);
    }

    #[test]
    fn flat_graph_distance_within_one_percent() {
        // h = 1/40 puts (0.3, 0.4) on the lattice at (12, 16)
        let d = build_chart_domain(2, 1.0, 80).unwrap();
        let m = sample_metric(&MetricGenerator::Flat, &d).unwrap();
        let f = geodesic_distance(&m, [0, 0, 0], &DistanceOptions::graph(3)).unwrap();
        assert_eq!(f.method, DistanceMethod::GraphSearch);
        let v = f.at(&d, [12, 16, 0]).unwrap();
        assert!((v - 0.5).abs() / 0.5 <= 0.01, "{v}");
        let exact = geodesic_distance(&m, [0, 0, 0], &DistanceOptions::default()).unwrap();
        assert_eq!(exact.method, DistanceMethod::AnalyticOverride);
        assert!((exact.at(&d, [12, 16, 0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn doubled_conformal_doubles_distance() {
        let d = build_chart_domain(2, 1.0, 40).unwrap();
        let gen = MetricGenerator::Conformal { terms: vec![PhiTerm::Constant { value: 2f64.ln() }] };
        let m = sample_metric(&gen, &d).unwrap();
        let flat = sample_metric(&MetricGenerator::Flat, &d).unwrap();
        let a = geodesic_distance(&m, [2, -3, 0], &DistanceOptions::graph(2)).unwrap();
        let b = geodesic_distance(&flat, [2, -3, 0], &DistanceOptions::graph(2)).unwrap();
        for i in d.masked_indices() {
            assert!((a.values[i] - 2.0 * b.values[i]).abs() <= 1e-12 * (1.0 + b.values[i]));
        }
        let o = geodesic_distance(&m, [0, 0, 0], &DistanceOptions::default()).unwrap();
        assert!((o.at(&d, [8, 6, 0]).unwrap() - 2.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn sphere_override_matches_radial_integral() {
        let d = build_chart_domain(2, 1.0, 64).unwrap();
        let m = sample_metric(&MetricGenerator::Sphere { rho: 1.0 }, &d).unwrap();
        let f = geodesic_distance(&m, [0, 0, 0], &DistanceOptions::default()).unwrap();
        let v = f.at(&d, [16, 0, 0]).unwrap();
        assert!((v - 2.0 * 0.5f64.atan()).abs() < 1e-12);
        assert!((v - 0.9273).abs() < 1e-4);
    }

    #[test]
    fn graph_distance_sandwiched_by_euclidean() {
        let d = build_chart_domain(2, 1.0, 48).unwrap();
        let m = sample_metric(&MetricGenerator::Sphere { rho: 1.0 }, &d).unwrap();
        let q = metric_eigen_bounds(&m);
        let f = geodesic_distance(&m, [5, -7, 0], &DistanceOptions::graph(2)).unwrap();
        let xs = d.coords([5, -7, 0]);
        for i in d.masked_indices() {
            let x = d.coords(d.node_of(i));
            let e = ((x[0] - xs[0]).powi(2) + (x[1] - xs[1]).powi(2)).sqrt();
            assert!(f.values[i] >= (-q).exp() * e - 1e-12);
            assert!(f.values[i] <= q.exp() * e + 1e-12);
        }
    }

    #[test]
    fn source_outside_mask_is_an_error() {
        let d = build_chart_domain(2, 1.0, 32).unwrap();
        let m = sample_metric(&MetricGenerator::Flat, &d).unwrap();
        assert!(matches!(
            geodesic_distance(&m, [16, 16, 0], &DistanceOptions::default()),
            Err(Error::NodeOutsideMask(_))
        ));
    }

    #[test]
    fn bounded_search_agrees_with_full_search() {
        let d = build_chart_domain(2, 1.0, 64).unwrap();
        let gen = MetricGenerator::Conformal {
            terms: vec![PhiTerm::Gaussian { amplitude: 0.3, center: [0.1, 0.0, 0.0], width: 0.2 }],
        };
        let m = sample_metric(&gen, &d).unwrap();
        let opts = DistanceOptions::default();
        let full = geodesic_distance(&m, [3, 2, 0], &opts).unwrap();
        let mut scratch = DijkstraScratch::new(d.len());
        let (local, hit) = bounded_distances(&m, [3, 2, 0], 0.2, &opts, &mut scratch).unwrap();
        assert!(!hit);
        for n in local.bbox.nodes() {
            let v = local.at(n);
            if v <= 0.2 {
                assert_eq!(v, full.at(&d, n).unwrap());
            }
        }
    }
}
