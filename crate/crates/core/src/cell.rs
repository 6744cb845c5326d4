//! The canonical cell problem `Δ_g h = -1` on a geodesic ball `B_g(s, i₀)`
//! with `h = 0` on and outside the ball boundary.
//!
//! The operator is assembled in divergence form `-∂_k(A^{kl} ∂_l h) = √det g`
//! with `A = √det g · g⁻¹` taken at half-way points. Edges that cross the
//! ball boundary use the symmetric ghost-value treatment: the boundary is
//! placed at the fraction `θ` of the edge where the interpolated distance
//! reaches `i₀`, and the edge flux becomes `a · u / (θ h²)`. This keeps the
//! matrix symmetric positive definite and the solution second-order
//! accurate away from the boundary.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::distance::{bounded_distances, DijkstraScratch, DistanceOptions, LocalDistances};
use crate::domain::{BBox, Node};
use crate::error::{invalid, Error, Result};
use crate::fmath;
use crate::linalg::{packed_index, packed_len, SmallMat};
use crate::metric::{eigen_range, MetricField};

/// `R = 10/11`, the interior fraction on which estimates are reported.
pub const DEFAULT_INTERIOR_FRACTION: f64 = 10.0 / 11.0;

/// Nodes closer than this fraction of `i₀` to the ball boundary count as
/// boundary nodes, so that lattice points lying exactly on the sphere are
/// classified the same way at every centre.
const BOUNDARY_SNAP: f64 = 1e-9;

/// Smallest admissible `i₀ / h`.
pub const MIN_STEPS_PER_RADIUS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub interior_fraction: f64,
    pub distance: DistanceOptions,
    /// Relative residual required from the linear solve.
    pub tolerance: f64,
    /// Lower clamp for the boundary fraction `θ`.
    pub min_theta: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            interior_fraction: DEFAULT_INTERIOR_FRACTION,
            distance: DistanceOptions::local(),
            tolerance: 1e-10,
            min_theta: 1e-2,
        }
    }
}

/// Solution of the cell problem on one geodesic ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub center: Node,
    pub i0: f64,
    pub interior_fraction: f64,
    pub spacing: f64,
    pub dim: usize,
    /// Box holding the ball, its first ring and all distances computed.
    pub bbox: BBox,
    /// `d_g(s, ·)` over `bbox` (`+∞` where unexplored).
    pub dist: Vec<f64>,
    /// `h_s` over `bbox`; zero outside the ball.
    pub values: Vec<f64>,
    /// Nodes with `d_g(s, ·) ≤ R·i₀` whose difference stencil lies in the box.
    pub interior: Vec<Node>,
    pub unknowns: usize,
    pub iterations: usize,
    pub residual: f64,
}

impl CellSolution {
    #[inline]
    pub fn value_at(&self, node: Node) -> f64 {
        self.bbox.local(node).map(|i| self.values[i]).unwrap_or(0.0)
    }

    #[inline]
    pub fn dist_at(&self, node: Node) -> f64 {
        self.bbox.local(node).map(|i| self.dist[i]).unwrap_or(f64::INFINITY)
    }

    pub fn in_ball(&self, node: Node) -> bool {
        self.dist_at(node) < self.i0 * (1.0 - BOUNDARY_SNAP)
    }

    /// Central-difference coordinate gradient at any node.
    pub fn grad_at(&self, node: Node) -> [f64; 3] {
        let h = self.spacing;
        let mut g = [0.0; 3];
        for (k, gk) in g.iter_mut().enumerate().take(self.dim) {
            let mut a = node;
            let mut b = node;
            a[k] += 1;
            b[k] -= 1;
            *gk = (self.value_at(a) - self.value_at(b)) / (2.0 * h);
        }
        g
    }

    /// Central-difference coordinate Hessian at any node.
    pub fn hess_at(&self, node: Node) -> SmallMat {
        let h = self.spacing;
        let n = self.dim;
        let u0 = self.value_at(node);
        let mut m = SmallMat::zeros(n);
        for k in 0..n {
            let mut a = node;
            let mut b = node;
            a[k] += 1;
            b[k] -= 1;
            m.a[k][k] = (self.value_at(a) - 2.0 * u0 + self.value_at(b)) / (h * h);
            for l in k + 1..n {
                let at = |sk: i32, sl: i32| {
                    let mut p = node;
                    p[k] += sk;
                    p[l] += sl;
                    self.value_at(p)
                };
                let v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
                m.a[k][l] = v;
                m.a[l][k] = v;
            }
        }
        m
    }

    /// Largest value and the node attaining it.
    pub fn max_value(&self) -> (f64, Node) {
        let mut best = (f64::NEG_INFINITY, self.center);
        for (i, v) in self.values.iter().enumerate() {
            if *v > best.0 {
                best = (*v, self.bbox.node_at(i));
            }
        }
        best
    }
}

/// Reusable solver for many cells of one metric at one `i₀`.
#[derive(Debug, Clone)]
pub struct CellSolver<'m> {
    metric: &'m MetricField,
    i0: f64,
    opts: CellOptions,
    slack: f64,
    /// `√det g · g⁻¹` per node, packed.
    flux: Vec<f64>,
    sqrt_det: Vec<f64>,
    scratch: DijkstraScratch,
    /// For constant-coefficient metrics every cell is a translate of the
    /// one at the origin.
    constant: bool,
    template: Option<CellSolution>,
}

impl<'m> CellSolver<'m> {
    pub fn new(metric: &'m MetricField, i0: f64, opts: CellOptions) -> Result<Self> {
        let d = metric.domain();
        if !(i0 > 0.0) || !i0.is_finite() {
            return Err(invalid("i0", "must be positive"));
        }
        if i0 < MIN_STEPS_PER_RADIUS * d.spacing() * (1.0 - 1e-12) {
            return Err(invalid(
                "i0",
                format!("i0 = {i0} is below {MIN_STEPS_PER_RADIUS} grid steps ({})", d.spacing()),
            ));
        }
        let n = d.dim();
        let m = packed_len(n);
        let mut flux = vec![0.0; d.len() * m];
        let mut sqrt_det = vec![0.0; d.len()];
        for i in d.masked_indices() {
            let g = metric.at(i);
            let sd = fmath::sqrt(g.det());
            let inv = g.inverse().ok_or(Error::NotPositiveDefinite {
                coords: d.coords(d.node_of(i)),
            })?;
            sqrt_det[i] = sd;
            for a in 0..n {
                for b in a..n {
                    flux[i * m + packed_index(n, a, b)] = sd * inv.a[a][b];
                }
            }
        }
        let (_, lmax) = eigen_range(metric);
        let slack = 1.5 * d.spacing() * fmath::sqrt(lmax.max(1e-300));
        let mut masked = d.masked_indices();
        let constant = match masked.next() {
            Some(first) => {
                let g0 = metric.packed(first);
                masked.all(|i| metric.packed(i) == g0)
            }
            None => false,
        };
        Ok(Self {
            metric,
            i0,
            opts,
            slack,
            flux,
            sqrt_det,
            scratch: DijkstraScratch::new(d.len()),
            constant,
            template: None,
        })
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }

    pub fn metric(&self) -> &'m MetricField {
        self.metric
    }

    pub fn options(&self) -> &CellOptions {
        &self.opts
    }

    /// Bounded distances from `center` out to `radius` (plus one ring).
    pub fn local_distances(&mut self, center: Node, radius: f64) -> Result<(LocalDistances, bool)> {
        bounded_distances(self.metric, center, radius + self.slack, &self.opts.distance, &mut self.scratch)
    }

    pub fn solve(&mut self, center: Node) -> Result<CellSolution> {
        if self.constant {
            if self.template.is_none() {
                self.template = Some(self.solve_direct([0, 0, 0])?);
            }
            let t = self.template.as_ref().expect("template");
            return self.translate(t, center);
        }
        self.solve_direct(center)
    }

    /// Move a solution to `center`. Only valid when the metric samples around
    /// the new centre equal those around the old one (constant metrics,
    /// translates of a periodic lattice); the ball and its first ring must be
    /// masked.
    pub fn translate(&self, t: &CellSolution, center: Node) -> Result<CellSolution> {
        let d = self.metric.domain();
        let n = d.dim();
        let by = [center[0] - t.center[0], center[1] - t.center[1], center[2] - t.center[2]];
        let shift = |x: Node| [x[0] + by[0], x[1] + by[1], x[2] + by[2]];
        let reach = self.i0 + self.slack;
        for (li, dv) in t.dist.iter().enumerate() {
            if *dv <= reach {
                let x = shift(t.bbox.node_at(li));
                if !d.is_masked(x) {
                    return Err(Error::BallTouchesBoundary { center });
                }
                for k in 0..n {
                    for sgn in [-1, 1] {
                        let mut y = x;
                        y[k] += sgn;
                        if !d.is_masked(y) {
                            return Err(Error::BallTouchesBoundary { center });
                        }
                    }
                }
            }
        }
        let mut c = t.clone();
        c.center = center;
        c.bbox = BBox { lo: shift(t.bbox.lo), hi: shift(t.bbox.hi) };
        c.interior.iter_mut().for_each(|x| *x = shift(*x));
        Ok(c)
    }

    fn solve_direct(&mut self, center: Node) -> Result<CellSolution> {
        let d = self.metric.domain();
        let n = d.dim();
        let h = d.spacing();
        let i0 = self.i0;
        let (local, hit) = self.local_distances(center, i0)?;
        if hit {
            return Err(Error::BallTouchesBoundary { center });
        }
        let bbox = local.bbox.grow(2, n);
        let mut dist = vec![f64::INFINITY; bbox.len()];
        for (li, node) in local.bbox.nodes().enumerate() {
            dist[bbox.local(node).expect("grown box")] = local.values[li];
        }

        // unknowns: nodes strictly inside the ball
        let mut unknown_of = vec![usize::MAX; bbox.len()];
        let mut nodes = Vec::new();
        for (li, dv) in dist.iter().enumerate() {
            if *dv < i0 * (1.0 - BOUNDARY_SNAP) {
                unknown_of[li] = nodes.len();
                nodes.push(bbox.node_at(li));
            }
        }
        if nodes.is_empty() {
            return Err(Error::SolverFailure(format!("empty ball at {center:?}")));
        }

        let pl = packed_len(n);
        let flux = |node: Node, a: usize, b: usize| -> f64 {
            let gi = d.index(node).expect("masked");
            self.flux[gi * pl + packed_index(n, a, b)]
        };
        let h2 = h * h;
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(nodes.len());
        let mut rhs = Vec::with_capacity(nodes.len());
        for &x in &nodes {
            let lx = bbox.local(x).expect("in box");
            let dx = dist[lx];
            let mut diag = 0.0;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(9);
            for k in 0..n {
                for s in [-1i32, 1] {
                    let mut y = x;
                    y[k] += s;
                    let a = 0.5 * (flux(x, k, k) + flux(y, k, k));
                    let ly = bbox.local(y).expect("ring inside box");
                    match unknown_of[ly] {
                        usize::MAX => {
                            let dy = dist[ly];
                            let theta = if dy.is_finite() && dy > dx {
                                ((i0 - dx) / (dy - dx)).clamp(self.opts.min_theta, 1.0)
                            } else {
                                1.0
                            };
                            diag += a / (theta * h2);
                        }
                        j => {
                            diag += a / h2;
                            row.push((j, -a / h2));
                        }
                    }
                }
            }
            // mixed terms, Dirichlet zero outside the ball
            for k in 0..n {
                for l in k + 1..n {
                    let at = |sk: i32, sl: i32| {
                        let mut p = x;
                        p[k] += sk;
                        p[l] += sl;
                        p
                    };
                    let c = |p: Node| flux(p, k, l) / (4.0 * h2);
                    let entries = [
                        (at(1, 1), -c(at(1, 0)) - c(at(0, 1))),
                        (at(1, -1), c(at(1, 0)) + c(at(0, -1))),
                        (at(-1, 1), c(at(-1, 0)) + c(at(0, 1))),
                        (at(-1, -1), -c(at(-1, 0)) - c(at(0, -1))),
                    ];
                    for (p, v) in entries {
                        if v == 0.0 {
                            continue;
                        }
                        if let Some(lp) = bbox.local(p) {
                            if unknown_of[lp] != usize::MAX {
                                row.push((unknown_of[lp], v));
                            }
                        }
                    }
                }
            }
            row.push((rows.len(), diag));
            rows.push(row);
            rhs.push(self.sqrt_det[d.index(x).expect("masked")]);
        }

        let (sol, iterations, residual) = pcg(&rows, &rhs, self.opts.tolerance)?;
        let mut values = vec![0.0; bbox.len()];
        for (j, x) in nodes.iter().enumerate() {
            values[bbox.local(*x).expect("in box")] = sol[j];
        }
        let mut cell = CellSolution {
            center,
            i0,
            interior_fraction: self.opts.interior_fraction,
            spacing: h,
            dim: n,
            bbox,
            dist,
            values,
            interior: Vec::new(),
            unknowns: nodes.len(),
            iterations,
            residual,
        };
        let rlim = self.opts.interior_fraction * i0;
        let inner = bbox.grow(-1, n);
        for x in nodes {
            if cell.dist_at(x) <= rlim && inner.contains(x) {
                cell.interior.push(x);
            }
        }
        Ok(cell)
    }
}

/// Jacobi-preconditioned conjugate gradients on a row-list sparse matrix.
fn pcg(rows: &[Vec<(usize, f64)>], b: &[f64], tol: f64) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        for (i, row) in rows.iter().enumerate() {
            let mut s = 0.0;
            for &(j, v) in row {
                s += v * x[j];
            }
            out[i] = s;
        }
    };
    let diag: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().filter(|(j, _)| *j == i).map(|(_, v)| *v).sum())
        .collect();
    if diag.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::SolverFailure("non-positive diagonal".into()));
    }
    let bnorm = fmath::sqrt(b.iter().map(|v| v * v).sum());
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 20 * n + 100;
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverFailure("operator is not positive definite".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rnorm = fmath::sqrt(r.iter().map(|v| v * v).sum());
        if rnorm <= tol * bnorm {
            // report the true residual
            apply(&x, &mut ap);
            let true_res = fmath::sqrt(b.iter().zip(&ap).map(|(b, a)| (b - a) * (b - a)).sum()) / bnorm;
            if true_res <= tol * 10.0 {
                return Ok((x, it + 1, true_res));
            }
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure(format!("no convergence after {max_iter} iterations")))
}

/// Solve one cell.
pub fn solve_cell(m: &MetricField, s: Node, i0: f64, opts: &CellOptions) -> Result<CellSolution> {
    CellSolver::new(m, i0, *opts)?.solve(s)
}

/// Closed-form flat solution `(i₀² - |p - s|²)/(2n)`, clamped to zero
/// outside the ball.
pub fn euclidean_cell_oracle(s: &[f64], i0: f64, p: &[f64], n: usize) -> f64 {
    let mut d2 = 0.0;
    for k in 0..n {
        d2 += (p[k] - s[k]) * (p[k] - s[k]);
    }
    ((i0 * i0 - d2) / (2.0 * n as f64)).max(0.0)
}

/// Deviation of a cell solution from the flat closed form over the
/// interior region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDeviation {
    /// `max |h - h̄| / i₀²`.
    pub eps_value: f64,
    /// `max |∂h - ∂h̄| / i₀`.
    pub eps_grad: f64,
    /// `max |∂²h|` over Hessian entries.
    pub hess_bound: f64,
    /// `max |∂h| / i₀`.
    pub grad_bound: f64,
    /// `max |h - h̄| / max h̄`, i.e. `2n · eps_value`.
    pub rel_value_error: f64,
    pub points: usize,
}

/// Coordinates in which the flat comparison is made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleFrame {
    /// Chart coordinates as given.
    Chart,
    /// Coordinates normalised by the metric at the centre, i.e. distances
    /// measured with the frozen tensor `g(s)`.
    FrozenAtCenter,
}

/// Compare a cell against `h̄_s` on the region `|p - s| ≤ R·i₀`, distances in
/// the requested frame.
pub fn cell_deviation_report(sol: &CellSolution, metric: &MetricField, frame: OracleFrame) -> CellDeviation {
    let d = metric.domain();
    let n = sol.dim;
    let i0 = sol.i0;
    let g0 = match frame {
        OracleFrame::Chart => SmallMat::identity(n),
        OracleFrame::FrozenAtCenter => metric.at_node(sol.center).unwrap_or(SmallMat::identity(n)),
    };
    let xs = d.coords(sol.center);
    let rlim = sol.interior_fraction * i0;
    let inner = sol.bbox.grow(-1, n);
    let mut dev = CellDeviation {
        eps_value: 0.0,
        eps_grad: 0.0,
        hess_bound: 0.0,
        grad_bound: 0.0,
        rel_value_error: 0.0,
        points: 0,
    };
    for node in sol.bbox.nodes() {
        if !inner.contains(node) {
            continue;
        }
        let x = d.coords(node);
        let mut v = [0.0; 3];
        for k in 0..n {
            v[k] = x[k] - xs[k];
        }
        let d2 = g0.quad_form(&v[..n]);
        if d2 > rlim * rlim {
            continue;
        }
        dev.points += 1;
        let oracle = ((i0 * i0 - d2) / (2.0 * n as f64)).max(0.0);
        let h = sol.value_at(node);
        dev.eps_value = dev.eps_value.max(fmath::abs(h - oracle) / (i0 * i0));
        // ∂h̄ = -(g0 v)/n
        let grad = sol.grad_at(node);
        let mut gerr = 0.0;
        let mut gnorm = 0.0;
        for k in 0..n {
            let mut gv = 0.0;
            for l in 0..n {
                gv += g0.a[k][l] * v[l];
            }
            let e = grad[k] + gv / n as f64;
            gerr += e * e;
            gnorm += grad[k] * grad[k];
        }
        dev.eps_grad = dev.eps_grad.max(fmath::sqrt(gerr) / i0);
        dev.grad_bound = dev.grad_bound.max(fmath::sqrt(gnorm) / i0);
        let hs = sol.hess_at(node);
        for k in 0..n {
            for l in 0..n {
                dev.hess_bound = dev.hess_bound.max(fmath::abs(hs.a[k][l]));
            }
        }
    }
    dev.rel_value_error = 2.0 * n as f64 * dev.eps_value;
    dev
}

/// Memo of cell solutions for one `(metric, i₀)` pair, keyed by centre.
#[derive(Debug, Clone)]
pub struct CellBank<'m> {
    solver: CellSolver<'m>,
    key: (u64, u64),
    cells: BTreeMap<usize, core::result::Result<CellSolution, Error>>,
}

impl<'m> CellBank<'m> {
    pub fn new(metric: &'m MetricField, i0: f64, opts: CellOptions) -> Result<Self> {
        Ok(Self {
            key: (metric.fingerprint(), i0.to_bits()),
            solver: CellSolver::new(metric, i0, opts)?,
            cells: BTreeMap::new(),
        })
    }

    /// `(metric fingerprint, i₀ bits)`.
    pub fn key(&self) -> (u64, u64) {
        self.key
    }

    pub fn i0(&self) -> f64 {
        self.solver.i0()
    }

    pub fn metric(&self) -> &'m MetricField {
        self.solver.metric()
    }

    pub fn solver_mut(&mut self) -> &mut CellSolver<'m> {
        &mut self.solver
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Solve every centre not yet cached.
    pub fn ensure(&mut self, centers: &[Node]) {
        let d = self.solver.metric().domain();
        for &s in centers {
            let Some(idx) = d.index(s) else { continue };
            if !self.cells.contains_key(&idx) {
                let r = self.solver.solve(s);
                self.cells.insert(idx, r);
            }
        }
    }

    /// Cached cell; `ensure` must have been called for `s`.
    pub fn get(&self, s: Node) -> Result<&CellSolution> {
        let d = self.solver.metric().domain();
        let idx = d.index(s).ok_or(Error::NodeOutsideMask(s))?;
        match self.cells.get(&idx) {
            Some(Ok(c)) => Ok(c),
            Some(Err(e)) => Err(Error::CellUnsolvable {
                center: s,
                reason: format!("{e}"),
            }),
            None => Err(Error::CellUnsolvable {
                center: s,
                reason: "not solved".into(),
            }),
        }
    }

    /// Cache a translate of `sol` at `s` unless `s` is already cached;
    /// see [`CellSolver::translate`] for when this is valid.
    pub fn adopt(&mut self, sol: &CellSolution, s: Node) -> bool {
        let d = self.solver.metric().domain();
        let Some(idx) = d.index(s) else { return false };
        if self.cells.contains_key(&idx) {
            return false;
        }
        match self.solver.translate(sol, s) {
            Ok(c) => {
                self.cells.insert(idx, Ok(c));
                true
            }
            Err(_) => false,
        }
    }

    /// Successfully solved cells in centre order.
    pub fn solved(&self) -> impl Iterator<Item = &CellSolution> + '_ {
        self.cells.values().filter_map(|c| c.as_ref().ok())
    }

    pub fn solve_one(&mut self, s: Node) -> Result<&CellSolution> {
        self.ensure(&[s]);
        self.get(s)
    }
}
