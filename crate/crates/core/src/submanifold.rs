//! Extrinsic geometry of the image `F(Ω₁) ⊂ L²`.
//!
//! `P(p)` is the orthogonal projection onto the tangent space spanned by
//! `∂_k F(p)`. Its derivative along the submanifold is taken by central
//! differences in the base point. Sectional curvature is then read off in
//! three ways: the projector commutator `⟨[d_u P, d_v P] v̂, û⟩`, the Gauss
//! equation with `II = (1 - P) ∇² F`, and the Brioschi formula applied to
//! the sampled pull-back metric.
//!
//! The coordinate Hessian differs from the covariant one by Christoffel
//! terms along `∂_k F`, which `1 - P` removes, so `II` does not depend on
//! that choice.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::cell::CellBank;
use crate::domain::{add, Node};
use crate::embedding::{EmbeddingKernel, Jet, L2Vector};
use crate::error::{Error, Result};
use crate::fmath;
use crate::gauss::brioschi_stencil;
use crate::linalg::{sym_eigen_dense, SmallMat};

/// Tangent space of the image at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub base: Node,
    pub basis: Vec<L2Vector>,
    pub gram: SmallMat,
    inverse: SmallMat,
}

impl TangentFrame {
    pub fn from_jet(kernel: &EmbeddingKernel, jet: &Jet) -> Result<Self> {
        let gram = jet.gram(kernel);
        let ev = gram.sym_eigenvalues();
        let n = gram.n;
        if !(ev[0] > 1e-12 * ev[n - 1].abs()) {
            return Err(Error::DegenerateFrame);
        }
        let inverse = gram.inverse().ok_or(Error::DegenerateFrame)?;
        Ok(Self { base: jet.base, basis: jet.partials.clone(), gram, inverse })
    }

    pub fn at(kernel: &EmbeddingKernel, bank: &mut CellBank<'_>, p: Node) -> Result<Self> {
        Self::from_jet(kernel, &kernel.jet(bank, p, false)?)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coordinates `c` with `P u = Σ c_k ∂_k F`.
    pub fn coefficients(&self, kernel: &EmbeddingKernel, u: &L2Vector) -> Vec<f64> {
        let n = self.dim();
        let rhs: Vec<f64> = self.basis.iter().map(|b| kernel.inner(b, u)).collect();
        (0..n).map(|i| (0..n).map(|j| self.inverse.a[i][j] * rhs[j]).sum()).collect()
    }

    pub fn project(&self, kernel: &EmbeddingKernel, u: &L2Vector) -> L2Vector {
        let c = self.coefficients(kernel, u);
        let terms: Vec<(f64, &L2Vector)> = c.into_iter().zip(self.basis.iter()).collect();
        L2Vector::combine(&terms)
    }

    /// `(1 - P) u`.
    pub fn normal_part(&self, kernel: &EmbeddingKernel, u: &L2Vector) -> L2Vector {
        let t = self.project(kernel, u);
        L2Vector::combine(&[(1.0, u), (-1.0, &t)])
    }
}

/// Orthogonal projection of `u` onto the tangent space of `frame`.
pub fn tangent_projection(kernel: &EmbeddingKernel, frame: &TangentFrame, u: &L2Vector) -> L2Vector {
    frame.project(kernel, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvatureOptions {
    /// Base-point step, in grid nodes, of the difference stencil.
    pub fd_unit: i32,
    /// Order of the central difference: 2, 4 or 6, using `1`, `2` or `3`
    /// steps on each side.
    pub fd_order: u8,
    /// Stencil width, in nodes, of the Brioschi estimate on `g̃`.
    pub direct_step: i32,
    /// Where the Gauss equation takes `∇²F` from.
    pub hessian: HessianSource,
}

/// Second derivatives used by the Gauss-equation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HessianSource {
    /// Lattice differences of `∂_k F`, consistent with the projector
    /// differences.
    #[default]
    Lattice,
    /// The closed chain-rule expression built from cell Hessians.
    ChainRule,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        Self { fd_unit: 1, fd_order: 6, direct_step: 2, hessian: HessianSource::Lattice }
    }
}

impl CurvatureOptions {
    /// Central-difference weights `c_m` with
    /// `f'(0) ≈ Σ c_m (f(m δ) - f(-m δ)) / δ`.
    pub fn weights(&self) -> Result<&'static [f64]> {
        match self.fd_order {
            2 => Ok(&[0.5]),
            4 => Ok(&[2.0 / 3.0, -1.0 / 12.0]),
            6 => Ok(&[0.75, -0.15, 1.0 / 60.0]),
            _ => Err(crate::error::invalid("fd_order", "must be 2, 4 or 6")),
        }
    }

    /// Widest base-point offset in nodes.
    pub fn reach(&self) -> i32 {
        self.fd_unit * (self.fd_order as i32 / 2)
    }
}

/// Frames at `p` and at `p ± m·unit·e_k` for every axis and stencil level.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    pub center: TangentFrame,
    pub jet: Jet,
    /// `plus[m][k]` is the frame at `p + (m+1)·unit·e_k`.
    plus: Vec<Vec<TangentFrame>>,
    minus: Vec<Vec<TangentFrame>>,
    weights: &'static [f64],
    delta: f64,
}

impl ProjectorFamily {
    pub fn build(kernel: &EmbeddingKernel, bank: &mut CellBank<'_>, p: Node, opts: &CurvatureOptions) -> Result<Self> {
        if opts.fd_unit < 1 {
            return Err(crate::error::invalid("fd_unit", "must be positive"));
        }
        let weights = opts.weights()?;
        let n = kernel.n;
        let jet = kernel.jet(bank, p, true)?;
        let center = TangentFrame::from_jet(kernel, &jet)?;
        let mut plus = Vec::with_capacity(weights.len());
        let mut minus = Vec::with_capacity(weights.len());
        for m in 1..=weights.len() as i32 {
            let mut pl = Vec::with_capacity(n);
            let mut mi = Vec::with_capacity(n);
            for k in 0..n {
                let mut e = [0; 3];
                e[k] = m * opts.fd_unit;
                pl.push(TangentFrame::at(kernel, bank, add(p, e))?);
                e[k] = -m * opts.fd_unit;
                mi.push(TangentFrame::at(kernel, bank, add(p, e))?);
            }
            plus.push(pl);
            minus.push(mi);
        }
        Ok(Self {
            center,
            jet,
            plus,
            minus,
            weights,
            delta: opts.fd_unit as f64 * kernel.domain().spacing(),
        })
    }

    /// Apply a difference operator built from per-frame images.
    fn difference<F>(&self, dir: &[f64], mut image: F) -> L2Vector
    where
        F: FnMut(&TangentFrame) -> L2Vector,
    {
        let mut parts = Vec::new();
        for (k, &c) in dir.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (m, w) in self.weights.iter().enumerate() {
                let f = c * w / self.delta;
                parts.push((f, image(&self.plus[m][k])));
                parts.push((-f, image(&self.minus[m][k])));
            }
        }
        let terms: Vec<(f64, &L2Vector)> = parts.iter().map(|(c, v)| (*c, v)).collect();
        L2Vector::combine(&terms)
    }

    /// `(d_v P) z` for a coordinate direction `v`.
    pub fn d_apply(&self, kernel: &EmbeddingKernel, dir: &[f64], z: &L2Vector) -> L2Vector {
        self.difference(dir, |f| f.project(kernel, z))
    }

    /// Lattice difference of the tangent field `∂_w F` along `v`, i.e. a
    /// second derivative of `F` that only samples lattice points.
    pub fn d_partial(&self, dir: &[f64], w: &[f64]) -> L2Vector {
        self.difference(dir, |f| {
            let terms: Vec<(f64, &L2Vector)> = w.iter().copied().zip(f.basis.iter()).collect();
            L2Vector::combine(&terms)
        })
    }

    /// Symmetrised lattice Hessian `½(D_v ∂_w F + D_w ∂_v F)`.
    pub fn lattice_hessian(&self, v: &[f64], w: &[f64]) -> L2Vector {
        let a = self.d_partial(v, w);
        let b = self.d_partial(w, v);
        L2Vector::combine(&[(0.5, &a), (0.5, &b)])
    }

    /// Residual of `(dP)P̄ + P̄(dP) = dP` along axis `k`, where each stencil
    /// level uses its own midpoint projector `P̄_m = (P_{+m} + P_{-m})/2`;
    /// the discrete identity is then exact.
    fn p2_midpoint(&self, kernel: &EmbeddingKernel, k: usize, z: &L2Vector) -> L2Vector {
        let mut parts = Vec::new();
        for (m, w) in self.weights.iter().enumerate() {
            let f = w / self.delta;
            let (pp, pm) = (&self.plus[m][k], &self.minus[m][k]);
            let mid = |x: &L2Vector| {
                let a = pp.project(kernel, x);
                let b = pm.project(kernel, x);
                L2Vector::combine(&[(0.5, &a), (0.5, &b)])
            };
            let diff = |x: &L2Vector| {
                let a = pp.project(kernel, x);
                let b = pm.project(kernel, x);
                L2Vector::combine(&[(1.0, &a), (-1.0, &b)])
            };
            let dz = diff(z);
            let mz = mid(z);
            parts.push((f, diff(&mz)));
            parts.push((f, mid(&dz)));
            parts.push((-f, dz));
        }
        let terms: Vec<(f64, &L2Vector)> = parts.iter().map(|(c, v)| (*c, v)).collect();
        L2Vector::combine(&terms)
    }

    /// Tangent vectors and Hessian vectors at the base point.
    pub fn dictionary(&self) -> Vec<L2Vector> {
        let mut d = self.jet.partials.clone();
        d.extend(self.jet.hessians.iter().cloned());
        d
    }
}

/// Summary of `d_v P` on the dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorDerivative {
    pub base: Node,
    pub direction: Vec<f64>,
    /// Largest `‖(d_v P) x‖ / ‖x‖` over the span of the dictionary.
    pub op_norm_est: f64,
    /// `‖(dP)P̄ + P̄(dP) - dP‖ / ‖dP‖`, with `P̄` the stencil midpoint
    /// projector, maximised over the dictionary.
    pub p2_residual: f64,
    /// Same with the projector at the base point.
    pub p2_residual_center: f64,
}

/// `d_v P` at `p` probed on `{∂_k F, ∂_k∂_l F}`; `v` must be an axis
/// direction for the identity residuals to be meaningful.
pub fn projection_derivative(
    kernel: &EmbeddingKernel,
    family: &ProjectorFamily,
    dir: &[f64],
) -> Result<ProjectorDerivative> {
    let dict = family.dictionary();
    let ortho = orthonormalize(kernel, &dict);
    let images: Vec<L2Vector> = ortho.iter().map(|e| family.d_apply(kernel, dir, e)).collect();
    let m = images.len();
    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v = kernel.inner(&images[i], &images[j]);
            gram[i * m + j] = v;
            gram[j * m + i] = v;
        }
    }
    let ev = sym_eigen_dense(&mut gram, m);
    let op_norm_est = fmath::sqrt(ev.iter().cloned().fold(0.0, f64::max));

    let mut p2: f64 = 0.0;
    let mut p2c: f64 = 0.0;
    for z in &dict {
        let dz = family.d_apply(kernel, dir, z);
        let scale = kernel.norm(&dz).max(1e-300);
        let mut parts = Vec::new();
        for (k, &c) in dir.iter().enumerate() {
            if c != 0.0 {
                parts.push((c, family.p2_midpoint(kernel, k, z)));
            }
        }
        let terms: Vec<(f64, &L2Vector)> = parts.iter().map(|(c, v)| (*c, v)).collect();
        p2 = p2.max(kernel.norm(&L2Vector::combine(&terms)) / scale);

        let pz = family.center.project(kernel, z);
        let a = family.d_apply(kernel, dir, &pz);
        let b = family.center.project(kernel, &dz);
        let r = L2Vector::combine(&[(1.0, &a), (1.0, &b), (-1.0, &dz)]);
        p2c = p2c.max(kernel.norm(&r) / scale);
    }
    Ok(ProjectorDerivative {
        base: family.center.base,
        direction: dir.to_vec(),
        op_norm_est,
        p2_residual: p2,
        p2_residual_center: p2c,
    })
}

fn orthonormalize(kernel: &EmbeddingKernel, vs: &[L2Vector]) -> Vec<L2Vector> {
    let mut out: Vec<L2Vector> = Vec::new();
    let scale = vs.iter().map(|v| kernel.norm(v)).fold(0.0, f64::max);
    for v in vs {
        let mut w = v.clone();
        // two passes for stability
        for _ in 0..2 {
            for e in &out {
                let c = kernel.inner(e, &w);
                w = L2Vector::combine(&[(1.0, &w), (-c, e)]);
            }
        }
        let nrm = kernel.norm(&w);
        if nrm > 1e-10 * scale {
            w.scale(1.0 / nrm);
            out.push(w);
        }
    }
    out
}

fn area(kernel: &EmbeddingKernel, uh: &L2Vector, vh: &L2Vector) -> Result<f64> {
    let uu = kernel.inner(uh, uh);
    let vv = kernel.inner(vh, vh);
    let uv = kernel.inner(uh, vh);
    let a = uu * vv - uv * uv;
    if !(a > 1e-8 * uu * vv) {
        return Err(Error::ParallelDirections);
    }
    Ok(a)
}

/// `[d_u P, d_v P] z`.
pub fn commutator_apply(kernel: &EmbeddingKernel, family: &ProjectorFamily, u: &[f64], v: &[f64], z: &L2Vector) -> L2Vector {
    let a = family.d_apply(kernel, u, &family.d_apply(kernel, v, z));
    let b = family.d_apply(kernel, v, &family.d_apply(kernel, u, z));
    L2Vector::combine(&[(1.0, &a), (-1.0, &b)])
}

/// Sectional curvature of the plane `span(û, v̂)` from the projector
/// commutator.
pub fn curvature_commutator(kernel: &EmbeddingKernel, family: &ProjectorFamily, u: &[f64], v: &[f64]) -> Result<f64> {
    let uh = family.jet.directional(u);
    let vh = family.jet.directional(v);
    let a = area(kernel, &uh, &vh)?;
    let r = commutator_apply(kernel, family, u, v, &vh);
    Ok(kernel.inner(&r, &uh) / a)
}

/// Second fundamental form `(1 - P) ∇²_{u,v} F`.
pub fn second_fundamental_form(
    kernel: &EmbeddingKernel,
    family: &ProjectorFamily,
    u: &[f64],
    v: &[f64],
    source: HessianSource,
) -> L2Vector {
    let h = match source {
        HessianSource::ChainRule => family.jet.hessian(u, v),
        HessianSource::Lattice => family.lattice_hessian(u, v),
    };
    family.center.normal_part(kernel, &h)
}

/// Sectional curvature from the Gauss equation.
pub fn curvature_gauss(
    kernel: &EmbeddingKernel,
    family: &ProjectorFamily,
    u: &[f64],
    v: &[f64],
    source: HessianSource,
) -> Result<f64> {
    let uh = family.jet.directional(u);
    let vh = family.jet.directional(v);
    let a = area(kernel, &uh, &vh)?;
    let iuu = second_fundamental_form(kernel, family, u, u, source);
    let ivv = second_fundamental_form(kernel, family, v, v, source);
    let iuv = second_fundamental_form(kernel, family, u, v, source);
    Ok((kernel.inner(&iuu, &ivv) - kernel.inner(&iuv, &iuv)) / a)
}

/// Gauss curvature of `g̃` at `p` by the Brioschi formula on a 3×3 stencil
/// of width `step` nodes.
pub fn curvature_direct(kernel: &EmbeddingKernel, bank: &mut CellBank<'_>, p: Node, step: i32) -> Result<f64> {
    if kernel.n != 2 {
        return Err(Error::RequiresPlanar(kernel.n));
    }
    let mut samples = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let q = add(p, [(a as i32 - 1) * step, (b as i32 - 1) * step, 0]);
            let g = kernel.jet(bank, q, false)?.gram(kernel);
            samples[a][b] = [g.a[0][0], g.a[0][1], g.a[1][1]];
        }
    }
    Ok(brioschi_stencil(&samples, step as f64 * kernel.domain().spacing()))
}

/// Curvature estimates over a region of a planar chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub points: Vec<Node>,
    pub k_commutator: Vec<f64>,
    pub k_gauss: Vec<f64>,
    pub k_direct: Vec<f64>,
    /// `max ‖d_v P‖ · i₀ / ‖d_v F‖` over points and axis directions.
    pub dp_bound: f64,
    /// Largest midpoint-projector residual of `(dP)P + P(dP) = dP`.
    pub p2_residual: f64,
    pub i0: f64,
}

impl CurvatureReport {
    pub fn sup_abs(values: &[f64]) -> f64 {
        values.iter().map(|v| fmath::abs(*v)).fold(0.0, f64::max)
    }

    pub fn sup_commutator(&self) -> f64 {
        Self::sup_abs(&self.k_commutator)
    }

    pub fn sup_gauss(&self) -> f64 {
        Self::sup_abs(&self.k_gauss)
    }

    pub fn sup_direct(&self) -> f64 {
        Self::sup_abs(&self.k_direct)
    }
}

pub fn curvature_report(
    kernel: &EmbeddingKernel,
    bank: &mut CellBank<'_>,
    region: &[Node],
    opts: &CurvatureOptions,
) -> Result<CurvatureReport> {
    if kernel.n != 2 {
        return Err(Error::RequiresPlanar(kernel.n));
    }
    let e1 = [1.0, 0.0];
    let e2 = [0.0, 1.0];
    let mut rep = CurvatureReport {
        points: Vec::new(),
        k_commutator: Vec::new(),
        k_gauss: Vec::new(),
        k_direct: Vec::new(),
        dp_bound: 0.0,
        p2_residual: 0.0,
        i0: kernel.i0,
    };
    for &p in region {
        let fam = ProjectorFamily::build(kernel, bank, p, opts)?;
        rep.k_commutator.push(curvature_commutator(kernel, &fam, &e1, &e2)?);
        rep.k_gauss.push(curvature_gauss(kernel, &fam, &e1, &e2, opts.hessian)?);
        rep.k_direct.push(curvature_direct(kernel, bank, p, opts.direct_step)?);
        for dir in [&e1, &e2] {
            let d = projection_derivative(kernel, &fam, dir)?;
            let speed = kernel.norm(&fam.jet.directional(dir));
            rep.dp_bound = rep.dp_bound.max(d.op_norm_est * kernel.i0 / speed);
            rep.p2_residual = rep.p2_residual.max(d.p2_residual);
        }
        rep.points.push(p);
    }
    Ok(rep)
}

