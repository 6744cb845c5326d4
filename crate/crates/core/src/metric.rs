//! Sampled metric tensors on a chart grid, their analytic generators, and
//! the per-node quantities derived from them.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::domain::{ChartDomain, Node};
use crate::error::{invalid, Error, Result};
use crate::fmath;
use crate::linalg::{packed_index, packed_len, SmallMat};

/// One additive term of a conformal exponent `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PhiTerm {
    Constant { value: f64 },
    Gaussian { amplitude: f64, center: [f64; 3], width: f64 },
    /// `amplitude · cos(⟨k, x⟩ + phase)`.
    Cosine { amplitude: f64, wavevector: [f64; 3], phase: f64 },
}

impl PhiTerm {
    fn eval(&self, x: &[f64; 3]) -> f64 {
        match self {
            PhiTerm::Constant { value } => *value,
            PhiTerm::Gaussian { amplitude, center, width } => {
                let r2 = dist2(x, center);
                amplitude * fmath::exp(-r2 / (2.0 * width * width))
            }
            PhiTerm::Cosine { amplitude, wavevector, phase } => {
                let a = wavevector[0] * x[0] + wavevector[1] * x[1] + wavevector[2] * x[2];
                amplitude * fmath::cos(a + phase)
            }
        }
    }
}

/// `c + Σ l_k x_k + Σ q_k x_k²`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratic {
    pub constant: f64,
    #[serde(default)]
    pub linear: [f64; 3],
    #[serde(default)]
    pub quadratic: [f64; 3],
}

impl Quadratic {
    fn eval(&self, x: &[f64; 3]) -> f64 {
        let mut v = self.constant;
        for k in 0..3 {
            v += self.linear[k] * x[k] + self.quadratic[k] * x[k] * x[k];
        }
        v
    }
}

/// Analytic metric sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricGenerator {
    Flat,
    /// `g = e^{2φ} δ` with `φ` a sum of terms.
    Conformal { terms: Vec<PhiTerm> },
    /// Stereographic chart of the round sphere of radius `rho`:
    /// `g = 4ρ⁴/(ρ² + |x|²)² δ`.
    Sphere { rho: f64 },
    /// `g = diag(a(x), b(x), 1)`.
    Anisotropic { a: Quadratic, b: Quadratic },
    /// Conformal metric whose exponent is a mollified cone
    /// `A((|x - x₀|² + w²)^{α/2} - w^α)`: bounded Hölder norm, huge second
    /// derivatives near `x₀` once `w` is small.
    RoughBump { amplitude: f64, center: [f64; 3], exponent: f64, width: f64 },
}

impl MetricGenerator {
    /// Conformal exponent `φ(x)` when the metric is `e^{2φ}δ`.
    pub fn conformal_phi(&self, x: &[f64; 3]) -> Option<f64> {
        match self {
            MetricGenerator::Flat => Some(0.0),
            MetricGenerator::Conformal { terms } => Some(terms.iter().map(|t| t.eval(x)).sum()),
            MetricGenerator::Sphere { rho } => {
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                Some(fmath::ln(2.0 * rho * rho / (rho * rho + r2)))
            }
            MetricGenerator::Anisotropic { .. } => None,
            MetricGenerator::RoughBump { amplitude, center, exponent, width } => {
                let r2 = dist2(x, center);
                let w2 = width * width;
                Some(amplitude * (fmath::powf(r2 + w2, 0.5 * exponent) - fmath::powf(w2, 0.5 * exponent)))
            }
        }
    }

    /// Packed metric coefficients at a point.
    pub fn eval(&self, dim: usize, x: &[f64; 3]) -> Vec<f64> {
        let mut g = vec![0.0; packed_len(dim)];
        match self {
            MetricGenerator::Anisotropic { a, b } => {
                g[packed_index(dim, 0, 0)] = a.eval(x);
                g[packed_index(dim, 1, 1)] = b.eval(x);
                if dim == 3 {
                    g[packed_index(dim, 2, 2)] = 1.0;
                }
            }
            _ => {
                let phi = self.conformal_phi(x).unwrap_or(0.0);
                let f = fmath::exp(2.0 * phi);
                for k in 0..dim {
                    g[packed_index(dim, k, k)] = f;
                }
            }
        }
        g
    }

    /// Whether geodesic distances have a closed form for this generator.
    pub fn has_closed_form_distance(&self) -> bool {
        match self {
            MetricGenerator::Flat | MetricGenerator::Sphere { .. } => true,
            MetricGenerator::Conformal { terms } => {
                terms.iter().all(|t| matches!(t, PhiTerm::Constant { .. }))
            }
            _ => false,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            MetricGenerator::Flat => "flat",
            MetricGenerator::Conformal { .. } => "conformal",
            MetricGenerator::Sphere { .. } => "sphere",
            MetricGenerator::Anisotropic { .. } => "anisotropic",
            MetricGenerator::RoughBump { .. } => "rough_bump",
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Metric coefficients `g_ij` sampled at every grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    domain: ChartDomain,
    /// Packed symmetric coefficients, `packed_len(n)` per node. Entries of
    /// unmasked nodes are never read.
    coeffs: Vec<f64>,
    generator: Option<MetricGenerator>,
}

/// Sample a generator on every node of the domain and verify positivity.
pub fn sample_metric(generator: &MetricGenerator, domain: &ChartDomain) -> Result<MetricField> {
    let n = domain.dim();
    let mut coeffs = Vec::with_capacity(domain.len() * packed_len(n));
    for i in 0..domain.len() {
        let x = domain.coords(domain.node_of(i));
        coeffs.extend(generator.eval(n, &x));
    }
    let field = MetricField {
        domain: domain.clone(),
        coeffs,
        generator: Some(generator.clone()),
    };
    field.validate()?;
    Ok(field)
}

impl MetricField {
    /// Metric from raw packed samples (no analytic generator).
    pub fn from_samples(domain: ChartDomain, coeffs: Vec<f64>) -> Result<Self> {
        let n = domain.dim();
        if coeffs.len() != domain.len() * packed_len(n) {
            return Err(invalid(
                "coeffs",
                alloc::format!("expected {} values, got {}", domain.len() * packed_len(n), coeffs.len()),
            ));
        }
        let f = Self {
            domain,
            coeffs,
            generator: None,
        };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        for i in self.domain.masked_indices() {
            let g = self.at(i);
            let ok = g.cholesky().is_some() && self.packed(i).iter().all(|v| v.is_finite());
            if !ok {
                return Err(Error::NotPositiveDefinite {
                    coords: self.domain.coords(self.domain.node_of(i)),
                });
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn generator(&self) -> Option<&MetricGenerator> {
        self.generator.as_ref()
    }

    pub fn generator_tag(&self) -> Option<&'static str> {
        self.generator.as_ref().map(|g| g.tag())
    }

    /// Packed coefficients at node index `i`.
    #[inline]
    pub fn packed(&self, i: usize) -> &[f64] {
        let m = packed_len(self.dim());
        &self.coeffs[i * m..(i + 1) * m]
    }

    /// Multilinear interpolation of the packed coefficients at coordinates
    /// `x`, using only masked corners.
    pub fn interpolate(&self, x: &[f64; 3], out: &mut [f64]) {
        let d = &self.domain;
        let n = d.dim();
        let m = packed_len(n);
        let h = d.spacing();
        let o = d.origin();
        let mut base = [0i32; 3];
        let mut frac = [0.0; 3];
        for k in 0..n {
            let u = (x[k] - o[k]) / h;
            let f = fmath::floor(u);
            base[k] = f as i32;
            frac[k] = u - f;
        }
        out[..m].iter_mut().for_each(|v| *v = 0.0);
        let mut wsum = 0.0;
        for corner in 0..(1usize << n) {
            let mut node = base;
            let mut w = 1.0;
            for k in 0..n {
                if corner >> k & 1 == 1 {
                    node[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w == 0.0 {
                continue;
            }
            if let Some(i) = d.index(node).filter(|&i| d.mask()[i]) {
                for (o, c) in out[..m].iter_mut().zip(self.packed(i)) {
                    *o += w * c;
                }
                wsum += w;
            }
        }
        if wsum > 0.0 {
            out[..m].iter_mut().for_each(|v| *v /= wsum);
        }
    }

    /// The common coefficients when every masked node carries the same ones.
    pub fn uniform(&self) -> Option<&[f64]> {
        let mut masked = self.domain.masked_indices();
        let g0 = self.packed(masked.next()?);
        masked.all(|i| self.packed(i) == g0).then_some(g0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn at(&self, i: usize) -> SmallMat {
        SmallMat::from_packed(self.dim(), self.packed(i))
    }

    pub fn at_node(&self, node: Node) -> Option<SmallMat> {
        self.domain.index(node).map(|i| self.at(i))
    }

    /// Scalar field of component `g_ij` over all nodes.
    pub fn component(&self, i: usize, j: usize) -> Vec<f64> {
        let n = self.dim();
        let k = packed_index(n, i, j);
        let m = packed_len(n);
        (0..self.domain.len()).map(|idx| self.coeffs[idx * m + k]).collect()
    }

    /// The same coefficients multiplied by `factor` (metric `factor · g`).
    pub fn scaled(&self, factor: f64) -> Self {
        let generator = match &self.generator {
            Some(MetricGenerator::Flat) if factor == 1.0 => Some(MetricGenerator::Flat),
            _ => None,
        };
        Self {
            domain: self.domain.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            generator,
        }
    }

    /// Content hash over the domain geometry and masked coefficients.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.dim() as u64);
        eat(self.domain.spacing().to_bits());
        eat(self.domain.radius().to_bits());
        for i in self.domain.masked_indices() {
            for v in self.packed(i) {
                eat(v.to_bits());
            }
        }
        h
    }
}

/// Smallest `Q ≥ 0` with `e^{-Q} δ ≤ g ≤ e^{Q} δ` at every masked node.
pub fn metric_eigen_bounds(m: &MetricField) -> f64 {
    let mut q: f64 = 0.0;
    for i in m.domain().masked_indices() {
        let ev = m.at(i).sym_eigenvalues();
        let lo = fmath::abs(fmath::ln(ev[0]));
        let hi = fmath::abs(fmath::ln(ev[ev.len() - 1]));
        q = q.max(lo).max(hi);
    }
    q
}

/// Extreme eigenvalues `(λ_min, λ_max)` of the metric over masked nodes.
pub fn eigen_range(m: &MetricField) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in m.domain().masked_indices() {
        let ev = m.at(i).sym_eigenvalues();
        lo = lo.min(ev[0]);
        hi = hi.max(ev[ev.len() - 1]);
    }
    (lo, hi)
}

/// Riemannian volume of each grid cell, `√det g · hⁿ` on masked nodes and
/// zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeWeights {
    weights: Vec<f64>,
}

impl VolumeWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Sum in index order.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Lebesgue weights `hⁿ` on the mask, for comparison runs.
    pub fn lebesgue(domain: &ChartDomain) -> Self {
        let c = domain.cell_volume();
        Self {
            weights: domain.mask().iter().map(|&m| if m { c } else { 0.0 }).collect(),
        }
    }
}

pub fn volume_measure(m: &MetricField) -> VolumeWeights {
    let d = m.domain();
    let c = d.cell_volume();
    let weights = (0..d.len())
        .map(|i| if d.mask()[i] { fmath::sqrt(m.at(i).det()) * c } else { 0.0 })
        .collect();
    VolumeWeights { weights }
}

/// First partial derivative of a node field along axis `k` at `node`:
/// central where both neighbours are masked, one-sided otherwise.
pub fn partial(domain: &ChartDomain, values: &[f64], node: Node, k: usize) -> f64 {
    let h = domain.spacing();
    let mut fwd = node;
    fwd[k] += 1;
    let mut bwd = node;
    bwd[k] -= 1;
    let c = domain.index(node).map(|i| values[i]);
    let f = if domain.is_masked(fwd) { domain.index(fwd).map(|i| values[i]) } else { None };
    let b = if domain.is_masked(bwd) { domain.index(bwd).map(|i| values[i]) } else { None };
    match (b, c, f) {
        (Some(b), _, Some(f)) => (f - b) / (2.0 * h),
        (None, Some(c), Some(f)) => (f - c) / h,
        (Some(b), Some(c), None) => (c - b) / h,
        _ => 0.0,
    }
}

/// Derivative field of a node field along axis `k` (masked nodes only).
pub fn partial_field(domain: &ChartDomain, values: &[f64], k: usize) -> Vec<f64> {
    (0..domain.len())
        .map(|i| {
            if domain.mask()[i] {
                partial(domain, values, domain.node_of(i), k)
            } else {
                f64::NAN
            }
        })
        .collect()
}
