//! Gaussian curvature of a planar metric from its first fundamental form
//! (Brioschi formula with central differences). Serves as a reference oracle
//! for smooth sampled metrics.

use alloc::vec::Vec;

use crate::domain::Node;
use crate::error::{Error, Result};
use crate::metric::MetricField;

/// First fundamental form `E, F, G` with first and the needed second
/// derivatives at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct FundamentalForm {
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub e_u: f64,
    pub e_v: f64,
    pub f_u: f64,
    pub f_v: f64,
    pub g_u: f64,
    pub g_v: f64,
    pub e_vv: f64,
    pub f_uv: f64,
    pub g_uu: f64,
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Brioschi formula.
pub fn brioschi(ff: &FundamentalForm) -> f64 {
    let FundamentalForm { e, f, g, e_u, e_v, f_u, f_v, g_u, g_v, e_vv, f_uv, g_uu } = *ff;
    let a = [
        [-0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * e_u, f_u - 0.5 * e_v],
        [f_v - 0.5 * g_u, e, f],
        [0.5 * g_v, f, g],
    ];
    let b = [[0.0, 0.5 * e_v, 0.5 * g_u], [0.5 * e_v, e, f], [0.5 * g_u, f, g]];
    let w = e * g - f * f;
    (det3(a) - det3(b)) / (w * w)
}

/// Brioschi curvature from `[E, F, G]` sampled on a 3×3 stencil with step
/// `step`; `samples[a][b]` sits at offset `(a - 1, b - 1)·step`.
pub fn brioschi_stencil(samples: &[[[f64; 3]; 3]; 3], step: f64) -> f64 {
    let c = |k: usize, a: usize, b: usize| samples[a][b][k];
    let du = |k: usize| (c(k, 2, 1) - c(k, 0, 1)) / (2.0 * step);
    let dv = |k: usize| (c(k, 1, 2) - c(k, 1, 0)) / (2.0 * step);
    let duu = |k: usize| (c(k, 2, 1) - 2.0 * c(k, 1, 1) + c(k, 0, 1)) / (step * step);
    let dvv = |k: usize| (c(k, 1, 2) - 2.0 * c(k, 1, 1) + c(k, 1, 0)) / (step * step);
    let duv = |k: usize| (c(k, 2, 2) - c(k, 2, 0) - c(k, 0, 2) + c(k, 0, 0)) / (4.0 * step * step);
    brioschi(&FundamentalForm {
        e: c(0, 1, 1),
        f: c(1, 1, 1),
        g: c(2, 1, 1),
        e_u: du(0),
        e_v: dv(0),
        f_u: du(1),
        f_v: dv(1),
        g_u: du(2),
        g_v: dv(2),
        e_vv: dvv(0),
        f_uv: duv(1),
        g_uu: duu(2),
    })
}

/// Gaussian curvature on interior nodes (at least two cells from the mask
/// boundary); `NaN` elsewhere.
pub fn reference_gauss_curvature(m: &MetricField) -> Result<Vec<f64>> {
    let d = m.domain();
    if d.dim() != 2 {
        return Err(Error::RequiresPlanar(d.dim()));
    }
    let mut out = Vec::with_capacity(d.len());
    for i in 0..d.len() {
        let node = d.node_of(i);
        if !d.is_interior(node, 2) || !d.is_interior(node, 1) || !diag_ok(d, node) {
            out.push(f64::NAN);
            continue;
        }
        let mut s = [[[0.0; 3]; 3]; 3];
        for (a, row) in s.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                let nn: Node = [node[0] + a as i32 - 1, node[1] + b as i32 - 1, 0];
                let p = m.packed(d.index(nn).expect("interior"));
                *cell = [p[0], p[1], p[2]];
            }
        }
        out.push(brioschi_stencil(&s, d.spacing()));
    }
    Ok(out)
}

fn diag_ok(d: &crate::domain::ChartDomain, node: Node) -> bool {
    [[1, 1], [1, -1], [-1, 1], [-1, -1]]
        .iter()
        .all(|o| d.is_masked([node[0] + o[0], node[1] + o[1], 0]))
}

/// Largest finite absolute value of a field.
pub fn sup_abs(values: &[f64]) -> f64 {
    values.iter().filter(|v| v.is_finite()).fold(0.0, |a, v| a.max(v.abs()))
}
