//! The cutoff profile `β` and the flat-space normalisation of its amplitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmath;
use crate::quadrature::Rule;

/// `β(t) = 0` for `t ≤ lo`, `β(t) = amplitude` for `t ≥ hi`, a quintic
/// smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub rise_lo: f64,
    pub rise_hi: f64,
    pub amplitude: f64,
}

impl CutoffProfile {
    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    #[inline]
    fn tau(&self, t: f64) -> Option<f64> {
        if t <= self.rise_lo || t >= self.rise_hi {
            None
        } else {
            Some((t - self.rise_lo) / (self.rise_hi - self.rise_lo))
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self.tau(t) {
            Some(s) => self.amplitude * s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
            None if t >= self.rise_hi => self.amplitude,
            None => 0.0,
        }
    }

    #[inline]
    pub fn d1(&self, t: f64) -> f64 {
        match self.tau(t) {
            Some(s) => self.amplitude * 30.0 * s * s * (1.0 - s) * (1.0 - s) / (self.rise_hi - self.rise_lo),
            None => 0.0,
        }
    }

    #[inline]
    pub fn d2(&self, t: f64) -> f64 {
        match self.tau(t) {
            Some(s) => {
                let w = self.rise_hi - self.rise_lo;
                self.amplitude * 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (w * w)
            }
            None => 0.0,
        }
    }
}

/// Unnormalised cutoff for dimension `n`.
pub fn build_cutoff(n: usize) -> Result<CutoffProfile> {
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    Ok(CutoffProfile { rise_lo: 0.25, rise_hi: 0.5, amplitude: 1.0 })
}

/// Area of the unit sphere `S^{k}` in `R^{k+1}`, `k ∈ {0, 1, 2}`.
fn sphere_area(k: usize) -> f64 {
    use core::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        2 => 4.0 * PI,
        _ => unreachable!("dimension checked"),
    }
}

/// Quadrature resolution for the normalisation integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadialPlan {
    pub order: usize,
    pub panels: usize,
}

impl RadialPlan {
    fn refined(self) -> Self {
        Self { order: self.order, panels: 2 * self.panels }
    }
}

impl Default for RadialPlan {
    fn default() -> Self {
        Self { order: 8, panels: 4 }
    }
}

/// Derivative in `u` of the flat profile
/// `f̃(u) = ∫ β(1 - |s|²) β(1 - |s - u e₁|²) ds`.
pub fn radial_profile_derivative(n: usize, cutoff: &CutoffProfile, u: f64, plan: RadialPlan) -> f64 {
    let rule = Rule::gauss_legendre(plan.order);
    let lo = fmath::sqrt(1.0 - cutoff.rise_hi);
    let hi = fmath::sqrt(1.0 - cutoff.rise_lo);
    // polar coordinates around u e₁: s = u e₁ + ρ(cos θ, sin θ ω)
    let outer = rule.integrate(lo, hi, &[], plan.panels, |rho| {
        let radial = fmath::powf(rho, (n - 1) as f64) * cutoff.d1(1.0 - rho * rho);
        if radial == 0.0 {
            return 0.0;
        }
        let mut breaks = [0.0; 2];
        let mut nb = 0;
        if u > 0.0 {
            for c in [1.0 - cutoff.rise_hi, 1.0 - cutoff.rise_lo] {
                let cth = (c - u * u - rho * rho) / (2.0 * u * rho);
                if cth > -1.0 && cth < 1.0 {
                    breaks[nb] = fmath::acos(cth);
                    nb += 1;
                }
            }
        }
        let inner = rule.integrate(0.0, core::f64::consts::PI, &breaks[..nb], plan.panels, |th| {
            let (sn, cs) = (fmath::sin(th), fmath::cos(th));
            let s2 = u * u + rho * rho + 2.0 * u * rho * cs;
            let ang = if n == 3 { sn } else { 1.0 };
            ang * 2.0 * rho * cs * cutoff.value(1.0 - s2)
        });
        radial * inner
    });
    sphere_area(n - 2) * outer
}

/// `|S^{n-1}|/n ∫₀² r^{n-1} f̃'(r)² dr`.
pub fn normalization_integral(n: usize, cutoff: &CutoffProfile, plan: RadialPlan) -> f64 {
    let rule = Rule::gauss_legendre(plan.order);
    let support = 2.0 * fmath::sqrt(1.0 - cutoff.rise_lo);
    let breaks = [
        fmath::sqrt(1.0 - cutoff.rise_hi),
        fmath::sqrt(1.0 - cutoff.rise_lo),
        2.0 * fmath::sqrt(1.0 - cutoff.rise_hi),
        fmath::sqrt(1.0 - cutoff.rise_hi) + fmath::sqrt(1.0 - cutoff.rise_lo),
        fmath::sqrt(1.0 - cutoff.rise_lo) - fmath::sqrt(1.0 - cutoff.rise_hi),
    ];
    let radial = rule.integrate(0.0, support.min(2.0), &breaks, plan.panels, |r| {
        let d = radial_profile_derivative(n, cutoff, r, plan);
        fmath::powf(r, (n - 1) as f64) * d * d
    });
    sphere_area(n - 1) / n as f64 * radial
}

/// Outcome of the amplitude calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `B_n`.
    pub amplitude: f64,
    /// Normalisation integral of the unit-amplitude cutoff.
    pub unit_integral: f64,
    /// Relative change of the integral under one quadrature refinement.
    pub refinement_change: f64,
}

/// Find `B_n` such that the flat embedding is isometric, i.e. the
/// normalisation integral equals one.
pub fn calibrate(n: usize, cutoff: &CutoffProfile) -> Result<Calibration> {
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    let unit = cutoff.with_amplitude(1.0);
    let plan = RadialPlan::default();
    let a = normalization_integral(n, &unit, plan);
    let b = normalization_integral(n, &unit, plan.refined());
    let rel = fmath::abs(a - b) / fmath::abs(b);
    if !(rel <= 1e-3) {
        return Err(Error::QuadratureNotConverged { rel_diff: rel });
    }
    Ok(Calibration { amplitude: fmath::powf(b, -0.25), unit_integral: b, refinement_change: rel })
}

/// `B_n` alone.
pub fn calibrate_normalization(n: usize, cutoff: &CutoffProfile) -> Result<f64> {
    calibrate(n, cutoff).map(|c| c.amplitude)
}

/// Cutoff for dimension `n` with the calibrated amplitude.
pub fn calibrated_cutoff(n: usize) -> Result<CutoffProfile> {
    let c = build_cutoff(n)?;
    Ok(c.with_amplitude(calibrate_normalization(n, &c)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints_and_continuity() {
        let b = build_cutoff(2).unwrap();
        assert_eq!(b.value(0.2), 0.0);
        assert_eq!(b.value(0.75), 1.0);
        let e = 1e-9;
        for t in [0.25, 0.5] {
            assert!((b.value(t - e) - b.value(t + e)).abs() < 1e-8);
            assert!((b.d1(t - e) - b.d1(t + e)).abs() < 1e-12);
            assert!((b.d2(t - 1e-13) - b.d2(t + 1e-13)).abs() < 1e-9);
        }
        assert!(b.d1(0.25).abs() < 1e-12 && b.d1(0.5).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_differences() {
        let b = build_cutoff(2).unwrap().with_amplitude(1.7);
        let e = 1e-6;
        for t in [0.27, 0.33, 0.41, 0.49] {
            let fd1 = (b.value(t + e) - b.value(t - e)) / (2.0 * e);
            let fd2 = (b.d1(t + e) - b.d1(t - e)) / (2.0 * e);
            assert!((fd1 - b.d1(t)).abs() < 1e-6);
            assert!((fd2 - b.d2(t)).abs() < 1e-4);
        }
    }

    #[test]
    fn monotone() {
        let b = build_cutoff(3).unwrap();
        let mut prev = -1.0;
        for i in 0..=1000 {
            let v = b.value(i as f64 / 1000.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    /// Cartesian midpoint sum of `f̃(u)` in the plane.
    fn profile_by_grid(b: &CutoffProfile, u: f64, m: usize) -> f64 {
        let h = 2.0 / m as f64;
        let mut total = 0.0;
        for i in 0..m {
            let x = -1.0 + (i as f64 + 0.5) * h;
            for j in 0..m {
                let y = -1.0 + (j as f64 + 0.5) * h;
                let a = b.value(1.0 - x * x - y * y);
                if a != 0.0 {
                    total += a * b.value(1.0 - (x - u) * (x - u) - y * y);
                }
            }
        }
        total * h * h
    }

    #[test]
    fn profile_derivative_matches_grid_differences() {
        let b = build_cutoff(2).unwrap();
        let du = 0.01;
        for u in [0.3, 0.8, 1.2] {
            let fd = (profile_by_grid(&b, u + du, 1600) - profile_by_grid(&b, u - du, 1600)) / (2.0 * du);
            let q = radial_profile_derivative(2, &b, u, RadialPlan::default());
            assert!((fd - q).abs() < 2e-3 * q.abs().max(0.05), "u={u} fd={fd} q={q}");
        }
    }

    #[test]
    fn calibration_normalises_integral() {
        for n in [2, 3] {
            let b = build_cutoff(n).unwrap();
            let cal = calibrate(n, &b).unwrap();
            assert!(cal.refinement_change < 1e-3);
            let scaled = b.with_amplitude(cal.amplitude);
            let i = normalization_integral(n, &scaled, RadialPlan { order: 10, panels: 8 });
            assert!((i - 1.0).abs() < 5e-3, "n={n} I={i}");
            let twice = normalization_integral(n, &b.with_amplitude(2.0), RadialPlan::default());
            assert!((twice / normalization_integral(n, &b, RadialPlan::default()) - 16.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unsupported_dimension() {
        assert!(matches!(build_cutoff(4), Err(Error::UnsupportedDimension(4))));
    }
}
