//! Numerical core for smoothing low-regularity Riemannian metrics given on
//! coordinate charts.
//!
//! The pipeline works on a masked uniform grid over a chart ball `B(0, r)`:
//!
//! * [`domain`], [`metric`], [`distance`] and [`gauss`] hold the discrete
//!   chart, sampled metric tensors, geodesic distances, volume weights and a
//!   Brioschi curvature oracle.
//! * [`norms`] computes regularity norms on scale for a chart or an atlas.
//! * [`cell`] solves `Δ_g h = -1` with zero Dirichlet data on small geodesic
//!   balls.
//! * [`cutoff`] and [`embedding`] build the averaged `L²` embedding and the
//!   pull-back metric.
//! * [`submanifold`] measures the intrinsic curvature of the embedded image
//!   through tangent projectors.
//! * [`patchwork`] glues chart-wise results on a flat torus quotient.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod cell;
pub mod cutoff;
pub mod distance;
pub mod domain;
pub mod embedding;
mod error;
pub mod gauss;
pub mod linalg;
pub mod metric;
pub mod norms;
pub mod patchwork;
pub mod quadrature;
pub mod submanifold;

pub(crate) mod fmath;

pub use error::{Error, Result};
