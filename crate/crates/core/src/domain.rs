//! Masked uniform grids over a chart ball `B(0, r)`.
//!
//! Nodes are addressed by integer lattice coordinates centred on the chart
//! origin. Unused axes (for `n = 2`) are pinned to zero so every routine can
//! loop over three axes.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fmath;

/// Integer lattice coordinates of a node; trailing unused axes are zero.
pub type Node = [i32; 3];

/// Minimum number of grid steps across the chart diameter.
pub const MIN_NODES_PER_DIAMETER: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDomain {
    dim: usize,
    spacing: f64,
    radius: f64,
    /// Nodes span `-half..=half` along every used axis.
    half: i32,
    origin: [f64; 3],
    mask: Vec<bool>,
}

/// Build the masked grid over `B(0, r)` with `nodes_per_diameter` grid steps
/// across the diameter.
pub fn build_chart_domain(dim: usize, radius: f64, nodes_per_diameter: usize) -> Result<ChartDomain> {
    if !(2..=3).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if nodes_per_diameter < MIN_NODES_PER_DIAMETER {
        return Err(Error::ResolutionTooCoarse {
            got: nodes_per_diameter,
            min: MIN_NODES_PER_DIAMETER,
        });
    }
    ChartDomain::with_spacing(dim, radius, 2.0 * radius / nodes_per_diameter as f64)
}

impl ChartDomain {
    /// Grid with an explicit spacing; the diameter must still span at least
    /// [`MIN_NODES_PER_DIAMETER`] steps.
    pub fn with_spacing(dim: usize, radius: f64, spacing: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("radius", "must be positive"));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(invalid("spacing", "must be positive"));
        }
        let across = fmath::floor(2.0 * radius / spacing + 1e-9) as usize;
        if across < MIN_NODES_PER_DIAMETER {
            return Err(Error::ResolutionTooCoarse {
                got: across,
                min: MIN_NODES_PER_DIAMETER,
            });
        }
        let half = fmath::ceil(radius / spacing - 1e-9) as i32;
        let mut d = Self {
            dim,
            spacing,
            radius,
            half,
            origin: [0.0; 3],
            mask: Vec::new(),
        };
        let r2 = radius * radius * (1.0 + 1e-12);
        let mask = (0..d.len())
            .map(|i| {
                let x = d.coords(d.node_of(i));
                x[0] * x[0] + x[1] * x[1] + x[2] * x[2] <= r2
            })
            .collect();
        d.mask = mask;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn half(&self) -> i32 {
        self.half
    }
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// Nodes along one used axis.
    pub fn side(&self) -> usize {
        (2 * self.half + 1) as usize
    }

    /// Per-axis extent, `1` for unused axes.
    pub fn extent(&self) -> [usize; 3] {
        let s = self.side();
        [s, s, if self.dim == 3 { s } else { 1 }]
    }

    /// Total number of grid nodes (masked or not).
    pub fn len(&self) -> usize {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^n`, the Lebesgue measure of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        let mut v = 1.0;
        for _ in 0..self.dim {
            v *= self.spacing;
        }
        v
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn index(&self, node: Node) -> Option<usize> {
        let e = self.extent();
        let mut idx = 0usize;
        let mut stride = 1usize;
        for k in 0..3 {
            let off = if k < self.dim { self.half } else { 0 };
            let c = node[k] + off;
            if c < 0 || c as usize >= e[k] {
                return None;
            }
            idx += c as usize * stride;
            stride *= e[k];
        }
        Some(idx)
    }

    pub fn node_of(&self, index: usize) -> Node {
        let e = self.extent();
        let mut rem = index;
        let mut node = [0i32; 3];
        for k in 0..3 {
            let c = rem % e[k];
            rem /= e[k];
            node[k] = c as i32 - if k < self.dim { self.half } else { 0 };
        }
        node
    }

    pub fn coords(&self, node: Node) -> [f64; 3] {
        let mut x = self.origin;
        for k in 0..self.dim {
            x[k] += node[k] as f64 * self.spacing;
        }
        x
    }

    /// Nearest lattice node to a coordinate point.
    pub fn nearest_node(&self, x: &[f64]) -> Node {
        let mut node = [0i32; 3];
        for k in 0..self.dim {
            node[k] = fmath::round((x[k] - self.origin[k]) / self.spacing) as i32;
        }
        node
    }

    pub fn is_masked(&self, node: Node) -> bool {
        self.index(node).map(|i| self.mask[i]).unwrap_or(false)
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i)
    }

    /// Unit lattice step along axis `k`.
    pub fn axis(k: usize) -> Node {
        let mut e = [0; 3];
        e[k] = 1;
        e
    }

    /// Masked nodes whose full `±width` axis stencil is masked too.
    pub fn is_interior(&self, node: Node, width: i32) -> bool {
        if !self.is_masked(node) {
            return false;
        }
        for k in 0..self.dim {
            for d in 1..=width {
                let mut a = node;
                let mut b = node;
                a[k] += d;
                b[k] -= d;
                if !self.is_masked(a) || !self.is_masked(b) {
                    return false;
                }
            }
        }
        true
    }

    /// Euclidean distance (in coordinates) of a node to the chart boundary
    /// sphere.
    pub fn boundary_gap(&self, node: Node) -> f64 {
        let x = self.coords(node);
        self.radius - fmath::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    }
}

/// Axis-aligned box of lattice nodes, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub lo: Node,
    pub hi: Node,
}

impl BBox {
    pub fn point(node: Node) -> Self {
        Self { lo: node, hi: node }
    }

    pub fn around(node: Node, radius: i32, dim: usize) -> Self {
        let mut lo = node;
        let mut hi = node;
        for k in 0..dim {
            lo[k] -= radius;
            hi[k] += radius;
        }
        Self { lo, hi }
    }

    pub fn include(&mut self, node: Node) {
        for k in 0..3 {
            self.lo[k] = self.lo[k].min(node[k]);
            self.hi[k] = self.hi[k].max(node[k]);
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut b = *self;
        b.include(other.lo);
        b.include(other.hi);
        b
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let mut b = *self;
        for k in 0..3 {
            b.lo[k] = b.lo[k].max(other.lo[k]);
            b.hi[k] = b.hi[k].min(other.hi[k]);
            if b.lo[k] > b.hi[k] {
                return None;
            }
        }
        Some(b)
    }

    pub fn grow(&self, by: i32, dim: usize) -> Self {
        let mut b = *self;
        for k in 0..dim {
            b.lo[k] -= by;
            b.hi[k] += by;
        }
        b
    }

    pub fn extent(&self) -> [usize; 3] {
        [
            (self.hi[0] - self.lo[0] + 1) as usize,
            (self.hi[1] - self.lo[1] + 1) as usize,
            (self.hi[2] - self.lo[2] + 1) as usize,
        ]
    }

    pub fn len(&self) -> usize {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, node: Node) -> bool {
        (0..3).all(|k| node[k] >= self.lo[k] && node[k] <= self.hi[k])
    }

    /// Position of `node` in row-major (axis 0 fastest) box storage.
    #[inline]
    pub fn local(&self, node: Node) -> Option<usize> {
        if !self.contains(node) {
            return None;
        }
        let e = self.extent();
        Some(
            (node[0] - self.lo[0]) as usize
                + e[0] * ((node[1] - self.lo[1]) as usize + e[1] * (node[2] - self.lo[2]) as usize),
        )
    }

    pub fn node_at(&self, local: usize) -> Node {
        let e = self.extent();
        [
            self.lo[0] + (local % e[0]) as i32,
            self.lo[1] + ((local / e[0]) % e[1]) as i32,
            self.lo[2] + (local / (e[0] * e[1])) as i32,
        ]
    }

    /// Nodes in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.len()).map(move |i| self.node_at(i))
    }
}

pub(crate) fn add(a: Node, b: Node) -> Node {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
