//! Uniform tensor grids for symmetric reductions.
//!
//! Backgrounds are either genuinely one-dimensional after symmetric reduction
//! (an interval in `x`, `θ` or `ρ`, with a transverse volume-element weight
//! `ω` carrying the unreduced directions) or a flat two-dimensional
//! rectangle. Node order is x-fastest row-major for rectangles.

use alloc::vec::Vec;

/// Grid flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Interval with a reduction weight `ω(x)`; may carry a symmetry axis at
    /// the left end (pole of a cap or ball).
    Weighted1d,
    /// Flat rectangle `[0, Lx] × [0, Ly]`, `ω ≡ 1`.
    FlatRectangle,
}

/// Role of a node with respect to boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Interior,
    /// The flow's Neumann condition applies here.
    Boundary,
    /// Symmetry axis (ω = 0): regularity, not a boundary condition.
    Axis,
}

/// Discrete grid: extents, spacing, per-node reduction weight and role tags.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub kind: GridKind,
    /// Nodes per axis; `[n, 1]` for 1-d grids.
    pub shape: [usize; 2],
    /// Coordinate intervals per axis; the second is `[0, 0]` for 1-d grids.
    pub extents: [[f64; 2]; 2],
    /// Uniform spacing per axis (second entry 0 for 1-d grids).
    pub spacing: [f64; 2],
    /// Reduction weight ω at each node (1 on flat backgrounds).
    pub omega: Vec<f64>,
    /// Role tag at each node.
    pub roles: Vec<NodeRole>,
}

impl GridSpec {
    pub fn node_count(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    /// Flattened index of `(ix, iy)` (x-fastest).
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.shape[0] + ix
    }

    /// Coordinates of node `i`.
    pub fn coord(&self, i: usize) -> [f64; 2] {
        let nx = self.shape[0];
        let (ix, iy) = (i % nx, i / nx);
        [
            self.extents[0][0] + self.spacing[0] * ix as f64,
            self.extents[1][0] + self.spacing[1] * iy as f64,
        ]
    }

    pub fn is_1d(&self) -> bool {
        self.shape[1] == 1
    }
}
