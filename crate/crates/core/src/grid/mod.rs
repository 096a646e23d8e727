//! Uniform phase-space grid and the field kernels built on it.
//!
//! Nodes sit at `x_i = x_min + i·dx` for `i = 0..nx` (and likewise in `p`),
//! so the grid is periodic with period `x_max - x_min`. All spectral
//! operations rely on that periodic continuation; fields of interest are
//! assumed negligible near the boundary.

pub(crate) mod derivative;
mod field;
mod interp;
pub mod io;

pub use derivative::{partial_derivative, DerivativeScheme};
pub use field::{integrate, ScalarField, VectorField};
pub use interp::{sample_displaced, sample_point, CubicSampler};

use crate::error::{Result, WflowError};
use serde::{Deserialize, Serialize};

/// Minimum number of nodes per axis.
pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    x_min: f64,
    x_max: f64,
    p_min: f64,
    p_max: f64,
    nx: usize,
    np: usize,
}

impl PhaseGrid {
    /// Builds a grid over `x_range × p_range` with `nx × np` nodes.
    pub fn new(x_range: (f64, f64), p_range: (f64, f64), nx: usize, np: usize) -> Result<Self> {
        let (x_min, x_max) = x_range;
        let (p_min, p_max) = p_range;
        for (name, lo, hi) in [("x", x_min, x_max), ("p", p_min, p_max)] {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(WflowError::InvalidGrid(format!("{name} range is not finite")));
            }
            if hi <= lo {
                return Err(WflowError::InvalidGrid(format!("empty {name} extent [{lo}, {hi}]")));
            }
        }
        if nx < MIN_NODES || np < MIN_NODES {
            return Err(WflowError::InvalidGrid(format!(
                "grid {nx}x{np} is smaller than the minimum {MIN_NODES}x{MIN_NODES}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            p_min,
            p_max,
            nx,
            np,
        })
    }

    /// 256×256 nodes over `[-6, 6]²`.
    pub fn default_grid() -> Self {
        Self::new((-6.0, 6.0), (-6.0, 6.0), 256, 256).expect("default grid is valid")
    }

    /// Square grid `[-half_width, half_width]²` with `n` nodes per axis.
    pub fn square(half_width: f64, n: usize) -> Result<Self> {
        Self::new((-half_width, half_width), (-half_width, half_width), n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.np)
    }

    pub fn len(&self) -> usize {
        self.nx * self.np
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub fn p_range(&self) -> (f64, f64) {
        (self.p_min, self.p_max)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.np as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ps(&self) -> Vec<f64> {
        (0..self.np).map(|j| self.p(j)).collect()
    }

    pub fn nodes(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::P => self.np,
        }
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.dx(),
            Axis::P => self.dp(),
        }
    }

    /// Nearest node index to `(x, p)`, clamped to the grid.
    pub fn nearest(&self, x: f64, p: f64) -> (usize, usize) {
        let i = ((x - self.x_min) / self.dx()).round().clamp(0.0, (self.nx - 1) as f64);
        let j = ((p - self.p_min) / self.dp()).round().clamp(0.0, (self.np - 1) as f64);
        (i as usize, j as usize)
    }

    /// Whether `(x, p)` lies within the span of grid nodes.
    pub fn contains(&self, x: f64, p: f64) -> bool {
        x >= self.x_min && x <= self.x(self.nx - 1) && p >= self.p_min && p <= self.p(self.np - 1)
    }

    /// Two grids are compatible when they describe the same nodes.
    pub fn same_as(&self, other: &PhaseGrid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.nx == other.nx
            && self.np == other.np
            && close(self.x_min, other.x_min)
            && close(self.x_max, other.x_max)
            && close(self.p_min, other.p_min)
            && close(self.p_max, other.p_max)
    }

    pub fn ensure_same(&self, other: &PhaseGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(WflowError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}
