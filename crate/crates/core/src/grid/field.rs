use super::{Axis, PhaseGrid};
use crate::error::Result;
use ndarray::{Array2, Zip};

/// Real-valued function sampled on a [`PhaseGrid`], stored row-major by `x`.
///
/// `mask`, when present, marks entries whose value is undefined or capped.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PhaseGrid,
    values: Array2<f64>,
    mask: Option<Array2<bool>>,
}

impl ScalarField {
    pub fn new(grid: PhaseGrid, values: Array2<f64>) -> Self {
        assert_eq!(values.dim(), grid.shape(), "field shape must match grid");
        Self {
            grid,
            values,
            mask: None,
        }
    }

    pub fn with_mask(grid: PhaseGrid, values: Array2<f64>, mask: Array2<bool>) -> Self {
        assert_eq!(values.dim(), grid.shape(), "field shape must match grid");
        assert_eq!(mask.dim(), grid.shape(), "mask shape must match grid");
        let mask = if mask.iter().any(|&m| m) { Some(mask) } else { None };
        Self { grid, values, mask }
    }

    pub fn zeros(grid: PhaseGrid) -> Self {
        Self::new(grid, Array2::zeros(grid.shape()))
    }

    pub fn constant(grid: PhaseGrid, value: f64) -> Self {
        Self::new(grid, Array2::from_elem(grid.shape(), value))
    }

    /// Evaluates `f(x, p)` at every node.
    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.xs();
        let ps = grid.ps();
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| f(xs[i], ps[j]));
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn mask(&self) -> Option<&Array2<bool>> {
        self.mask.as_ref()
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m[[i, j]])
    }

    pub fn masked_count(&self) -> usize {
        self.mask.as_ref().map_or(0, |m| m.iter().filter(|&&b| b).count())
    }

    pub fn set_mask(&mut self, mask: Option<Array2<bool>>) {
        if let Some(m) = &mask {
            assert_eq!(m.dim(), self.grid.shape());
        }
        self.mask = mask.filter(|m| m.iter().any(|&b| b));
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(f),
            mask: self.mask.clone(),
        }
    }

    /// Pointwise `f(x, p, value)`.
    pub fn map_with_coords(&self, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let xs = self.grid.xs();
        let ps = self.grid.ps();
        let mut values = self.values.clone();
        values
            .indexed_iter_mut()
            .for_each(|((i, j), v)| *v = f(xs[i], ps[j], *v));
        Self {
            grid: self.grid,
            values,
            mask: self.mask.clone(),
        }
    }

    /// Pointwise combination with a field on the same grid; masks are merged.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let mut values = self.values.clone();
        Zip::from(&mut values)
            .and(&other.values)
            .for_each(|a, &b| *a = f(*a, b));
        let mask = merge_masks(self.mask.as_ref(), other.mask.as_ref());
        Ok(Self {
            grid: self.grid,
            values,
            mask,
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Position and value of the maximum entry.
    pub fn argmax(&self) -> ((usize, usize), f64) {
        let mut best = ((0, 0), f64::NEG_INFINITY);
        for ((i, j), &v) in self.values.indexed_iter() {
            if v > best.1 {
                best = ((i, j), v);
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Marginal `∫ W dp` (for `Axis::P`) or `∫ W dx` (for `Axis::X`).
    pub fn marginal(&self, over: Axis) -> Vec<f64> {
        match over {
            Axis::P => self
                .values
                .rows()
                .into_iter()
                .map(|r| r.iter().sum::<f64>() * self.grid.dp())
                .collect(),
            Axis::X => self
                .values
                .columns()
                .into_iter()
                .map(|c| c.iter().sum::<f64>() * self.grid.dx())
                .collect(),
        }
    }
}

pub(crate) fn merge_masks(a: Option<&Array2<bool>>, b: Option<&Array2<bool>>) -> Option<Array2<bool>> {
    match (a, b) {
        (None, None) => None,
        (Some(m), None) | (None, Some(m)) => Some(m.clone()),
        (Some(m), Some(n)) => {
            let mut out = m.clone();
            Zip::from(&mut out).and(n).for_each(|o, &v| *o |= v);
            Some(out)
        }
    }
}

/// Pair of fields `(x_component, p_component)` with a per-node singularity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x_component: ScalarField,
    pub p_component: ScalarField,
    pub singular_mask: Array2<bool>,
}

impl VectorField {
    pub fn new(x_component: ScalarField, p_component: ScalarField) -> Result<Self> {
        x_component.grid().ensure_same(p_component.grid())?;
        let singular_mask = Array2::from_elem(x_component.grid().shape(), false);
        Ok(Self {
            x_component,
            p_component,
            singular_mask,
        })
    }

    pub fn with_mask(x_component: ScalarField, p_component: ScalarField, singular_mask: Array2<bool>) -> Result<Self> {
        let mut v = Self::new(x_component, p_component)?;
        assert_eq!(singular_mask.dim(), v.grid().shape());
        v.singular_mask = singular_mask;
        Ok(v)
    }

    /// Uniform field `(a, b)`.
    pub fn uniform(grid: PhaseGrid, a: f64, b: f64) -> Self {
        Self::new(ScalarField::constant(grid, a), ScalarField::constant(grid, b)).expect("components share the grid")
    }

    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let x = ScalarField::from_fn(grid, |x, p| f(x, p).0);
        let p = ScalarField::from_fn(grid, |x, p| f(x, p).1);
        Self::new(x, p).expect("components share the grid")
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.x_component.grid()
    }

    pub fn is_singular(&self, i: usize, j: usize) -> bool {
        self.singular_mask[[i, j]]
    }

    pub fn singular_count(&self) -> usize {
        self.singular_mask.iter().filter(|&&b| b).count()
    }

    pub fn has_singular(&self) -> bool {
        self.singular_mask.iter().any(|&b| b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            x_component: self.x_component.scale(s),
            p_component: self.p_component.scale(s),
            singular_mask: self.singular_mask.clone(),
        }
    }

    /// Largest component magnitude over the grid.
    pub fn max_abs(&self) -> f64 {
        self.x_component.max_abs().max(self.p_component.max_abs())
    }
}

/// `∬ f dx dp` by the trapezoidal rule on the periodic grid.
///
/// With periodic continuation each node carries the full weight `dx·dp`.
pub fn integrate(field: &ScalarField) -> f64 {
    let g = field.grid();
    let mut total = 0.0;
    for row in field.values().rows() {
        total += row.iter().sum::<f64>();
    }
    total * g.dx() * g.dp()
}
