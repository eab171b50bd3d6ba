use std::ops::{Deref, Index};

use crate::error::{Error, Result};

/// Finite nodal values, one per interior node.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GridFunction(Vec<f64>);

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "grid function value at node {i} is not finite: {}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::new(vec![c; n]).expect("finite constant")
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Clamps every value to `[-k, k]`.
    pub fn truncate(&self, k: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return Err(Error::Argument(format!("truncation level must be >= 0, got {k}")));
        }
        Ok(Self(self.0.iter().map(|&v| truncate_scalar(v, k)).collect()))
    }
}

impl Deref for GridFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for GridFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `T_k(s) = max(-k, min(s, k))`.
pub fn truncate_scalar(s: f64, k: f64) -> f64 {
    (-k).max(s.min(k))
}

/// Nodal values in `[-∞, ∞)`: the discrete obstacle. `-∞` marks an
/// unconstrained node.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedGridFunction(Vec<f64>);

impl ExtendedGridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values
            .iter()
            .position(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::Feasibility(format!(
                "obstacle value at node {i} is {}; +inf and NaN are not admissible",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn unconstrained(n: usize) -> Self {
        Self(vec![f64::NEG_INFINITY; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite_at(&self, i: usize) -> bool {
        self.0[i].is_finite()
    }

    /// Largest finite value, or `-∞` if every node is unconstrained.
    pub fn max_finite(&self) -> f64 {
        self.0
            .iter()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn max_abs_finite(&self) -> f64 {
        self.0
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Nodewise minimum with another obstacle.
    pub fn min(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a.min(*b)).collect())
    }

    /// Shifts every finite value by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }
}

impl From<GridFunction> for ExtendedGridFunction {
    fn from(g: GridFunction) -> Self {
        Self(g.0)
    }
}

impl Deref for ExtendedGridFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}
