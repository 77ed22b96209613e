//! Geometric quantiles.
//!
//! For a direction `u` in the open unit ball, the `u`-th geometric quantile of
//! a law `P` on `R^k` minimises `E_P[ ||Y - q|| + <u, Y - q> ]` over `q`. At
//! `u = 0` it is the spatial median. This module holds the objective, a
//! Weiszfeld-type solver for weighted point clouds, and two evaluators for
//! the quantile of an isotropic Gaussian mixture: Monte Carlo (any `k`) and a
//! polar/Bessel reduction (`k = 2`).

mod bessel;
mod mixture;
mod weiszfeld;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bessel::{bessel_i0, bessel_i0e, I0_SERIES_CUTOFF};
pub use mixture::{
    expected_gaussian_norm_2d, grid_argmin, mixture_quantile_mc, mixture_quantile_mc_grid, mixture_quantile_polar,
    polar_objective, refine_grid_argmin, MixtureSpec, POLAR_HALF_WINDOW,
};
pub use weiszfeld::{
    empirical_geometric_quantile, quantile_objective, weighted_geometric_quantile, Cloud, WeiszfeldSolution,
};

/// A direction `u` with `||u||_2 < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::EmptyInput("direction"));
        }
        let norm = norm2(&u);
        if !norm.is_finite() || norm >= 1.0 {
            return Err(Error::InvalidDirection(norm));
        }
        Ok(Self(u))
    }

    /// The spatial-median direction in `R^k`.
    pub fn zero(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = Error;

    fn try_from(u: Vec<f64>) -> Result<Self> {
        Self::new(u)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.0
    }
}

/// Numerical knobs shared by the quantile solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stop once an iterate moves less than this (Euclidean).
    pub tol: f64,
    pub max_iter: usize,
    /// Monte Carlo sample size `R` for mixture quantiles.
    pub mc_samples: usize,
    /// Upper limit of the radial quadrature; `None` derives it from the grid.
    pub quadrature_rmax: Option<f64>,
    /// Simpson nodes per radial integral (rounded up to odd).
    pub quadrature_points: usize,
    /// Search box for grid minimisation; `None` derives it from the mixture.
    pub grid_bounds: Option<Vec<(f64, f64)>>,
    pub grid_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 5000,
            mc_samples: 10_000,
            quadrature_rmax: None,
            quadrature_points: 801,
            grid_bounds: None,
            grid_step: 1e-2,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.mc_samples == 0 || self.quadrature_points < 3 {
            return Err(Error::InvalidArgument("max_iter and mc_samples must be >= 1, quadrature_points >= 3".into()));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::InvalidArgument(format!("grid_step must be > 0, got {}", self.grid_step)));
        }
        if let Some(r) = self.quadrature_rmax {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("quadrature_rmax must be > 0, got {r}")));
            }
        }
        if let Some(b) = &self.grid_bounds {
            if b.iter().any(|(lo, hi)| !(lo < hi)) {
                return Err(Error::InvalidArgument("grid bounds must satisfy lo < hi".into()));
            }
        }
        Ok(())
    }
}

/// `Phi(u, t) = ||t||_2 + <u, t>`.
pub fn phi(u: &[f64], t: &[f64]) -> Result<f64> {
    if u.len() != t.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: t.len() });
    }
    Ok(norm2(t) + dot(u, t))
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
