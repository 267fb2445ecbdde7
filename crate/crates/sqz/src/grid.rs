//! Phase-space grids for Wigner functions.
//!
//! Grids live in quadrature coordinates (X, P) with vacuum variance 1/2; a
//! grid point maps to the field amplitude alpha = (X + iP)/sqrt(2). Values
//! are normalized over dX dP, so the vacuum peak is 1/pi and state overlaps
//! are 2 pi * sum(W1 * W2) * cell_area.

use ndarray::Array2;

use crate::{Error, Result};

/// Magnitude floor used to flag reconstruction defects. In the quadrature
/// convention |W| <= 1/pi for physical states, so anything below -2/pi is a
/// numerical artifact, never physics.
pub const WIGNER_DEFECT_FLOOR: f64 = -2.0 / std::f64::consts::PI;

/// Rectangular phase-space grid extents and sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub np: usize,
}

impl GridSpec {
    /// Symmetric square grid over [-extent, extent]^2 with n points per axis.
    pub fn square(extent: f64, n: usize) -> Self {
        GridSpec { x_min: -extent, x_max: extent, p_min: -extent, p_max: extent, nx: n, np: n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.np < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 points per axis, got {}x{}",
                self.nx, self.np
            )));
        }
        if !(self.x_max > self.x_min) || !(self.p_max > self.p_min) {
            return Err(Error::InvalidInput(
                "grid extents must satisfy x_max > x_min and p_max > p_min".into(),
            ));
        }
        for v in [self.x_min, self.x_max, self.p_min, self.p_max] {
            if !v.is_finite() {
                return Err(Error::InvalidInput("grid extents must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p_at(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }
}

/// Sampled Wigner function. `values[[i, j]]` is W(x_i, p_j).
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub values: Array2<f64>,
}

impl WignerGrid {
    pub fn new(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        spec.validate()?;
        if values.dim() != (spec.nx, spec.np) {
            return Err(Error::Data(format!(
                "value matrix {:?} does not match grid {}x{}",
                values.dim(),
                spec.nx,
                spec.np
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics("Wigner grid contains non-finite values".into()));
        }
        Ok(WignerGrid { spec, values })
    }

    pub fn cell_area(&self) -> f64 {
        self.spec.dx() * self.spec.dp()
    }

    /// Riemann-sum normalization; 1 for a well-resolved state.
    pub fn normalization(&self) -> f64 {
        crate::util::kahan_sum(self.values.iter().copied()) * self.cell_area()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Integral of |min(W, 0)|: the negativity volume.
    pub fn negativity_volume(&self) -> f64 {
        crate::util::kahan_sum(self.values.iter().map(|&v| if v < 0.0 { -v } else { 0.0 }))
            * self.cell_area()
    }

    /// Grid points below the defect floor, indicating reconstruction or
    /// series-evaluation artifacts.
    pub fn defect_count(&self) -> usize {
        self.values.iter().filter(|&&v| v < WIGNER_DEFECT_FLOOR - 1e-9).count()
    }

    /// State overlap 2 pi * sum(W_self * W_other) * cell_area on a shared grid.
    pub fn overlap(&self, other: &WignerGrid) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::InvalidInput(
                "overlap requires both Wigner functions on the same grid".into(),
            ));
        }
        let dot = crate::util::kahan_sum(
            self.values.iter().zip(other.values.iter()).map(|(a, b)| a * b),
        );
        Ok(2.0 * std::f64::consts::PI * dot * self.cell_area())
    }
}
