//! Uniform time grids.

use crate::{Error, Result};

/// Uniform grid with `steps` intervals of length `dt` on `[0, horizon]`,
/// nodes `t_n = n * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidArgument("horizon must be positive and finite"));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("grid needs at least one step"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_n = n * dt`; `node(steps)` is the horizon up to rounding.
    pub fn node(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}
