//! Residual-network function approximators with hand-rolled reverse-mode
//! and forward-over-reverse derivatives.
//!
//! The networks are small (widths around the state dimension plus ten), so
//! everything works on flat `f64` slices with caches owned by the caller;
//! no allocation happens inside the hot evaluation and backprop paths.

mod adam;
mod resnet;
mod snapshot;

pub use adam::AdamState;
pub use resnet::{Cache, DualCache, ResNet};
pub use snapshot::ParameterSnapshot;

/// Stage boundaries of the piecewise-constant learning-rate schedule:
/// `rates[0]` for the first 60% of iterations, `rates[1]` for the next 20%,
/// `rates[2]` for the rest. Stage ends are `ceil(0.6 total)` and
/// `ceil(0.8 total)`, computed in integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub rates: [f64; 3],
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            rates: [1e-3, 1e-4, 1e-5],
        }
    }
}

impl LrSchedule {
    /// Learning rate for `iteration` (0-based) out of `total`.
    pub fn at(&self, iteration: usize, total: usize) -> f64 {
        let first = (3 * total).div_ceil(5);
        let second = (4 * total).div_ceil(5);
        if iteration < first {
            self.rates[0]
        } else if iteration < second {
            self.rates[1]
        } else {
            self.rates[2]
        }
    }
}

/// Schedule lookup with the standard rates `1e-3, 1e-4, 1e-5`.
pub fn lr_schedule(iteration: usize, total: usize) -> f64 {
    LrSchedule::default().at(iteration, total)
}
