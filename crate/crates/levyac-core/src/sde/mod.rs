//! Euler simulation of controlled jump-diffusions.
//!
//! State dynamics follow
//! `dX = b(X, u) dt + sigma(X, u) dW + integral of G(X, z, u) compensated
//! jump noise`, discretized one interval at a time with compensated
//! compound-Poisson jumps: realized marks enter through `G`, and the
//! compensator `sum_k lambda_k G(x, z_k, u)` is subtracted as an extra
//! drift.

mod dynamics;
mod euler;
mod measure;
mod panel;

pub use dynamics::ControlledDynamics;
pub use euler::{compensator_drift, euler_step, simulate_batch, PathBatch};
pub use measure::{
    CompensatorIntegral, CompoundPoissonSource, ExternalMeasure, IntervalSampler, LevyMeasureSpec,
    MarkSampler, MarkSpec,
};
pub use panel::{JumpPanel, MarkIter, NoisePanel};
