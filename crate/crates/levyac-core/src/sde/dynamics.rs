use alloc::boxed::Box;

use crate::{Error, Result};

use super::measure::LevyMeasureSpec;

/// Coefficient functions of a controlled jump-diffusion in `R^d` with
/// controls in `R^{d_c}`.
///
/// The diffusion coefficient is given in applied form: `diffusion` writes
/// `sigma(x, u) w` for a noise increment `w`, which encodes the `d x d`
/// matrix as the linear map it induces. Coefficients are plain closures;
/// finiteness of their output is checked where they are consumed, with path
/// and step context attached.
pub struct ControlledDynamics {
    state_dim: usize,
    control_dim: usize,
    drift: Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>,
    diffusion: Box<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>,
    jump: Box<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>,
    measure: LevyMeasureSpec,
}

impl ControlledDynamics {
    /// `drift(x, u, out)` writes `b(x, u)`, `diffusion(x, u, w, out)` writes
    /// `sigma(x, u) w`, and `jump(x, z, u, out)` writes `G(x, z, u)`.
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        drift: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        jump: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        measure: LevyMeasureSpec,
    ) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(Error::InvalidArgument("state and control dims must be >= 1"));
        }
        measure.validate()?;
        Ok(ControlledDynamics {
            state_dim,
            control_dim,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            jump: Box::new(jump),
            measure,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn measure(&self) -> &LevyMeasureSpec {
        &self.measure
    }

    pub fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(x, u, out);
    }

    pub fn diffusion(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, u, w, out);
    }

    pub fn jump(&self, x: &[f64], z: &[f64], u: &[f64], out: &mut [f64]) {
        (self.jump)(x, z, u, out);
    }
}
