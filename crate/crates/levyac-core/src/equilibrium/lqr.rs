//! Linear-quadratic control with jumps, solved in closed form.
//!
//! The state follows `dX = u dt + sigma dB + z dM` where `sigma` is
//! `sigma0` times a lower bidiagonal matrix of ones whose last diagonal
//! entry is zero, `z` is diagonal and `M` collects independent compensated
//! Poisson processes.  Costs are `q |u|^2 + b |x|^2` along the path and
//! `a |x|^2` at the horizon.  The value function is
//! `P(t) |x|^2 + phi(t) * noise_trace` with scalar Riccati coefficients
//! known explicitly, which makes the problem a benchmark with an exact
//! answer in arbitrary dimension.

extern crate alloc;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Cost and noise data for the linear-quadratic benchmark.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LqrParams {
    dim: usize,
    sigma0: f64,
    jump_sizes: Vec<f64>,
    intensities: Vec<f64>,
    a: f64,
    b: f64,
    q: f64,
}

impl LqrParams {
    pub fn new(
        dim: usize,
        sigma0: f64,
        jump_sizes: Vec<f64>,
        intensities: Vec<f64>,
        a: f64,
        b: f64,
        q: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive"));
        }
        if jump_sizes.len() != dim || intensities.len() != dim {
            return Err(Error::InvalidArgument(
                "jump sizes and intensities must have one entry per dimension",
            ));
        }
        if !sigma0.is_finite() || sigma0 < 0.0 {
            return Err(Error::InvalidArgument(
                "diffusion scale must be finite and nonnegative",
            ));
        }
        if !jump_sizes.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("jump sizes"));
        }
        if !intensities.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidArgument("jump intensities must be nonnegative"));
        }
        if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0 && q.is_finite() && q > 0.0)
        {
            return Err(Error::InvalidArgument("cost weights must be positive"));
        }
        Ok(Self { dim, sigma0, jump_sizes, intensities, a, b, q })
    }

    /// Parameter set used in the numerical experiments, with jump sizes
    /// ramping down and intensities ramping up across coordinates.
    pub fn benchmark(dim: usize) -> Result<Self> {
        let frac = |i: usize| {
            if dim <= 1 { 0.0 } else { i as f64 / (dim - 1) as f64 }
        };
        let jump_sizes = (0..dim).map(|i| 0.3 - 0.1 * frac(i)).collect();
        let intensities = (0..dim).map(|i| 0.2 + 0.1 * frac(i)).collect();
        Self::new(dim, 0.4, jump_sizes, intensities, 1.0, 0.1, 5.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn jump_sizes(&self) -> &[f64] {
        &self.jump_sizes
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn terminal_weight(&self) -> f64 {
        self.a
    }

    pub fn state_weight(&self) -> f64 {
        self.b
    }

    pub fn control_weight(&self) -> f64 {
        self.q
    }

    /// Row-major diffusion matrix: `sigma0` on the diagonal and first
    /// subdiagonal, except the last diagonal entry which is zero.
    pub fn diffusion_matrix(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            if i + 1 < d {
                m[i * d + i] = self.sigma0;
            }
            if i > 0 {
                m[i * d + i - 1] = self.sigma0;
            }
        }
        m
    }

    /// `Tr(sigma sigma^T) + sum_i lambda_i z_i^2`, the constant forcing the
    /// state-independent part of the value.
    pub fn noise_trace(&self) -> f64 {
        let diffusion = (2 * self.dim - 2) as f64 * self.sigma0 * self.sigma0;
        let jumps: f64 = self
            .jump_sizes
            .iter()
            .zip(&self.intensities)
            .map(|(z, l)| l * z * z)
            .sum();
        diffusion + jumps
    }

    fn check_ttm(ttm: f64) -> Result<()> {
        if !ttm.is_finite() || ttm < 0.0 {
            return Err(Error::InvalidArgument(
                "time to maturity must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    /// Riccati coefficient `P` at time to maturity `ttm`.
    pub fn quadratic_coeff(&self, ttm: f64) -> Result<f64> {
        Self::check_ttm(ttm)?;
        let (a, b, q) = (self.a, self.b, self.q);
        let s = (b * q).sqrt();
        let rho = 2.0 * (b / q).sqrt();
        Ok(s * (-1.0 + 2.0 * (s + a) / ((s - a) * (-rho * ttm).exp() + s + a)))
    }

    /// Time integral of `P` over `[0, ttm]`, written so the horizon can be
    /// large without overflowing the exponential.
    pub fn constant_coeff(&self, ttm: f64) -> Result<f64> {
        Self::check_ttm(ttm)?;
        let (a, b, q) = (self.a, self.b, self.q);
        let s = (b * q).sqrt();
        let rho = 2.0 * (b / q).sqrt();
        Ok(s * ttm + q * ((s + a + (s - a) * (-rho * ttm).exp()) / (2.0 * s)).ln())
    }
}

fn check_state(t: f64, horizon: f64, x: &[f64], params: &LqrParams) -> Result<()> {
    if !t.is_finite() || !horizon.is_finite() || t > horizon {
        return Err(Error::InvalidArgument(
            "evaluation time must be finite and within the horizon",
        ));
    }
    if x.len() != params.dim {
        return Err(Error::InvalidArgument("state and parameter dimensions differ"));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("state vector"));
    }
    Ok(())
}

/// Exact value `P(T - t) |x|^2 + phi(T - t) * noise_trace`.
pub fn lqr_value(t: f64, horizon: f64, x: &[f64], params: &LqrParams) -> Result<f64> {
    check_state(t, horizon, x, params)?;
    let ttm = horizon - t;
    let p = params.quadratic_coeff(ttm)?;
    let phi = params.constant_coeff(ttm)?;
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    Ok(p * norm2 + phi * params.noise_trace())
}

/// Optimal feedback control `-(P(T - t) / q) x`.
pub fn lqr_control(t: f64, horizon: f64, x: &[f64], params: &LqrParams) -> Result<Vec<f64>> {
    check_state(t, horizon, x, params)?;
    let p = params.quadratic_coeff(horizon - t)?;
    Ok(x.iter().map(|v| -(p / params.q) * v).collect())
}
