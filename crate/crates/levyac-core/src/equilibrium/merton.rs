//! Single-agent optimal investment with one jump source.
//!
//! A single stock follows geometric dynamics with drift `mu`, volatility
//! `sigma` and Poisson jumps of relative size `z` arriving at rate `lambda`;
//! cash earns the rate `r`.  For logarithmic and power utility the optimal
//! fraction of wealth in the stock is constant and the value function is
//! known in closed form, which makes this problem the canonical accuracy
//! benchmark for the neural solvers.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Market data for the single-agent problem.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MertonParams {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub z: f64,
}

impl MertonParams {
    pub fn new(mu: f64, r: f64, sigma: f64, lambda: f64, z: f64) -> Result<Self> {
        let values = [mu, r, sigma, lambda, z];
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("market parameters must be finite"));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidArgument("volatility must be positive"));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidArgument("jump intensity must be nonnegative"));
        }
        Ok(Self { mu, r, sigma, lambda, z })
    }

    /// Parameter set used throughout the numerical experiments.
    pub fn benchmark() -> Self {
        Self { mu: 0.05, r: 0.03, sigma: 0.4, lambda: 0.3, z: 0.2 }
    }
}

/// Preference choice for [`merton_value`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MertonUtility {
    /// `x^p / p` with relative risk tolerance `p` in `(0, 1)`.
    Power(f64),
    /// `ln x`.
    Log,
}

fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && 0.0 < p && p < 1.0) {
        return Err(Error::InvalidArgument(
            "relative risk tolerance must lie strictly between zero and one",
        ));
    }
    Ok(())
}

/// Optimal constant fraction under logarithmic utility.
///
/// The first-order condition reduces to the quadratic
/// `sigma^2 z u^2 + A u - (mu - r) = 0` with
/// `A = lambda z^2 - (mu - r) z + sigma^2`, whose relevant root keeps
/// `1 + z u` positive.  The root is evaluated in whichever of the two
/// equivalent forms avoids cancellation for the sign of `A` at hand.
pub fn merton_log_control(params: &MertonParams) -> Result<f64> {
    let MertonParams { mu, r, sigma, lambda, z } = *params;
    let excess = mu - r;
    let s2 = sigma * sigma;
    if z == 0.0 || lambda == 0.0 {
        return Ok(excess / s2);
    }
    let a = lambda * z * z - excess * z + s2;
    let disc = (a * a + 4.0 * s2 * z * excess).max(0.0);
    let root = disc.sqrt();
    let u = if a >= 0.0 { 2.0 * excess / (a + root) } else { (root - a) / (2.0 * s2 * z) };
    if !u.is_finite() {
        return Err(Error::NonFinite("optimal control"));
    }
    Ok(u)
}

/// First-order condition for the power-utility control; strictly decreasing
/// in `u` on the domain `1 + z u > 0`.
fn power_foc(u: f64, params: &MertonParams, p: f64) -> f64 {
    let MertonParams { mu, r, sigma, lambda, z } = *params;
    mu - r - (1.0 - p) * sigma * sigma * u + lambda * z * ((1.0 + z * u).powf(p - 1.0) - 1.0)
}

const POLE_OFFSET: f64 = 1e-12;
const EXPANSION_LIMIT: f64 = 1e18;

/// Optimal constant fraction under power utility `x^p / p`, found by
/// bisecting the strictly decreasing first-order condition.
pub fn merton_power_control(params: &MertonParams, p: f64) -> Result<f64> {
    check_power(p)?;
    let MertonParams { mu, r, sigma, z, .. } = *params;
    if z == 0.0 || params.lambda == 0.0 {
        return Ok((mu - r) / ((1.0 - p) * sigma * sigma));
    }
    let pole = -1.0 / z;
    let offset = POLE_OFFSET * pole.abs().max(1.0);
    let (mut lo, mut hi);
    if z > 0.0 {
        lo = pole + offset;
        hi = lo.max(0.0) + 1.0;
        while power_foc(hi, params, p) >= 0.0 {
            hi *= 2.0;
            if hi > EXPANSION_LIMIT {
                return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
            }
        }
    } else {
        hi = pole - offset;
        lo = hi.min(0.0) - 1.0;
        while power_foc(lo, params, p) <= 0.0 {
            lo *= 2.0;
            if lo < -EXPANSION_LIMIT {
                return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
            }
        }
    }
    let (f_lo, f_hi) = (power_foc(lo, params, p), power_foc(hi, params, p));
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: f_lo.abs().min(f_hi.abs()),
        });
    }
    let mut iterations = 0_usize;
    loop {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            break;
        }
        iterations += 1;
        if power_foc(mid, params, p) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = if power_foc(lo, params, p).abs() <= power_foc(hi, params, p).abs() { lo } else { hi };
    let residual = power_foc(u, params, p).abs();
    if residual > 1e-10 {
        return Err(Error::NoConvergence { iterations, residual });
    }
    Ok(u)
}

/// Growth exponent of the logarithmic value `v(t, x) = k (T - t) + ln x`.
pub fn merton_log_exponent(params: &MertonParams) -> Result<f64> {
    let u = merton_log_control(params)?;
    let MertonParams { mu, r, sigma, lambda, z } = *params;
    Ok(r + u * (mu - r) - 0.5 * sigma * sigma * u * u
        + lambda * ((1.0 + z * u).ln() - z * u))
}

/// Growth exponent of the power value `v(t, x) = e^{k (T - t)} x^p / p`.
pub fn merton_power_exponent(params: &MertonParams, p: f64) -> Result<f64> {
    let u = merton_power_control(params, p)?;
    let MertonParams { mu, r, sigma, lambda, z } = *params;
    Ok(p * (r + u * (mu - r)) - 0.5 * sigma * sigma * u * u * p * (1.0 - p)
        + lambda * ((1.0 + z * u).powf(p) - 1.0 - p * z * u))
}

/// Exact value function of the single-agent problem.
pub fn merton_value(
    t: f64,
    horizon: f64,
    x: f64,
    params: &MertonParams,
    utility: MertonUtility,
) -> Result<f64> {
    if !t.is_finite() || !horizon.is_finite() || t > horizon {
        return Err(Error::InvalidArgument(
            "evaluation time must be finite and within the horizon",
        ));
    }
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::OutOfDomain { index: 0 });
    }
    match utility {
        MertonUtility::Log => {
            let k = merton_log_exponent(params)?;
            Ok(k * (horizon - t) + x.ln())
        }
        MertonUtility::Power(p) => {
            check_power(p)?;
            let k = merton_power_exponent(params, p)?;
            Ok((k * (horizon - t)).exp() * x.powf(p) / p)
        }
    }
}
