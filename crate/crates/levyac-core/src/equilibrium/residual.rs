//! First-order systems characterizing the constant equilibrium strategies.
//!
//! Each function returns the left-hand side of the coupled stationarity
//! system for the corresponding preference family; a strategy profile is an
//! equilibrium exactly when every entry vanishes.  Leave-one-out averages
//! such as `(1/n) sum_{k != i} pi_k sigma_k` are summed directly over
//! `k != i`, never recovered from a full-population mean.

use alloc::{vec, vec::Vec};

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use super::market::{MarketParams, UtilityKind, UtilitySpec};
use crate::{Error, Result};

fn check_profile(pi: &[f64], market: &MarketParams, utility: &UtilitySpec) -> Result<()> {
    utility.validate(market.n())?;
    if pi.len() != market.n() {
        return Err(Error::InvalidArgument(
            "strategy profile and market agent counts differ",
        ));
    }
    if !pi.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("strategy profile"));
    }
    Ok(())
}

/// Admissible interval `(lo, hi)` of one agent's strategy under proportional
/// wealth dynamics, i.e. where `1 + pi alpha > 0` and `1 + pi beta > 0`.
pub(super) fn agent_domain(alpha: f64, beta: f64) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for c in [alpha, beta] {
        if c > 0.0 {
            lo = lo.max(-1.0 / c);
        } else if c < 0.0 {
            hi = hi.min(-1.0 / c);
        }
    }
    (lo, hi)
}

fn check_domain(pi: &[f64], market: &MarketParams) -> Result<()> {
    for (k, (x, a)) in pi.iter().zip(market.agents()).enumerate() {
        if 1.0 + x * a.alpha <= 0.0 || 1.0 + x * a.beta <= 0.0 {
            return Err(Error::OutOfDomain { index: k });
        }
    }
    Ok(())
}

/// Leave-one-out average `(1/n) sum_{k != i} pi_k f(k)`.
fn hat(pi: &[f64], i: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..pi.len() {
        if k != i {
            acc += pi[k] * f(k);
        }
    }
    acc / pi.len() as f64
}

/// Geometric-mean factor `prod_{k != i} (1 + pi_k beta_k)^{1/n}`, computed in
/// log space; the caller guarantees every base is positive.
fn tilde_beta(pi: &[f64], i: usize, market: &MarketParams) -> f64 {
    let mut acc = 0.0;
    for k in 0..pi.len() {
        if k != i {
            acc += (1.0 + pi[k] * market.agent(k).beta).ln();
        }
    }
    (acc / pi.len() as f64).exp()
}

/// Stationarity system under exponential preferences.
pub fn residual_exponential(
    pi: &[f64],
    market: &MarketParams,
    utility: &UtilitySpec,
) -> Result<Vec<f64>> {
    let UtilitySpec::Exponential { delta, theta } = utility else {
        return Err(Error::InvalidArgument(
            "residual_exponential needs exponential preferences",
        ));
    };
    check_profile(pi, market, utility)?;
    let n = market.n() as f64;
    let lambda0 = market.lambda0();
    let mut out = Vec::with_capacity(pi.len());
    for i in 0..pi.len() {
        let a = market.agent(i);
        let (d, th) = (delta[i], theta[i]);
        let g = 1.0 - th / n;
        let hat_sigma = hat(pi, i, |k| market.agent(k).sigma);
        let hat_beta = hat(pi, i, |k| market.agent(k).beta);
        let e_beta = (-(g * pi[i] * a.beta - th * hat_beta) / d).exp();
        let e_alpha = (-g * pi[i] * a.alpha / d).exp();
        out.push(
            a.mu + a.sigma * th * hat_sigma / d
                - g * (a.nu * a.nu + a.sigma * a.sigma) * pi[i] / d
                + lambda0 * a.beta * (e_beta - 1.0)
                + a.lambda * a.alpha * (e_alpha - 1.0),
        );
    }
    Ok(out)
}

/// Stationarity system under power preferences; requires `1 + pi alpha > 0`
/// and `1 + pi beta > 0` for every agent.
pub fn residual_power(
    pi: &[f64],
    market: &MarketParams,
    utility: &UtilitySpec,
) -> Result<Vec<f64>> {
    let UtilitySpec::Power { p, theta } = utility else {
        return Err(Error::InvalidArgument(
            "residual_power needs power preferences",
        ));
    };
    check_profile(pi, market, utility)?;
    check_domain(pi, market)?;
    let n = market.n() as f64;
    let lambda0 = market.lambda0();
    let mut out = Vec::with_capacity(pi.len());
    for i in 0..pi.len() {
        let a = market.agent(i);
        let (pi_i, pw, th) = (pi[i], p[i], theta[i]);
        let q = pw * (1.0 - th / n);
        let hat_sigma = hat(pi, i, |k| market.agent(k).sigma);
        let tilde = tilde_beta(pi, i, market);
        let var = a.nu * a.nu + a.sigma * a.sigma;
        out.push(
            a.mu + var * (q - 1.0) * pi_i - pw * th * a.sigma * hat_sigma
                + a.lambda * a.alpha * ((1.0 + pi_i * a.alpha).powf(q - 1.0) - 1.0)
                + lambda0
                    * a.beta
                    * ((1.0 + pi_i * a.beta).powf(q - 1.0) / tilde.powf(pw * th) - 1.0),
        );
    }
    Ok(out)
}

/// Stationarity condition of a single agent under logarithmic preferences.
/// The system decouples: the root depends only on agent `i`'s coefficients
/// and the common jump intensity.
pub fn residual_log(pi_i: f64, agent: usize, market: &MarketParams) -> Result<f64> {
    if agent >= market.n() {
        return Err(Error::InvalidArgument("agent index out of range"));
    }
    if !pi_i.is_finite() {
        return Err(Error::NonFinite("strategy profile"));
    }
    let a = market.agent(agent);
    if 1.0 + pi_i * a.alpha <= 0.0 || 1.0 + pi_i * a.beta <= 0.0 {
        return Err(Error::OutOfDomain { index: agent });
    }
    Ok(a.mu - (a.nu * a.nu + a.sigma * a.sigma) * pi_i
        + a.lambda * a.alpha * (1.0 / (1.0 + pi_i * a.alpha) - 1.0)
        + market.lambda0() * a.beta * (1.0 / (1.0 + pi_i * a.beta) - 1.0))
}

/// Residual of the equilibrium system for the given preference family.
pub fn residual(pi: &[f64], market: &MarketParams, utility: &UtilitySpec) -> Result<Vec<f64>> {
    match utility.kind() {
        UtilityKind::Exponential => residual_exponential(pi, market, utility),
        UtilityKind::Power => residual_power(pi, market, utility),
        UtilityKind::Logarithmic => {
            check_profile(pi, market, utility)?;
            pi.iter()
                .enumerate()
                .map(|(i, &x)| residual_log(x, i, market))
                .collect()
        }
    }
}

/// Row-major Jacobian of [`residual`] with respect to the strategy profile.
pub fn residual_jacobian(
    pi: &[f64],
    market: &MarketParams,
    utility: &UtilitySpec,
) -> Result<Vec<f64>> {
    check_profile(pi, market, utility)?;
    let n = market.n();
    let nf = n as f64;
    let lambda0 = market.lambda0();
    let mut jac = vec![0.0; n * n];
    match utility {
        UtilitySpec::Exponential { delta, theta } => {
            for i in 0..n {
                let a = market.agent(i);
                let (d, th) = (delta[i], theta[i]);
                let g = 1.0 - th / nf;
                let hat_beta = hat(pi, i, |k| market.agent(k).beta);
                let e_beta = (-(g * pi[i] * a.beta - th * hat_beta) / d).exp();
                let e_alpha = (-g * pi[i] * a.alpha / d).exp();
                for j in 0..n {
                    let bj = market.agent(j);
                    jac[i * n + j] = if j == i {
                        -(g / d)
                            * (a.nu * a.nu
                                + a.sigma * a.sigma
                                + lambda0 * a.beta * a.beta * e_beta
                                + a.lambda * a.alpha * a.alpha * e_alpha)
                    } else {
                        th * a.sigma * bj.sigma / (nf * d)
                            + lambda0 * th * a.beta * bj.beta * e_beta / (nf * d)
                    };
                }
            }
        }
        UtilitySpec::Power { p, theta } => {
            check_domain(pi, market)?;
            for i in 0..n {
                let a = market.agent(i);
                let (pw, th) = (p[i], theta[i]);
                let q = pw * (1.0 - th / nf);
                let tilde_pow = tilde_beta(pi, i, market).powf(pw * th);
                let var = a.nu * a.nu + a.sigma * a.sigma;
                for j in 0..n {
                    let bj = market.agent(j);
                    jac[i * n + j] = if j == i {
                        (q - 1.0)
                            * (var
                                + a.lambda
                                    * a.alpha
                                    * a.alpha
                                    * (1.0 + pi[i] * a.alpha).powf(q - 2.0)
                                + lambda0 * a.beta * a.beta * (1.0 + pi[i] * a.beta).powf(q - 2.0)
                                    / tilde_pow)
                    } else {
                        -pw * th * a.sigma * bj.sigma / nf
                            - lambda0 * pw * th / nf * a.beta * bj.beta
                                / (1.0 + pi[j] * bj.beta)
                                * (1.0 + pi[i] * a.beta).powf(q - 1.0)
                                / tilde_pow
                    };
                }
            }
        }
        UtilitySpec::Logarithmic { .. } => {
            for i in 0..n {
                let a = market.agent(i);
                if 1.0 + pi[i] * a.alpha <= 0.0 || 1.0 + pi[i] * a.beta <= 0.0 {
                    return Err(Error::OutOfDomain { index: i });
                }
                let da = 1.0 + pi[i] * a.alpha;
                let db = 1.0 + pi[i] * a.beta;
                jac[i * n + i] = -(a.nu * a.nu + a.sigma * a.sigma)
                    - a.lambda * a.alpha * a.alpha / (da * da)
                    - lambda0 * a.beta * a.beta / (db * db);
            }
        }
    }
    Ok(jac)
}
