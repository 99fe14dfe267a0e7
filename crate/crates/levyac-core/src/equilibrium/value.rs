//! Exact value functions along a constant equilibrium.
//!
//! Agent `i`'s value separates into a time factor and a reduced terminal
//! utility of `(x_i, y_i)`, where `y_i` aggregates the other agents'
//! wealths: their arithmetic average under exponential preferences and the
//! `1/n`-power product under power and logarithmic preferences.  The time
//! factor is `exp(k (T - t))` (or an additive `k (T - t)` in the
//! logarithmic case) with a growth exponent `k` determined by the market and
//! the strategy profile.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use super::market::{MarketParams, UtilityKind, UtilitySpec};
use crate::{Error, Result};

fn check_inputs(
    wealths: &[f64],
    agent: usize,
    market: &MarketParams,
    utility: &UtilitySpec,
    pi: &[f64],
) -> Result<()> {
    utility.validate(market.n())?;
    if agent >= market.n() {
        return Err(Error::InvalidArgument("agent index out of range"));
    }
    if wealths.len() != market.n() || pi.len() != market.n() {
        return Err(Error::InvalidArgument(
            "wealth and strategy vectors must have one entry per agent",
        ));
    }
    if !wealths.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("wealth vector"));
    }
    if !pi.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("strategy profile"));
    }
    if utility.kind() != UtilityKind::Exponential {
        for (k, &x) in wealths.iter().enumerate() {
            if x <= 0.0 {
                return Err(Error::OutOfDomain { index: k });
            }
        }
    }
    Ok(())
}

fn check_strategy_domain(pi: &[f64], market: &MarketParams) -> Result<()> {
    for (k, (x, a)) in pi.iter().zip(market.agents()).enumerate() {
        if 1.0 + x * a.alpha <= 0.0 || 1.0 + x * a.beta <= 0.0 {
            return Err(Error::OutOfDomain { index: k });
        }
    }
    Ok(())
}

struct LeaveOneOut {
    pi_mu: f64,
    pi_sigma: f64,
    pi_beta: f64,
    pi2_nu2: f64,
    pi2_sigma2: f64,
    /// `prod_{k != i} (1 + pi_k beta_k)^{1/n}`; only valid after the
    /// strategy domain check.
    tilde_beta: f64,
}

fn leave_one_out(pi: &[f64], i: usize, market: &MarketParams) -> LeaveOneOut {
    let n = pi.len() as f64;
    let mut out = LeaveOneOut {
        pi_mu: 0.0,
        pi_sigma: 0.0,
        pi_beta: 0.0,
        pi2_nu2: 0.0,
        pi2_sigma2: 0.0,
        tilde_beta: 0.0,
    };
    let mut log_tilde = 0.0;
    for k in 0..pi.len() {
        if k == i {
            continue;
        }
        let a = market.agent(k);
        out.pi_mu += pi[k] * a.mu;
        out.pi_sigma += pi[k] * a.sigma;
        out.pi_beta += pi[k] * a.beta;
        out.pi2_nu2 += pi[k] * pi[k] * a.nu * a.nu;
        out.pi2_sigma2 += pi[k] * pi[k] * a.sigma * a.sigma;
        log_tilde += (1.0 + pi[k] * a.beta).ln();
    }
    out.pi_mu /= n;
    out.pi_sigma /= n;
    out.pi_beta /= n;
    out.pi2_nu2 /= n;
    out.pi2_sigma2 /= n;
    out.tilde_beta = (log_tilde / n).exp();
    out
}

/// Drift rate of the `1/n`-power product of the other agents' wealths under
/// proportional dynamics.
fn eta(pi: &[f64], i: usize, market: &MarketParams, loo: &LeaveOneOut) -> f64 {
    let n = pi.len() as f64;
    let mut jumps = 0.0;
    for k in 0..pi.len() {
        if k == i {
            continue;
        }
        let a = market.agent(k);
        let base = 1.0 + pi[k] * a.alpha;
        jumps += a.lambda * (base.powf(1.0 / n) - 1.0 - pi[k] * a.alpha / n);
    }
    loo.pi_mu - 0.5 * (loo.pi2_nu2 + loo.pi2_sigma2)
        + 0.5 * (loo.pi2_nu2 / n + loo.pi_sigma * loo.pi_sigma)
        + jumps
        + market.lambda0() * (loo.tilde_beta - 1.0 - loo.pi_beta)
}

/// Growth exponent `k` of agent `i`'s value function under the constant
/// strategy profile `pi`.
pub fn value_exponent(
    agent: usize,
    market: &MarketParams,
    utility: &UtilitySpec,
    pi: &[f64],
) -> Result<f64> {
    utility.validate(market.n())?;
    if agent >= market.n() {
        return Err(Error::InvalidArgument("agent index out of range"));
    }
    if pi.len() != market.n() {
        return Err(Error::InvalidArgument(
            "strategy profile and market agent counts differ",
        ));
    }
    if !pi.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("strategy profile"));
    }
    let i = agent;
    let n = pi.len() as f64;
    let a = market.agent(i);
    let lambda0 = market.lambda0();
    let var = a.nu * a.nu + a.sigma * a.sigma;
    let loo = leave_one_out(pi, i, market);
    Ok(match utility {
        UtilitySpec::Exponential { delta, theta } => {
            let (d, th) = (delta[i], theta[i]);
            let c = (1.0 - th / n) / d;
            let mut peer_jumps = 0.0;
            for k in 0..pi.len() {
                if k == i {
                    continue;
                }
                let b = market.agent(k);
                let s = pi[k] * b.alpha / n;
                peer_jumps += b.lambda * ((th / d * s).exp() - 1.0 - s * th / d);
            }
            -c * pi[i] * a.mu
                + loo.pi_mu * th / d
                + 0.5 * var * pi[i] * pi[i] * c * c
                + 0.5 * (loo.pi_sigma * loo.pi_sigma + loo.pi2_nu2 / n) * (th / d) * (th / d)
                - pi[i] * a.sigma * loo.pi_sigma * c * th / d
                + a.lambda * ((-c * pi[i] * a.alpha).exp() - 1.0 + pi[i] * a.alpha * c)
                + peer_jumps
                + lambda0
                    * ((-c * pi[i] * a.beta).exp() * (th / d * loo.pi_beta).exp() - 1.0
                        + pi[i] * a.beta * c
                        - loo.pi_beta * th / d)
        }
        UtilitySpec::Power { p, theta } => {
            check_strategy_domain(pi, market)?;
            let (pw, th) = (p[i], theta[i]);
            let q = pw * (1.0 - th / n);
            let mut peer_jumps = 0.0;
            for k in 0..pi.len() {
                if k == i {
                    continue;
                }
                let b = market.agent(k);
                let base = 1.0 + pi[k] * b.alpha;
                peer_jumps +=
                    b.lambda * (base.powf(-pw * th / n) - 1.0 + (base.powf(1.0 / n) - 1.0) * pw * th);
            }
            q * pi[i] * a.mu - pw * th * eta(pi, i, market, &loo)
                + 0.5 * var * pi[i] * pi[i] * q * (q - 1.0)
                + 0.5 * (loo.pi_sigma * loo.pi_sigma + loo.pi2_nu2 / n) * pw * th * (pw * th + 1.0)
                - pi[i] * a.sigma * loo.pi_sigma * pw * th * q
                + a.lambda * ((1.0 + pi[i] * a.alpha).powf(q) - 1.0 - q * pi[i] * a.alpha)
                + peer_jumps
                + lambda0
                    * ((1.0 + pi[i] * a.beta).powf(q) / loo.tilde_beta.powf(pw * th) - 1.0
                        - q * pi[i] * a.beta
                        + (loo.tilde_beta - 1.0) * pw * th)
        }
        UtilitySpec::Logarithmic { theta } => {
            check_strategy_domain(pi, market)?;
            let th = theta[i];
            let g = 1.0 - th / n;
            let mut peer_jumps = 0.0;
            for k in 0..pi.len() {
                if k == i {
                    continue;
                }
                let b = market.agent(k);
                let base = 1.0 + pi[k] * b.alpha;
                peer_jumps +=
                    b.lambda * (-th / n * base.ln() + th * (base.powf(1.0 / n) - 1.0));
            }
            g * pi[i] * a.mu - 0.5 * var * pi[i] * pi[i] * g - th * eta(pi, i, market, &loo)
                + 0.5 * (loo.pi2_nu2 / n + loo.pi_sigma * loo.pi_sigma) * th
                + a.lambda * ((1.0 + pi[i] * a.alpha).ln() - pi[i] * a.alpha) * g
                + peer_jumps
                + lambda0
                    * (g * (1.0 + pi[i] * a.beta).ln() - th * loo.tilde_beta.ln()
                        - pi[i] * a.beta * g
                        + th * (loo.tilde_beta - 1.0))
        }
    })
}

fn reduced_utility(x: f64, y: f64, i: usize, n: f64, utility: &UtilitySpec) -> f64 {
    match utility {
        UtilitySpec::Exponential { delta, theta } => {
            -(-((1.0 - theta[i] / n) * x - theta[i] * y) / delta[i]).exp()
        }
        UtilitySpec::Power { p, theta } => {
            (p[i] * ((1.0 - theta[i] / n) * x.ln() - theta[i] * y.ln())).exp() / p[i]
        }
        UtilitySpec::Logarithmic { theta } => (1.0 - theta[i] / n) * x.ln() - theta[i] * y.ln(),
    }
}

fn peer_aggregate(wealths: &[f64], i: usize, kind: UtilityKind) -> f64 {
    let n = wealths.len() as f64;
    let mut acc = 0.0;
    for k in 0..wealths.len() {
        if k == i {
            continue;
        }
        acc += match kind {
            UtilityKind::Exponential => wealths[k],
            _ => wealths[k].ln(),
        };
    }
    match kind {
        UtilityKind::Exponential => acc / n,
        _ => (acc / n).exp(),
    }
}

/// Terminal utility of agent `agent` at the wealth profile `wealths`,
/// evaluated through the reduced coordinates so it agrees bitwise with
/// [`game_value`] at `t = horizon`.
pub fn terminal_utility(wealths: &[f64], agent: usize, utility: &UtilitySpec) -> Result<f64> {
    let n = utility.n();
    if agent >= n {
        return Err(Error::InvalidArgument("agent index out of range"));
    }
    if wealths.len() != n {
        return Err(Error::InvalidArgument(
            "wealth and strategy vectors must have one entry per agent",
        ));
    }
    if !wealths.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("wealth vector"));
    }
    if utility.kind() != UtilityKind::Exponential {
        for (k, &x) in wealths.iter().enumerate() {
            if x <= 0.0 {
                return Err(Error::OutOfDomain { index: k });
            }
        }
    }
    let y = peer_aggregate(wealths, agent, utility.kind());
    Ok(reduced_utility(wealths[agent], y, agent, n as f64, utility))
}

/// Value of agent `agent` at time `t` and wealth profile `wealths`, given
/// that every agent holds the constant strategy in `pi`.
#[allow(clippy::too_many_arguments)]
pub fn game_value(
    t: f64,
    horizon: f64,
    wealths: &[f64],
    agent: usize,
    market: &MarketParams,
    utility: &UtilitySpec,
    pi: &[f64],
) -> Result<f64> {
    check_inputs(wealths, agent, market, utility, pi)?;
    if !t.is_finite() || !horizon.is_finite() || t > horizon {
        return Err(Error::InvalidArgument(
            "evaluation time must be finite and within the horizon",
        ));
    }
    let k = value_exponent(agent, market, utility, pi)?;
    let n = market.n() as f64;
    let y = peer_aggregate(wealths, agent, utility.kind());
    let u = reduced_utility(wealths[agent], y, agent, n, utility);
    Ok(match utility.kind() {
        UtilityKind::Logarithmic => k * (horizon - t) + u,
        _ => (k * (horizon - t)).exp() * u,
    })
}
