//! Market and preference parameters of the n-agent investment game.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Coefficients of one agent's stock.
///
/// The price is driven by an idiosyncratic Brownian motion (volatility `nu`),
/// a Brownian motion common to all agents (volatility `sigma`), an
/// idiosyncratic compensated Poisson jump of size `alpha` and intensity
/// `lambda`, and a common compensated jump of size `beta` whose intensity is
/// shared across the market.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AgentParams {
    pub mu: f64,
    pub nu: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

/// Validated market description for `n` agents.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MarketParams {
    agents: Vec<AgentParams>,
    lambda0: f64,
}

impl MarketParams {
    /// Builds a market, rejecting parameters outside the admissible ranges
    /// (`mu > 0`, `nu >= 0`, `sigma >= 0`, `nu^2 + sigma^2 > 0`,
    /// nonnegative finite intensities).
    pub fn new(agents: Vec<AgentParams>, lambda0: f64) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidArgument("market needs at least one agent"));
        }
        if !lambda0.is_finite() || lambda0 < 0.0 {
            return Err(Error::InvalidArgument(
                "common jump intensity must be finite and nonnegative",
            ));
        }
        for a in &agents {
            let finite = a.mu.is_finite()
                && a.nu.is_finite()
                && a.sigma.is_finite()
                && a.alpha.is_finite()
                && a.beta.is_finite()
                && a.lambda.is_finite();
            if !finite {
                return Err(Error::InvalidArgument("agent parameters must be finite"));
            }
            if a.mu <= 0.0 {
                return Err(Error::InvalidArgument("drift must be positive"));
            }
            if a.nu < 0.0 || a.sigma < 0.0 {
                return Err(Error::InvalidArgument("volatilities must be nonnegative"));
            }
            if a.nu * a.nu + a.sigma * a.sigma <= 0.0 {
                return Err(Error::InvalidArgument(
                    "total diffusion variance must be positive",
                ));
            }
            if a.lambda < 0.0 {
                return Err(Error::InvalidArgument(
                    "idiosyncratic jump intensity must be nonnegative",
                ));
            }
        }
        Ok(Self { agents, lambda0 })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> &AgentParams {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[AgentParams] {
        &self.agents
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Benchmark market with one leading agent and `n - 1` identical peers.
    pub fn two_group(n: usize) -> Self {
        let mut agents = Vec::with_capacity(n);
        agents.push(AgentParams {
            mu: 0.05,
            nu: 0.4,
            sigma: 0.35,
            alpha: 0.3,
            beta: 0.25,
            lambda: 0.3,
        });
        for _ in 1..n {
            agents.push(AgentParams {
                mu: 0.04,
                nu: 0.3,
                sigma: 0.25,
                alpha: 0.2,
                beta: 0.15,
                lambda: 0.2,
            });
        }
        Self::new(agents, 0.25).expect("two-group benchmark parameters are valid")
    }

    /// Benchmark market whose coefficients ramp linearly from the first agent
    /// to the last; every agent is distinct.
    pub fn ramp(n: usize) -> Self {
        let agents = (0..n)
            .map(|i| {
                let t = ramp_fraction(i, n);
                AgentParams {
                    mu: 0.04 + 0.01 * t,
                    nu: 0.1 + 0.3 * t,
                    sigma: 0.2 + 0.2 * t,
                    alpha: 0.2 + 0.1 * t,
                    beta: 0.2 + 0.1 * t,
                    lambda: 0.2 + 0.1 * t,
                }
            })
            .collect();
        Self::new(agents, 0.25).expect("ramp benchmark parameters are valid")
    }
}

fn ramp_fraction(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Which of the three preference families a [`UtilitySpec`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum UtilityKind {
    Exponential,
    Power,
    Logarithmic,
}

/// Per-agent preferences.
///
/// `theta` in `(0, 1)` measures how strongly an agent competes with the
/// average of the others; `delta > 0` is the absolute risk tolerance of the
/// exponential family and `p` in `(0, 1)` the relative risk tolerance of the
/// power family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum UtilitySpec {
    Exponential { delta: Vec<f64>, theta: Vec<f64> },
    Power { p: Vec<f64>, theta: Vec<f64> },
    Logarithmic { theta: Vec<f64> },
}

impl UtilitySpec {
    pub fn exponential(delta: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let spec = Self::Exponential { delta, theta };
        spec.validate(spec.n())?;
        Ok(spec)
    }

    pub fn power(p: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let spec = Self::Power { p, theta };
        spec.validate(spec.n())?;
        Ok(spec)
    }

    pub fn logarithmic(theta: Vec<f64>) -> Result<Self> {
        let spec = Self::Logarithmic { theta };
        spec.validate(spec.n())?;
        Ok(spec)
    }

    pub fn kind(&self) -> UtilityKind {
        match self {
            Self::Exponential { .. } => UtilityKind::Exponential,
            Self::Power { .. } => UtilityKind::Power,
            Self::Logarithmic { .. } => UtilityKind::Logarithmic,
        }
    }

    pub fn n(&self) -> usize {
        self.theta().len()
    }

    pub fn theta(&self) -> &[f64] {
        match self {
            Self::Exponential { theta, .. }
            | Self::Power { theta, .. }
            | Self::Logarithmic { theta } => theta,
        }
    }

    /// Checks agent count and parameter ranges against a market of `n` agents.
    pub fn validate(&self, n: usize) -> Result<()> {
        let theta = self.theta();
        if theta.len() != n {
            return Err(Error::InvalidArgument(
                "utility and market agent counts differ",
            ));
        }
        if !theta.iter().all(|&t| t.is_finite() && 0.0 < t && t < 1.0) {
            return Err(Error::InvalidArgument(
                "interaction weights must lie strictly between zero and one",
            ));
        }
        match self {
            Self::Exponential { delta, .. } => {
                if delta.len() != n {
                    return Err(Error::InvalidArgument(
                        "utility and market agent counts differ",
                    ));
                }
                if !delta.iter().all(|&d| d.is_finite() && d > 0.0) {
                    return Err(Error::InvalidArgument(
                        "absolute risk tolerances must be positive",
                    ));
                }
            }
            Self::Power { p, .. } => {
                if p.len() != n {
                    return Err(Error::InvalidArgument(
                        "utility and market agent counts differ",
                    ));
                }
                if !p.iter().all(|&p| p.is_finite() && 0.0 < p && p < 1.0) {
                    return Err(Error::InvalidArgument(
                        "relative risk tolerances must lie strictly between zero and one",
                    ));
                }
            }
            Self::Logarithmic { .. } => {}
        }
        Ok(())
    }

    /// Exponential preferences matching [`MarketParams::two_group`].
    pub fn two_group_exponential(n: usize) -> Self {
        Self::Exponential {
            delta: two_group_values(n, 2.0, 1.0),
            theta: two_group_values(n, 0.8, 0.7),
        }
    }

    /// Power preferences matching [`MarketParams::two_group`].
    pub fn two_group_power(n: usize) -> Self {
        Self::Power {
            p: two_group_values(n, 0.5, 0.4),
            theta: two_group_values(n, 0.8, 0.7),
        }
    }

    /// Logarithmic preferences matching [`MarketParams::two_group`].
    pub fn two_group_logarithmic(n: usize) -> Self {
        Self::Logarithmic {
            theta: two_group_values(n, 0.8, 0.7),
        }
    }

    /// Exponential preferences matching [`MarketParams::ramp`].
    pub fn ramp_exponential(n: usize) -> Self {
        Self::Exponential {
            delta: (0..n).map(|i| 1.0 + ramp_fraction(i, n)).collect(),
            theta: (0..n).map(|i| 0.7 + 0.1 * ramp_fraction(i, n)).collect(),
        }
    }
}

fn two_group_values(n: usize, first: f64, rest: f64) -> Vec<f64> {
    (0..n).map(|i| if i == 0 { first } else { rest }).collect()
}
