//! Sufficient conditions for a unique equilibrium on a bounded strategy set.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;

use super::market::{MarketParams, UtilitySpec};
use crate::{Error, Result};

/// Direction of an inequality in a [`ConditionCheck`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum Relation {
    LessThan,
    GreaterThan,
}

/// One evaluated inequality, with both sides reported numerically.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConditionCheck {
    pub label: &'static str,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub satisfied: bool,
}

impl ConditionCheck {
    fn less(label: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            label,
            lhs,
            relation: Relation::LessThan,
            rhs,
            satisfied: lhs < rhs,
        }
    }

    fn greater(label: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            label,
            lhs,
            relation: Relation::GreaterThan,
            rhs,
            satisfied: lhs > rhs,
        }
    }
}

/// Parameter extrema entering the conditions, recomputed on every call.
/// Fields that belong to a different preference family are `None`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Extrema {
    pub nu_max: f64,
    pub nu_min: f64,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub lambda_max: f64,
    pub alpha_abs_max: f64,
    pub beta_abs_max: f64,
    pub theta_max: f64,
    pub delta_min: Option<f64>,
    pub delta_max: Option<f64>,
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
}

/// Outcome of [`check_uniqueness_conditions`].
///
/// For exponential preferences `contraction_margin` is the positive quantity
/// `K` whose sign condition appears among the checks, and
/// `contraction_factor` is the fixed-point map's Lipschitz bound
/// `1 - K / (2 delta_max)`; for power preferences the factor is
/// `1 - (1 - p_max) K`.  Logarithmic preferences need no conditions, so the
/// check list is empty and the report is trivially satisfied.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConditionReport {
    pub bound: f64,
    pub extrema: Extrema,
    pub checks: Vec<ConditionCheck>,
    pub all_satisfied: bool,
    pub contraction_margin: Option<f64>,
    pub contraction_factor: Option<f64>,
}

fn fold_max(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

fn fold_min(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::INFINITY, f64::min)
}

/// Evaluates the sufficient uniqueness conditions on the closed ball of
/// strategies bounded by `bound` in every coordinate.
pub fn check_uniqueness_conditions(
    market: &MarketParams,
    utility: &UtilitySpec,
    bound: f64,
) -> Result<ConditionReport> {
    utility.validate(market.n())?;
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::InvalidArgument(
            "strategy bound must be positive and finite",
        ));
    }
    let agents = market.agents();
    let lambda0 = market.lambda0();
    let nu_max = fold_max(agents.iter().map(|a| a.nu));
    let nu_min = fold_min(agents.iter().map(|a| a.nu));
    let sigma_max = fold_max(agents.iter().map(|a| a.sigma));
    let sigma_min = fold_min(agents.iter().map(|a| a.sigma));
    let lambda_max = fold_max(agents.iter().map(|a| a.lambda));
    let alpha0 = fold_max(agents.iter().map(|a| a.alpha.abs()));
    let beta0 = fold_max(agents.iter().map(|a| a.beta.abs()));
    let theta_max = fold_max(utility.theta().iter().copied());

    let mut extrema = Extrema {
        nu_max,
        nu_min,
        sigma_max,
        sigma_min,
        lambda_max,
        alpha_abs_max: alpha0,
        beta_abs_max: beta0,
        theta_max,
        delta_min: None,
        delta_max: None,
        p_min: None,
        p_max: None,
    };

    let mut checks = Vec::new();
    let mut margin = None;
    let mut factor = None;
    match utility {
        UtilitySpec::Exponential { delta, .. } => {
            let delta_min = fold_min(delta.iter().copied());
            let delta_max = fold_max(delta.iter().copied());
            extrema.delta_min = Some(delta_min);
            extrema.delta_max = Some(delta_max);
            let e_beta = (2.0 * bound * beta0 / delta_min).exp();
            let e_alpha = (bound * alpha0 / delta_min).exp();
            checks.push(ConditionCheck::less(
                "worst-case diffusion and jump variance below minimum risk tolerance",
                nu_max * nu_max
                    + sigma_max * sigma_max
                    + lambda0 * beta0 * beta0 * e_beta
                    + lambda_max * alpha0 * alpha0 * e_alpha,
                delta_min,
            ));
            let k = nu_min * nu_min
                - sigma_max * (sigma_max - sigma_min)
                - lambda0 * beta0 * beta0 * e_beta;
            checks.push(ConditionCheck::greater(
                "idiosyncratic variance dominates common-factor spread and common jumps",
                k,
                0.0,
            ));
            margin = Some(k);
            factor = Some(1.0 - k / (2.0 * delta_max));
        }
        UtilitySpec::Power { p, .. } => {
            if bound > 1.0 {
                return Err(Error::InvalidArgument(
                    "power preferences need a strategy bound of at most one",
                ));
            }
            if alpha0 >= 1.0 || beta0 >= 1.0 {
                return Err(Error::InvalidArgument(
                    "power preferences need jump sizes of magnitude below one",
                ));
            }
            let p_min = fold_min(p.iter().copied());
            let p_max = fold_max(p.iter().copied());
            extrema.p_min = Some(p_min);
            extrema.p_max = Some(p_max);
            checks.push(ConditionCheck::less(
                "damped worst-case diffusion and jump variance below one",
                (1.0 - 0.5 * p_min)
                    * (nu_max * nu_max
                        + sigma_max * sigma_max
                        + lambda_max * alpha0 * alpha0
                            / (1.0 - bound * alpha0).powf(2.0 - 0.5 * p_min)
                        + lambda0 * beta0 * beta0 / ((1.0 - bound * beta0) * (1.0 - bound * beta0))),
                1.0,
            ));
            checks.push(ConditionCheck::less(
                "risk tolerance times interaction stays below one",
                p_max * (1.0 + theta_max),
                1.0,
            ));
            let denom = 1.0 - bound * beta0;
            let k = nu_min * nu_min
                - sigma_max * (sigma_max - sigma_min)
                - lambda0 * beta0 * beta0 * (1.0 + bound * beta0) / (denom * denom * denom);
            checks.push(ConditionCheck::greater(
                "idiosyncratic variance dominates common-factor spread and common jumps",
                k,
                0.0,
            ));
            margin = Some(k);
            factor = Some(1.0 - (1.0 - p_max) * k);
        }
        UtilitySpec::Logarithmic { .. } => {}
    }

    let all_satisfied = checks.iter().all(|c| c.satisfied);
    Ok(ConditionReport {
        bound,
        extrema,
        checks,
        all_satisfied,
        contraction_margin: margin,
        contraction_factor: factor,
    })
}
