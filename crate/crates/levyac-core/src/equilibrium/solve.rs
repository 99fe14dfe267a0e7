//! Root solvers for the equilibrium systems.

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use alloc::{vec, vec::Vec};

use super::conditions::{check_uniqueness_conditions, ConditionReport};
use super::market::{MarketParams, UtilityKind, UtilitySpec};
use super::residual::{agent_domain, residual, residual_jacobian, residual_log};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// How [`solve_equilibrium`] finds the root.
///
/// `FixedPoint` iterates the map `pi + residual(pi)`, whose Lipschitz bound
/// on the strategy ball is reported by the condition checker; when the
/// iterate gaps grow for ten consecutive steps it restarts as damped Newton.
/// `PerAgentBisection` exploits that the logarithmic system decouples into
/// strictly decreasing scalar equations and applies to that family only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum SolveMethod {
    FixedPoint,
    DampedNewton,
    PerAgentBisection,
}

/// A solved equilibrium together with convergence diagnostics.
///
/// `gaps` records the sup-norm distances between successive fixed-point
/// iterates (empty for the other methods); `method` is the method that
/// produced the final iterate, which differs from the requested one when the
/// fixed-point iteration fell back to Newton.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EquilibriumSolution {
    pub pi: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    pub gaps: Vec<f64>,
    pub conditions: Option<ConditionReport>,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn in_domain(pi: &[f64], market: &MarketParams) -> bool {
    pi.iter()
        .zip(market.agents())
        .all(|(x, a)| 1.0 + x * a.alpha > 0.0 && 1.0 + x * a.beta > 0.0)
}

/// Pulls iterate components that left the admissible region back to the
/// midpoint between the previous (interior) iterate and the violated
/// boundary.  Exponential preferences have no domain restriction.
fn project_domain(next: &mut [f64], prev: &[f64], market: &MarketParams, kind: UtilityKind) {
    if kind == UtilityKind::Exponential {
        return;
    }
    for i in 0..next.len() {
        let a = market.agent(i);
        let (lo, hi) = agent_domain(a.alpha, a.beta);
        if next[i] <= lo {
            next[i] = 0.5 * (prev[i] + lo);
        } else if next[i] >= hi {
            next[i] = 0.5 * (prev[i] + hi);
        }
    }
}

struct RawSolution {
    pi: Vec<f64>,
    residual_norm: f64,
    iterations: usize,
    method: SolveMethod,
    gaps: Vec<f64>,
}

fn solve_fixed_point(
    market: &MarketParams,
    utility: &UtilitySpec,
    tol: f64,
    max_iter: usize,
) -> Result<RawSolution> {
    let n = market.n();
    let mut pi = vec![0.0; n];
    let mut gaps = Vec::new();
    let mut growing = 0usize;
    let mut norm = f64::INFINITY;
    for step in 0..=max_iter {
        let r = residual(&pi, market, utility)?;
        norm = sup_norm(&r);
        if norm <= tol {
            return Ok(RawSolution {
                pi,
                residual_norm: norm,
                iterations: step,
                method: SolveMethod::FixedPoint,
                gaps,
            });
        }
        if step == max_iter {
            break;
        }
        let mut next: Vec<f64> = pi.iter().zip(&r).map(|(x, d)| x + d).collect();
        project_domain(&mut next, &pi, market, utility.kind());
        let gap = next
            .iter()
            .zip(&pi)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if gaps.last().is_some_and(|&prev| gap > prev) {
            growing += 1;
        } else {
            growing = 0;
        }
        gaps.push(gap);
        pi = next;
        if growing >= 10 {
            let mut newton = solve_newton(market, utility, tol, max_iter)?;
            newton.gaps = gaps;
            return Ok(newton);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: norm,
    })
}

fn solve_newton(
    market: &MarketParams,
    utility: &UtilitySpec,
    tol: f64,
    max_iter: usize,
) -> Result<RawSolution> {
    let n = market.n();
    let mut pi = vec![0.0; n];
    let mut r = residual(&pi, market, utility)?;
    let mut norm = sup_norm(&r);
    let mut steps = 0usize;
    while norm > tol {
        if steps == max_iter {
            return Err(Error::NoConvergence {
                iterations: steps,
                residual: norm,
            });
        }
        let jac = residual_jacobian(&pi, market, utility)?;
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = lu_solve(jac, rhs, n).ok_or(Error::NoConvergence {
            iterations: steps,
            residual: norm,
        })?;
        let mut t = 1.0f64;
        loop {
            let cand: Vec<f64> = pi.iter().zip(&delta).map(|(x, d)| x + t * d).collect();
            let ok = utility.kind() == UtilityKind::Exponential || in_domain(&cand, market);
            if ok {
                if let Ok(rc) = residual(&cand, market, utility) {
                    let nc = sup_norm(&rc);
                    if nc <= tol || nc < norm * (1.0 - 1e-4 * t) {
                        pi = cand;
                        r = rc;
                        norm = nc;
                        break;
                    }
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NoConvergence {
                    iterations: steps,
                    residual: norm,
                });
            }
        }
        steps += 1;
    }
    Ok(RawSolution {
        pi,
        residual_norm: norm,
        iterations: steps,
        method: SolveMethod::DampedNewton,
        gaps: Vec::new(),
    })
}

/// Offset used to start brackets just inside a domain pole.
const POLE_OFFSET: f64 = 1e-12;

fn solve_bisection(market: &MarketParams, tol: f64, max_iter: usize) -> Result<RawSolution> {
    let n = market.n();
    let mut pi = vec![0.0; n];
    let mut iterations = 0usize;
    let mut worst = 0.0f64;
    for i in 0..n {
        let a = market.agent(i);
        let (lo_pole, hi_pole) = agent_domain(a.alpha, a.beta);
        let mut lo = if lo_pole.is_finite() {
            lo_pole + POLE_OFFSET * lo_pole.abs().max(1.0)
        } else {
            let mut x = -1.0;
            while residual_log(x, i, market)? <= 0.0 {
                x *= 2.0;
                iterations += 1;
                if x < -1e18 {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: residual_log(x, i, market)?,
                    });
                }
            }
            x
        };
        let mut hi = if hi_pole.is_finite() {
            hi_pole - POLE_OFFSET * hi_pole.abs().max(1.0)
        } else {
            let mut x = 1.0;
            while residual_log(x, i, market)? >= 0.0 {
                x *= 2.0;
                iterations += 1;
                if x > 1e18 {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: residual_log(x, i, market)?,
                    });
                }
            }
            x
        };
        if !(residual_log(lo, i, market)? > 0.0 && residual_log(hi, i, market)? < 0.0) {
            return Err(Error::NoConvergence {
                iterations,
                residual: residual_log(lo, i, market)?,
            });
        }
        let mut root = 0.5 * (lo + hi);
        let mut f_root = f64::INFINITY;
        for _ in 0..max_iter {
            let mid = 0.5 * (lo + hi);
            if !(lo < mid && mid < hi) {
                break;
            }
            iterations += 1;
            let fm = residual_log(mid, i, market)?;
            root = mid;
            f_root = fm;
            if fm.abs() <= tol {
                break;
            }
            if fm > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if f_root.abs() > tol {
            return Err(Error::NoConvergence {
                iterations,
                residual: f_root,
            });
        }
        pi[i] = root;
        worst = worst.max(f_root.abs());
    }
    Ok(RawSolution {
        pi,
        residual_norm: worst,
        iterations,
        method: SolveMethod::PerAgentBisection,
        gaps: Vec::new(),
    })
}

/// Solves the equilibrium system to `max_i |residual_i| <= tol`.
///
/// `bound` is the radius of the strategy ball fed to the condition checker;
/// the report (when the checker's own preconditions hold) is attached to the
/// returned solution.  Iterates themselves are only constrained by the
/// admissible domain of power and logarithmic preferences.
pub fn solve_equilibrium(
    market: &MarketParams,
    utility: &UtilitySpec,
    method: SolveMethod,
    bound: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EquilibriumSolution> {
    utility.validate(market.n())?;
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive"));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive"));
    }
    if method == SolveMethod::PerAgentBisection && utility.kind() != UtilityKind::Logarithmic {
        return Err(Error::InvalidArgument(
            "per-agent bisection applies to logarithmic preferences only",
        ));
    }
    let raw = match method {
        SolveMethod::FixedPoint => solve_fixed_point(market, utility, tol, max_iter)?,
        SolveMethod::DampedNewton => solve_newton(market, utility, tol, max_iter)?,
        SolveMethod::PerAgentBisection => solve_bisection(market, tol, max_iter)?,
    };
    let conditions = check_uniqueness_conditions(market, utility, bound).ok();
    Ok(EquilibriumSolution {
        pi: raw.pi,
        residual_norm: raw.residual_norm,
        iterations: raw.iterations,
        method: raw.method,
        gaps: raw.gaps,
        conditions,
    })
}

/// [`solve_equilibrium`] with the default method for the preference family
/// (bisection for logarithmic, fixed point otherwise) and default tolerances.
pub fn solve_equilibrium_default(
    market: &MarketParams,
    utility: &UtilitySpec,
    bound: f64,
) -> Result<EquilibriumSolution> {
    let method = match utility.kind() {
        UtilityKind::Logarithmic => SolveMethod::PerAgentBisection,
        _ => SolveMethod::FixedPoint,
    };
    solve_equilibrium(market, utility, method, bound, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Solves `a x = b` for a small dense row-major matrix by partial-pivot LU;
/// returns `None` when the matrix is numerically singular.
fn lu_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    Some(b)
}
