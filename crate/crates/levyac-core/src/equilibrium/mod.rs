//! Semi-explicit equilibria and closed-form benchmarks.
//!
//! The n-agent portfolio game admits constant Nash equilibria whose
//! strategies solve a finite-dimensional nonlinear system, one equation per
//! agent.  This module carries the market description, the residuals of
//! those systems for exponential, power and logarithmic preferences, the
//! solvers that drive the residuals to zero, sufficient conditions for
//! uniqueness, and the exact value functions along an equilibrium.  The
//! single-agent Merton problem and a linear-quadratic control problem with
//! jumps round out the set of analytic references the learned solvers are
//! measured against.

mod conditions;
mod lqr;
mod market;
mod merton;
mod residual;
mod solve;
mod value;

pub use conditions::{
    check_uniqueness_conditions, ConditionCheck, ConditionReport, Extrema, Relation,
};
pub use lqr::{lqr_control, lqr_value, LqrParams};
pub use market::{AgentParams, MarketParams, UtilityKind, UtilitySpec};
pub use merton::{
    merton_log_control, merton_log_exponent, merton_power_control, merton_power_exponent,
    merton_value, MertonParams, MertonUtility,
};
pub use residual::{
    residual, residual_exponential, residual_jacobian, residual_log, residual_power,
};
pub use solve::{
    solve_equilibrium, solve_equilibrium_default, EquilibriumSolution, SolveMethod,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
pub use value::{game_value, terminal_utility, value_exponent};
