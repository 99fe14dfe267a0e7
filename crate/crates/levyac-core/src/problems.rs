//! Benchmark control problems wired for the actor-critic trainer.
//!
//! Both problems come with closed-form references from the equilibrium
//! layer, so training runs can be scored exactly: the single-stock optimal
//! investment problem (geometric wealth, one fixed-size jump source) and the
//! linear-quadratic regulator with per-coordinate Poisson jumps.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::control::{
    ActorLossVariant, ControlOracle, ControlProblem, ControlSpace, ExplosionMode, JumpPath,
    ProblemGrads, Sense, TrainConfig,
};
use crate::equilibrium::{
    lqr_control, lqr_value, merton_log_control, merton_power_control, merton_value, LqrParams,
    MertonParams, MertonUtility,
};
use crate::grid::TimeGrid;
use crate::sde::{CompoundPoissonSource, ControlledDynamics, LevyMeasureSpec};
use crate::{Error, Result};

/// Hyperparameter scale of a benchmark run: the full setting used for the
/// reported numbers, or the shortened one used in continuous integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Ci,
}

/// Starting wealth of the single-stock benchmark.
pub const MERTON_X0: f64 = 10.0;

/// Market parameters of the single-stock benchmark.
pub fn merton_benchmark_params() -> MertonParams {
    MertonParams { mu: 0.05, r: 0.03, sigma: 0.4, lambda: 0.3, z: 0.2 }
}

/// Regulator parameters of the benchmark in `dim` dimensions: jump sizes
/// ramp down from 0.3 to 0.2 and intensities ramp up from 0.2 to 0.3 across
/// the coordinates.
pub fn lqr_benchmark_params(dim: usize) -> Result<LqrParams> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1"));
    }
    let ramp = |i: usize| {
        if dim == 1 {
            0.0
        } else {
            0.1 * i as f64 / (dim - 1) as f64
        }
    };
    let sizes = (0..dim).map(|i| 0.3 - ramp(i)).collect();
    let rates = (0..dim).map(|i| 0.2 + ramp(i)).collect();
    LqrParams::new(dim, 0.4, sizes, rates, 1.0, 0.1, 5.0)
}

fn check_merton(params: &MertonParams, utility: MertonUtility) -> Result<()> {
    if let MertonUtility::Power(p) = utility {
        if !(p.is_finite() && 0.0 < p && p < 1.0) {
            return Err(Error::InvalidArgument(
                "relative risk tolerance must lie strictly between zero and one",
            ));
        }
    }
    if !params.sigma.is_finite() || params.sigma <= 0.0 {
        return Err(Error::InvalidArgument("volatility must be positive"));
    }
    Ok(())
}

/// Single-stock investment problem: wealth `X` follows
/// `dX = (r + (mu - r) u) X dt + sigma u X dB + z u X dM` with compensated
/// jumps, the control being the fraction of wealth held in the stock.
/// Terminal reward is the chosen utility; there is no running reward.
pub fn merton_problem(params: &MertonParams, utility: MertonUtility) -> Result<ControlProblem> {
    check_merton(params, utility)?;
    let MertonParams { mu, r, sigma, lambda, z } = *params;
    let measure = LevyMeasureSpec::Native(vec![CompoundPoissonSource::fixed(lambda, vec![z])?]);
    let dynamics = ControlledDynamics::new(
        1,
        1,
        move |x, u, out| out[0] = (r + (mu - r) * u[0]) * x[0],
        move |x, u, w, out| out[0] = sigma * u[0] * x[0] * w[0],
        |x, z, u, out| out[0] = z[0] * u[0] * x[0],
        measure,
    )?;
    let terminal: Box<dyn Fn(&[f64]) -> f64 + Send + Sync> = match utility {
        MertonUtility::Power(p) => Box::new(move |x: &[f64]| x[0].powf(p) / p),
        MertonUtility::Log => Box::new(|x: &[f64]| x[0].ln()),
    };
    let terminal_grad: Box<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync> = match utility {
        MertonUtility::Power(p) => Box::new(move |x: &[f64], w: f64, xbar: &mut [f64]| {
            xbar[0] += w * x[0].powf(p - 1.0);
        }),
        MertonUtility::Log => Box::new(|x: &[f64], w: f64, xbar: &mut [f64]| {
            xbar[0] += w / x[0];
        }),
    };
    let grads = ProblemGrads {
        running: Box::new(|_, _, _, _, _, _| {}),
        terminal: terminal_grad,
        // One Euler update is linear in both arguments:
        // `x' = x (1 + (r + (mu - r) u) dt + sigma u dw + (N - lambda dt) z u)`.
        step: Box::new(move |ctx, cot, xbar, ubar| {
            let dt = ctx.grid.dt();
            let dm = ctx.jumps.count(0, ctx.path, ctx.step) as f64 - lambda * dt;
            let factor =
                1.0 + (r + (mu - r) * ctx.u[0]) * dt + sigma * ctx.u[0] * ctx.dw[0] + dm * z * ctx.u[0];
            xbar[0] += cot[0] * factor;
            ubar[0] += cot[0] * ctx.x[0] * ((mu - r) * dt + sigma * ctx.dw[0] + dm * z);
        }),
        diffusion: Box::new(move |x, u, w, cot, xbar, ubar| {
            xbar[0] += cot[0] * sigma * u[0] * w[0];
            ubar[0] += cot[0] * sigma * x[0] * w[0];
        }),
        jump: Box::new(|x, z, u, cot, xbar, ubar| {
            xbar[0] += cot[0] * z[0] * u[0];
            ubar[0] += cot[0] * z[0] * x[0];
        }),
    };
    ControlProblem::new(
        dynamics,
        |_, _, _| 0.0,
        move |x| (terminal)(x),
        Sense::Maximize,
        vec![MERTON_X0],
        ControlSpace::Interval { lo: -1.0, hi: 1.0 },
        grads,
    )
}

/// Closed-form reference for [`merton_problem`]: exact value function and
/// the constant optimal fraction.
pub fn merton_oracle(
    params: &MertonParams,
    utility: MertonUtility,
    horizon: f64,
) -> Result<ControlOracle> {
    check_merton(params, utility)?;
    let control = match utility {
        MertonUtility::Power(p) => merton_power_control(params, p)?,
        MertonUtility::Log => merton_log_control(params)?,
    };
    let params = *params;
    Ok(ControlOracle {
        value: Box::new(move |t, x| {
            merton_value(t, horizon, x[0], &params, utility).unwrap_or(f64::NAN)
        }),
        control: Box::new(move |_, _, out| out[0] = control),
    })
}

/// Training configuration for the single-stock benchmark: horizon 1 on 50
/// steps, batches of 500 paths, ten actor updates per iteration, a bounded
/// actor head, and the closed-form Poisson compensation.
pub fn merton_config(preset: Preset, seed: u64) -> Result<TrainConfig> {
    let grid = TimeGrid::new(1.0, 50)?;
    let iterations = match preset {
        Preset::Paper => 1000,
        Preset::Ci => 300,
    };
    let mut config = TrainConfig::new(grid, 500, iterations, seed);
    config.explosion = ExplosionMode::BoundedActor { bound: 1.0 };
    config.actor_loss = ActorLossVariant::J;
    config.jump_path = JumpPath::PoissonFast;
    Ok(config)
}

/// Linear-quadratic regulator with jumps: `dX = u dt + sigma dB + z dM`,
/// running cost `q |u|^2 + b |x|^2`, terminal cost `a |x|^2`. Each
/// coordinate carries its own compensated Poisson source with a fixed jump
/// size.
pub fn lqr_problem(params: &LqrParams) -> Result<ControlProblem> {
    let d = params.dim();
    let sigma = params.diffusion_matrix();
    let sources = params
        .jump_sizes()
        .iter()
        .zip(params.intensities())
        .enumerate()
        .map(|(i, (&size, &rate))| {
            let mut mark = vec![0.0; d];
            mark[i] = size;
            CompoundPoissonSource::fixed(rate, mark)
        })
        .collect::<Result<Vec<_>>>()?;
    let dynamics = ControlledDynamics::new(
        d,
        d,
        |_, u, out| out.copy_from_slice(u),
        move |_, _, w, out| {
            for i in 0..w.len() {
                let row = &sigma[i * w.len()..(i + 1) * w.len()];
                out[i] = row.iter().zip(w).map(|(s, wj)| s * wj).sum();
            }
        },
        |_, z, _, out| out.copy_from_slice(z),
        LevyMeasureSpec::Native(sources),
    )?;
    let (a, b, q) = (params.terminal_weight(), params.state_weight(), params.control_weight());
    let grads = ProblemGrads {
        running: Box::new(move |_, x, u, w, xbar, ubar| {
            for (g, &xi) in xbar.iter_mut().zip(x) {
                *g += w * 2.0 * b * xi;
            }
            for (g, &ui) in ubar.iter_mut().zip(u) {
                *g += w * 2.0 * q * ui;
            }
        }),
        terminal: Box::new(move |x, w, xbar| {
            for (g, &xi) in xbar.iter_mut().zip(x) {
                *g += w * 2.0 * a * xi;
            }
        }),
        // `x' = x + u dt + additive noise`, so the one-step Jacobian is the
        // identity in `x` and `dt` times the identity in `u`.
        step: Box::new(|ctx, cot, xbar, ubar| {
            let dt = ctx.grid.dt();
            for i in 0..cot.len() {
                xbar[i] += cot[i];
                ubar[i] += dt * cot[i];
            }
        }),
        diffusion: Box::new(|_, _, _, _, _, _| {}),
        jump: Box::new(|_, _, _, _, _, _| {}),
    };
    ControlProblem::new(
        dynamics,
        move |_, x, u| {
            let xn: f64 = x.iter().map(|v| v * v).sum();
            let un: f64 = u.iter().map(|v| v * v).sum();
            q * un + b * xn
        },
        move |x| a * x.iter().map(|v| v * v).sum::<f64>(),
        Sense::Minimize,
        vec![1.0; d],
        ControlSpace::Unbounded,
        grads,
    )
}

/// Closed-form reference for [`lqr_problem`].
pub fn lqr_oracle(params: &LqrParams, horizon: f64) -> Result<ControlOracle> {
    let value_params = params.clone();
    let control_params = params.clone();
    Ok(ControlOracle {
        value: Box::new(move |t, x| lqr_value(t, horizon, x, &value_params).unwrap_or(f64::NAN)),
        control: Box::new(move |t, x, out| match lqr_control(t, horizon, x, &control_params) {
            Ok(u) => out.copy_from_slice(&u),
            Err(_) => out.iter_mut().for_each(|v| *v = f64::NAN),
        }),
    })
}

/// Training configuration for the regulator benchmark: horizon 1 on 50
/// steps, batches of 500 paths, state clamping to `[-5, 5]` during the
/// first 100 iterations, and the closed-form Poisson compensation.
pub fn lqr_config(preset: Preset, seed: u64) -> Result<TrainConfig> {
    let grid = TimeGrid::new(1.0, 50)?;
    let iterations = match preset {
        Preset::Paper => 1000,
        Preset::Ci => 300,
    };
    let mut config = TrainConfig::new(grid, 500, iterations, seed);
    config.explosion = ExplosionMode::StateClamp { lo: -5.0, hi: 5.0, warmup: 100 };
    config.actor_loss = ActorLossVariant::J;
    config.jump_path = JumpPath::PoissonFast;
    Ok(config)
}
