//! Actor-critic training for jump-diffusion stochastic control.
//!
//! Three networks are fitted on a fixed time grid: a critic for the value
//! function, an actor for the feedback control, and (for a general jump
//! measure) a nonlocal network for the jump compensator integral. The critic
//! minimizes a martingale-style loss built from a surrogate reward that
//! subtracts the simulated diffusion and jump martingale increments from the
//! plain running reward; the actor ascends (or descends) the simulated
//! objective by backpropagation through the Euler scheme.
//!
//! Purely Poisson-driven dynamics admit a cheaper path where the compensator
//! is evaluated in closed form against the fixed marks; the nonlocal network
//! and its loss term are then dropped.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::ops::Range;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::grid::TimeGrid;
use crate::net::{AdamState, Cache, DualCache, LrSchedule, ResNet};
use crate::rng::{self, tags};
use crate::sde::{
    euler_step, simulate_batch, ControlledDynamics, JumpPanel, LevyMeasureSpec, NoisePanel,
    PathBatch,
};
use crate::{metrics, par, Error, Result};

/// Optimization sense of a control problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Admissible control set. Descriptive: training keeps controls in range
/// through the explosion-prevention mode rather than by projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlSpace {
    Unbounded,
    Interval { lo: f64, hi: f64 },
}

/// Inputs of one Euler update, handed to [`ProblemGrads::step`].
pub struct StepCtx<'a> {
    pub grid: &'a TimeGrid,
    pub step: usize,
    pub path: usize,
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub dw: &'a [f64],
    pub jumps: &'a JumpPanel,
}

/// Hand-written vector-Jacobian products of the problem data, used by the
/// actor's backpropagation through the simulated paths. Every closure
/// accumulates into its `x_bar` / `u_bar` output slices.
pub struct ProblemGrads {
    /// Adds `w * df/dx(t, x, u)` and `w * df/du(t, x, u)`.
    pub running: Box<dyn Fn(f64, &[f64], &[f64], f64, &mut [f64], &mut [f64]) + Send + Sync>,
    /// Adds `w * dg/dx(x)`.
    pub terminal: Box<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>,
    /// Transposed Jacobian of the full Euler one-step map, identity
    /// included: adds `(dx'/dx)^T cot` and `(dx'/du)^T cot`.
    pub step: Box<dyn Fn(&StepCtx<'_>, &[f64], &mut [f64], &mut [f64]) + Send + Sync>,
    /// VJP of `(x, u) -> sigma(x, u) w` at fixed `w`; arguments are
    /// `(x, u, w, cot, x_bar, u_bar)`. Only exercised by the surrogate
    /// actor loss.
    pub diffusion: Box<dyn Fn(&[f64], &[f64], &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync>,
    /// VJP of `(x, u) -> G(x, z, u)` at fixed mark `z`; arguments are
    /// `(x, z, u, cot, x_bar, u_bar)`. Only exercised by the surrogate
    /// actor loss.
    pub jump: Box<dyn Fn(&[f64], &[f64], &[f64], &[f64], &mut [f64], &mut [f64]) + Send + Sync>,
}

impl ProblemGrads {
    /// Placeholder set for problems whose actor is never trained: the step
    /// map passes the state cotangent through unchanged and every other
    /// derivative is zero.
    pub fn frozen() -> Self {
        ProblemGrads {
            running: Box::new(|_, _, _, _, _, _| {}),
            terminal: Box::new(|_, _, _| {}),
            step: Box::new(|_, cot, x_bar, _| {
                for (xb, &c) in x_bar.iter_mut().zip(cot) {
                    *xb += c;
                }
            }),
            diffusion: Box::new(|_, _, _, _, _, _| {}),
            jump: Box::new(|_, _, _, _, _, _| {}),
        }
    }
}

/// A finite-horizon control problem: dynamics, running and terminal reward
/// (or cost), the optimization sense, and the common starting point of all
/// simulated paths.
pub struct ControlProblem {
    pub dynamics: ControlledDynamics,
    pub running: Box<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>,
    pub terminal: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub sense: Sense,
    pub x0: Vec<f64>,
    pub control_space: ControlSpace,
    pub grads: ProblemGrads,
}

impl ControlProblem {
    pub fn new(
        dynamics: ControlledDynamics,
        running: impl Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sense: Sense,
        x0: Vec<f64>,
        control_space: ControlSpace,
        grads: ProblemGrads,
    ) -> Result<Self> {
        if x0.len() != dynamics.state_dim() {
            return Err(Error::InvalidArgument("x0 length must match the state dimension"));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be finite"));
        }
        if let ControlSpace::Interval { lo, hi } = control_space {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument("control interval must be finite with lo < hi"));
            }
        }
        Ok(ControlProblem {
            dynamics,
            running: Box::new(running),
            terminal: Box::new(terminal),
            sense,
            x0,
            control_space,
            grads,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }
}

/// How path or control explosions are kept in check during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExplosionMode {
    /// Actor output squashed to `(-bound, bound)` by a trainable-amplitude
    /// tanh head.
    BoundedActor { bound: f64 },
    /// Simulated states clamped to `[lo, hi]` during the first `warmup`
    /// iterations, then left free.
    StateClamp { lo: f64, hi: f64, warmup: usize },
    None,
}

/// Objective used for the actor update: the plain simulated objective or the
/// variance-reduced surrogate that subtracts the martingale increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorLossVariant {
    J,
    JTilde,
}

/// Treatment of the jump compensator in the surrogate reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpPath {
    /// Nonlocal network carries the compensator; adds the bias loss term.
    General,
    /// Closed-form compensation against fixed marks of native Poisson
    /// sources; no nonlocal network.
    PoissonFast,
}

/// Training hyperparameters. `width == 0` resolves to `state_dim + 10` when
/// the networks are built.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub grid: TimeGrid,
    pub batch: usize,
    pub iterations: usize,
    pub actor_step: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub explosion: ExplosionMode,
    pub actor_loss: ActorLossVariant,
    pub jump_path: JumpPath,
    pub width: usize,
    pub blocks: usize,
}

impl TrainConfig {
    pub fn new(grid: TimeGrid, batch: usize, iterations: usize, seed: u64) -> Self {
        TrainConfig {
            grid,
            batch,
            iterations,
            actor_step: 10,
            schedule: LrSchedule::default(),
            seed,
            explosion: ExplosionMode::None,
            actor_loss: ActorLossVariant::J,
            jump_path: JumpPath::General,
            width: 0,
            blocks: 3,
        }
    }

    /// A zero-iteration configuration is allowed and yields freshly
    /// initialized networks with an empty report.
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1"));
        }
        if self.actor_step == 0 {
            return Err(Error::InvalidArgument("actor_step must be >= 1"));
        }
        if self.blocks == 0 {
            return Err(Error::InvalidArgument("blocks must be >= 1"));
        }
        match self.explosion {
            ExplosionMode::BoundedActor { bound } => {
                if !bound.is_finite() || bound <= 0.0 {
                    return Err(Error::InvalidArgument("actor bound must be finite and > 0"));
                }
            }
            ExplosionMode::StateClamp { lo, hi, .. } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidArgument("clamp bounds must be finite with lo < hi"));
                }
            }
            ExplosionMode::None => {}
        }
        Ok(())
    }

    fn net_width(&self, state_dim: usize) -> usize {
        if self.width == 0 {
            state_dim + 10
        } else {
            self.width
        }
    }
}

/// Pool of terminal states from the previous critic sweep, used by the
/// terminal-condition loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalBuffer {
    states: Vec<f64>,
    m: usize,
    state_dim: usize,
}

impl TerminalBuffer {
    pub fn empty(state_dim: usize) -> Self {
        TerminalBuffer {
            states: Vec::new(),
            m: 0,
            state_dim,
        }
    }

    /// Wraps `m = states.len() / state_dim` observations; every entry must
    /// be finite.
    pub fn from_states(state_dim: usize, states: Vec<f64>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument("state dimension must be >= 1"));
        }
        if states.len() % state_dim != 0 {
            return Err(Error::InvalidArgument("buffer length must be a multiple of state_dim"));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("buffer states must be finite"));
        }
        let m = states.len() / state_dim;
        Ok(TerminalBuffer {
            states,
            m,
            state_dim,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.state_dim..(j + 1) * self.state_dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub(crate) fn replace(&mut self, states: Vec<f64>) {
        debug_assert_eq!(states.len() % self.state_dim, 0);
        self.m = states.len() / self.state_dim;
        self.states = states;
    }
}

/// One row of the training report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainRow {
    pub iteration: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub error_value: Option<f64>,
    pub error_control: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
}

/// Per-iteration training history.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub rows: Vec<TrainRow>,
}

/// Networks, buffer, and history produced by [`train`]. `clamp_active`
/// records whether state clamping was still in force when training stopped.
pub struct TrainOutput {
    pub critic: ResNet,
    pub actor: ResNet,
    pub nonlocal: Option<ResNet>,
    pub buffer: TerminalBuffer,
    pub report: TrainReport,
    pub clamp_active: bool,
}

/// Reference value function and feedback control used to score training
/// progress.
pub struct ControlOracle {
    pub value: Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>,
    pub control: Box<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
}

/// Clamps every component of `x` to `[lo, hi]`.
pub fn clamp_state(x: &mut [f64], lo: f64, hi: f64) -> Result<()> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument("clamp bounds must be finite with lo < hi"));
    }
    for xi in x.iter_mut() {
        *xi = xi.clamp(lo, hi);
    }
    Ok(())
}

fn eval_control(actor: &ResNet, t: f64, x: &[f64], cache: &mut Cache, u: &mut [f64]) {
    actor.forward_cached(t, x, actor.has_bound(), cache);
    u.copy_from_slice(cache.output());
}

fn check_panels(
    dynamics: &ControlledDynamics,
    grid: &TimeGrid,
    noise: &NoisePanel,
    jumps: &JumpPanel,
) -> Result<()> {
    if noise.dim() != dynamics.state_dim() {
        return Err(Error::InvalidArgument("noise dimension must match the state dimension"));
    }
    if noise.steps() != grid.steps() || jumps.steps() != grid.steps() {
        return Err(Error::InvalidArgument("panel steps must match the grid"));
    }
    if noise.m() != jumps.m() {
        return Err(Error::InvalidArgument("noise and jump panels must have the same batch size"));
    }
    if jumps.num_sources() != dynamics.measure().num_sources() {
        return Err(Error::InvalidArgument("jump panel does not match the measure"));
    }
    Ok(())
}

fn poisson_sources(dynamics: &ControlledDynamics) -> Result<&[crate::sde::CompoundPoissonSource]> {
    match dynamics.measure() {
        LevyMeasureSpec::Native(sources) => {
            if sources.iter().any(|s| s.fixed_mark().is_none()) {
                return Err(Error::UnsupportedMeasure(
                    "the Poisson fast path needs fixed-mark sources",
                ));
            }
            Ok(sources)
        }
        LevyMeasureSpec::External(_) => Err(Error::UnsupportedMeasure(
            "the Poisson fast path needs native fixed-mark sources",
        )),
    }
}

/// Scratch caches reused across paths by the surrogate-reward evaluation.
struct RewardScratch {
    u: Vec<f64>,
    dx: Vec<f64>,
    gmap: Vec<f64>,
    shifted: Vec<f64>,
    actor_cache: Cache,
    dual: DualCache,
    shift_cache: Cache,
    nonlocal_cache: Option<Cache>,
}

impl RewardScratch {
    fn new(problem: &ControlProblem, critic: &ResNet, actor: &ResNet, nonlocal: Option<&ResNet>) -> Self {
        let d = problem.state_dim();
        RewardScratch {
            u: vec![0.0; problem.control_dim()],
            dx: vec![0.0; d],
            gmap: vec![0.0; d],
            shifted: vec![0.0; d],
            actor_cache: Cache::new(actor),
            dual: DualCache::new(critic),
            shift_cache: Cache::new(critic),
            nonlocal_cache: nonlocal.map(Cache::new),
        }
    }
}

fn shifted_value(
    dynamics: &ControlledDynamics,
    critic: &ResNet,
    t: f64,
    x: &[f64],
    z: &[f64],
    u: &[f64],
    gmap: &mut [f64],
    shifted: &mut [f64],
    cache: &mut Cache,
) -> f64 {
    dynamics.jump(x, z, u, gmap);
    for (s, (&xi, &g)) in shifted.iter_mut().zip(x.iter().zip(gmap.iter())) {
        *s = xi + g;
    }
    critic.forward_cached(t, shifted, false, cache);
    cache.output()[0]
}

fn reward_tilde_general_inner(
    problem: &ControlProblem,
    critic: &ResNet,
    actor: &ResNet,
    nonlocal: &ResNet,
    grid: &TimeGrid,
    x: &[f64],
    dw: &[f64],
    jumps: &JumpPanel,
    path: usize,
    step: usize,
    scratch: &mut RewardScratch,
) -> f64 {
    let t = grid.node(step);
    let dt = grid.dt();
    eval_control(actor, t, x, &mut scratch.actor_cache, &mut scratch.u);
    let f_val = (problem.running)(t, x, &scratch.u);
    problem.dynamics.diffusion(x, &scratch.u, dw, &mut scratch.dx);
    critic.forward_dual(t, x, &scratch.dx, false, &mut scratch.dual);
    let v0 = scratch.dual.output()[0];
    let diffusion_term = scratch.dual.tangent()[0];

    let mut jump_sum = 0.0;
    match problem.dynamics.measure() {
        LevyMeasureSpec::Native(sources) => {
            for (k, source) in sources.iter().enumerate() {
                if let Some(z) = source.fixed_mark() {
                    let count = jumps.count(k, path, step);
                    if count > 0 {
                        let v = shifted_value(
                            &problem.dynamics,
                            critic,
                            t,
                            x,
                            z,
                            &scratch.u,
                            &mut scratch.gmap,
                            &mut scratch.shifted,
                            &mut scratch.shift_cache,
                        );
                        jump_sum += count as f64 * (v - v0);
                    }
                } else {
                    for z in jumps.marks(k, path, step) {
                        let v = shifted_value(
                            &problem.dynamics,
                            critic,
                            t,
                            x,
                            z,
                            &scratch.u,
                            &mut scratch.gmap,
                            &mut scratch.shifted,
                            &mut scratch.shift_cache,
                        );
                        jump_sum += v - v0;
                    }
                }
            }
        }
        LevyMeasureSpec::External(_) => {
            for z in jumps.marks(0, path, step) {
                let v = shifted_value(
                    &problem.dynamics,
                    critic,
                    t,
                    x,
                    z,
                    &scratch.u,
                    &mut scratch.gmap,
                    &mut scratch.shifted,
                    &mut scratch.shift_cache,
                );
                jump_sum += v - v0;
            }
        }
    }

    let cache = scratch.nonlocal_cache.as_mut().expect("nonlocal cache");
    nonlocal.forward_cached(t, x, false, cache);
    let non = cache.output()[0];

    f_val * dt - diffusion_term - (jump_sum - dt * non)
}

fn reward_tilde_poisson_inner(
    problem: &ControlProblem,
    critic: &ResNet,
    actor: &ResNet,
    grid: &TimeGrid,
    x: &[f64],
    dw: &[f64],
    jumps: &JumpPanel,
    path: usize,
    step: usize,
    scratch: &mut RewardScratch,
) -> Result<f64> {
    let sources = poisson_sources(&problem.dynamics)?;
    let t = grid.node(step);
    let dt = grid.dt();
    eval_control(actor, t, x, &mut scratch.actor_cache, &mut scratch.u);
    let f_val = (problem.running)(t, x, &scratch.u);
    problem.dynamics.diffusion(x, &scratch.u, dw, &mut scratch.dx);
    critic.forward_dual(t, x, &scratch.dx, false, &mut scratch.dual);
    let v0 = scratch.dual.output()[0];
    let diffusion_term = scratch.dual.tangent()[0];

    let mut jump_sum = 0.0;
    for (k, source) in sources.iter().enumerate() {
        let z = source.fixed_mark().expect("fixed mark");
        let dm = jumps.count(k, path, step) as f64 - source.intensity() * dt;
        let v = shifted_value(
            &problem.dynamics,
            critic,
            t,
            x,
            z,
            &scratch.u,
            &mut scratch.gmap,
            &mut scratch.shifted,
            &mut scratch.shift_cache,
        );
        jump_sum += dm * (v - v0);
    }

    Ok(f_val * dt - diffusion_term - jump_sum)
}

/// Surrogate reward over `[t_n, t_{n+1})` for one path under a general jump
/// measure: running reward times `dt`, minus the simulated diffusion
/// increment of the critic, minus the realized jump increments of the critic
/// net of `dt` times the nonlocal network. Marks are consumed in
/// chronological order.
#[allow(clippy::too_many_arguments)]
pub fn reward_tilde_general(
    problem: &ControlProblem,
    critic: &ResNet,
    actor: &ResNet,
    nonlocal: &ResNet,
    grid: &TimeGrid,
    x: &[f64],
    dw: &[f64],
    jumps: &JumpPanel,
    path: usize,
    step: usize,
) -> Result<f64> {
    let d = problem.state_dim();
    if x.len() != d || dw.len() != d {
        return Err(Error::InvalidArgument("state and noise increments must match the state dimension"));
    }
    if step >= grid.steps() || jumps.steps() != grid.steps() || path >= jumps.m() {
        return Err(Error::InvalidArgument("path or step outside the panel"));
    }
    if jumps.num_sources() != problem.dynamics.measure().num_sources() {
        return Err(Error::InvalidArgument("jump panel does not match the measure"));
    }
    let mut scratch = RewardScratch::new(problem, critic, actor, Some(nonlocal));
    Ok(reward_tilde_general_inner(
        problem, critic, actor, nonlocal, grid, x, dw, jumps, path, step, &mut scratch,
    ))
}

/// Surrogate reward over `[t_n, t_{n+1})` for one path of Poisson-driven
/// dynamics: every fixed-mark source contributes its critic increment times
/// the compensated count `N - lambda dt`, so the jump term is active on
/// every step whether or not a jump fired.
#[allow(clippy::too_many_arguments)]
pub fn reward_tilde_poisson(
    problem: &ControlProblem,
    critic: &ResNet,
    actor: &ResNet,
    grid: &TimeGrid,
    x: &[f64],
    dw: &[f64],
    jumps: &JumpPanel,
    path: usize,
    step: usize,
) -> Result<f64> {
    let d = problem.state_dim();
    if x.len() != d || dw.len() != d {
        return Err(Error::InvalidArgument("state and noise increments must match the state dimension"));
    }
    if step >= grid.steps() || jumps.steps() != grid.steps() || path >= jumps.m() {
        return Err(Error::InvalidArgument("path or step outside the panel"));
    }
    if jumps.num_sources() != problem.dynamics.measure().num_sources() {
        return Err(Error::InvalidArgument("jump panel does not match the measure"));
    }
    let mut scratch = RewardScratch::new(problem, critic, actor, None);
    reward_tilde_poisson_inner(
        problem, critic, actor, grid, x, dw, jumps, path, step, &mut scratch,
    )
}

/// Mean squared one-step temporal-difference residual at grid node `step`
/// over a batch of states and their Euler successors. Layout of `states` and
/// `next_states` is `[path][component]`.
#[allow(clippy::too_many_arguments)]
pub fn critic_loss_td(
    problem: &ControlProblem,
    jump_path: JumpPath,
    critic: &ResNet,
    actor: &ResNet,
    nonlocal: Option<&ResNet>,
    grid: &TimeGrid,
    step: usize,
    states: &[f64],
    next_states: &[f64],
    noise: &NoisePanel,
    jumps: &JumpPanel,
) -> Result<f64> {
    check_panels(&problem.dynamics, grid, noise, jumps)?;
    let d = problem.state_dim();
    let m = noise.m();
    if states.len() != m * d || next_states.len() != m * d {
        return Err(Error::InvalidArgument("state batch must hold m paths"));
    }
    if step >= grid.steps() {
        return Err(Error::InvalidArgument("step outside the grid"));
    }
    if matches!(jump_path, JumpPath::General) && nonlocal.is_none() {
        return Err(Error::InvalidArgument("the general jump path needs a nonlocal network"));
    }
    let mut scratch = RewardScratch::new(problem, critic, actor, nonlocal);
    let mut next_cache = Cache::new(critic);
    let t_next = grid.node(step + 1);
    let mut sum = 0.0;
    for j in 0..m {
        let x = &states[j * d..(j + 1) * d];
        let xn = &next_states[j * d..(j + 1) * d];
        let r = match jump_path {
            JumpPath::General => reward_tilde_general_inner(
                problem,
                critic,
                actor,
                nonlocal.expect("nonlocal"),
                grid,
                x,
                noise.dw(j, step),
                jumps,
                j,
                step,
                &mut scratch,
            ),
            JumpPath::PoissonFast => reward_tilde_poisson_inner(
                problem,
                critic,
                actor,
                grid,
                x,
                noise.dw(j, step),
                jumps,
                j,
                step,
                &mut scratch,
            )?,
        };
        let v0 = scratch.dual.output()[0];
        critic.forward_cached(t_next, xn, false, &mut next_cache);
        let td = r + next_cache.output()[0] - v0;
        sum += td * td;
    }
    Ok(sum / m as f64)
}

/// Terminal-condition loss `(1 / L) * mean_j (v(T, B_j) - g(B_j))^2` over
/// the buffered observations.
pub fn critic_loss_terminal(
    problem: &ControlProblem,
    critic: &ResNet,
    buffer: &TerminalBuffer,
    grid: &TimeGrid,
) -> Result<f64> {
    if buffer.is_empty() {
        return Err(Error::InvalidState("terminal buffer is empty"));
    }
    if buffer.state_dim() != problem.state_dim() {
        return Err(Error::InvalidArgument("buffer dimension must match the state dimension"));
    }
    let horizon = grid.horizon();
    let scale = 1.0 / (grid.steps() as f64 * buffer.m() as f64);
    let mut cache = Cache::new(critic);
    let mut sum = 0.0;
    for j in 0..buffer.m() {
        let x = buffer.state(j);
        critic.forward_cached(horizon, x, false, &mut cache);
        let diff = cache.output()[0] - (problem.terminal)(x);
        sum += diff * diff;
    }
    Ok(sum * scale)
}

/// Bias loss for the nonlocal network: absolute value of the batch mean of
/// the realized jump increments of the critic minus `dt` times the nonlocal
/// network. The absolute value sits outside the mean, so symmetric batches
/// cancel.
#[allow(clippy::too_many_arguments)]
pub fn critic_loss_nonlocal(
    problem: &ControlProblem,
    critic: &ResNet,
    actor: &ResNet,
    nonlocal: &ResNet,
    grid: &TimeGrid,
    step: usize,
    states: &[f64],
    jumps: &JumpPanel,
) -> Result<f64> {
    let d = problem.state_dim();
    let m = jumps.m();
    if states.len() != m * d {
        return Err(Error::InvalidArgument("state batch must hold m paths"));
    }
    if step >= grid.steps() || jumps.steps() != grid.steps() {
        return Err(Error::InvalidArgument("step outside the panel"));
    }
    if jumps.num_sources() != problem.dynamics.measure().num_sources() {
        return Err(Error::InvalidArgument("jump panel does not match the measure"));
    }
    let dt = grid.dt();
    let t = grid.node(step);
    let mut scratch = RewardScratch::new(problem, critic, actor, Some(nonlocal));
    let mut v_cache = Cache::new(critic);
    let mut sum = 0.0;
    for j in 0..m {
        let x = &states[j * d..(j + 1) * d];
        eval_control(actor, t, x, &mut scratch.actor_cache, &mut scratch.u);
        critic.forward_cached(t, x, false, &mut v_cache);
        let v0 = v_cache.output()[0];
        let mut jump_sum = 0.0;
        match problem.dynamics.measure() {
            LevyMeasureSpec::Native(sources) => {
                for (k, source) in sources.iter().enumerate() {
                    if let Some(z) = source.fixed_mark() {
                        let count = jumps.count(k, j, step);
                        if count > 0 {
                            let v = shifted_value(
                                &problem.dynamics,
                                critic,
                                t,
                                x,
                                z,
                                &scratch.u,
                                &mut scratch.gmap,
                                &mut scratch.shifted,
                                &mut scratch.shift_cache,
                            );
                            jump_sum += count as f64 * (v - v0);
                        }
                    } else {
                        for z in jumps.marks(k, j, step) {
                            let v = shifted_value(
                                &problem.dynamics,
                                critic,
                                t,
                                x,
                                z,
                                &scratch.u,
                                &mut scratch.gmap,
                                &mut scratch.shifted,
                                &mut scratch.shift_cache,
                            );
                            jump_sum += v - v0;
                        }
                    }
                }
            }
            LevyMeasureSpec::External(_) => {
                for z in jumps.marks(0, j, step) {
                    let v = shifted_value(
                        &problem.dynamics,
                        critic,
                        t,
                        x,
                        z,
                        &scratch.u,
                        &mut scratch.gmap,
                        &mut scratch.shifted,
                        &mut scratch.shift_cache,
                    );
                    jump_sum += v - v0;
                }
            }
        }
        let cache = scratch.nonlocal_cache.as_mut().expect("nonlocal cache");
        nonlocal.forward_cached(t, x, false, cache);
        sum += jump_sum - dt * cache.output()[0];
    }
    Ok((sum / m as f64).abs())
}

/// Total critic loss: TD term plus terminal term plus, on the general jump
/// path, the nonlocal bias term.
pub fn critic_total(td: f64, terminal: f64, nonlocal: Option<f64>) -> f64 {
    td + terminal + nonlocal.unwrap_or(0.0)
}

/// Per-path samples of the actor objective under the given panels: either
/// the plain objective `sum_n f dt + g(X_T)` or the surrogate variant that
/// uses the full reward correction per step. The critic (and, on the general
/// path, the nonlocal network) is only consulted for the surrogate.
#[allow(clippy::too_many_arguments)]
pub fn actor_objective_samples(
    problem: &ControlProblem,
    jump_path: JumpPath,
    critic: Option<&ResNet>,
    actor: &ResNet,
    nonlocal: Option<&ResNet>,
    grid: &TimeGrid,
    noise: &NoisePanel,
    jumps: &JumpPanel,
    variant: ActorLossVariant,
) -> Result<Vec<f64>> {
    check_panels(&problem.dynamics, grid, noise, jumps)?;
    let d = problem.state_dim();
    let m = noise.m();
    let dt = grid.dt();
    let surrogate = matches!(variant, ActorLossVariant::JTilde);
    if surrogate && critic.is_none() {
        return Err(Error::InvalidArgument("the surrogate actor loss needs a critic"));
    }
    if surrogate && matches!(jump_path, JumpPath::General) && nonlocal.is_none() {
        return Err(Error::InvalidArgument("the general jump path needs a nonlocal network"));
    }
    let scratch_net = critic.unwrap_or(actor);
    let mut scratch = RewardScratch::new(problem, scratch_net, actor, nonlocal);
    let mut x = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        x.copy_from_slice(&problem.x0);
        let mut total = 0.0;
        for n in 0..grid.steps() {
            let t = grid.node(n);
            if surrogate {
                let r = match jump_path {
                    JumpPath::General => reward_tilde_general_inner(
                        problem,
                        critic.expect("critic"),
                        actor,
                        nonlocal.expect("nonlocal"),
                        grid,
                        &x,
                        noise.dw(j, n),
                        jumps,
                        j,
                        n,
                        &mut scratch,
                    ),
                    JumpPath::PoissonFast => reward_tilde_poisson_inner(
                        problem,
                        critic.expect("critic"),
                        actor,
                        grid,
                        &x,
                        noise.dw(j, n),
                        jumps,
                        j,
                        n,
                        &mut scratch,
                    )?,
                };
                total += r;
            } else {
                eval_control(actor, t, &x, &mut scratch.actor_cache, &mut scratch.u);
                total += (problem.running)(t, &x, &scratch.u) * dt;
            }
            euler_step(
                &problem.dynamics,
                &x,
                &scratch.u,
                noise.dw(j, n),
                jumps,
                j,
                n,
                dt,
                &mut next,
            )?;
            x.copy_from_slice(&next);
        }
        total += (problem.terminal)(&x);
        out.push(total);
    }
    Ok(out)
}

/// Batch mean of [`actor_objective_samples`].
#[allow(clippy::too_many_arguments)]
pub fn actor_objective(
    problem: &ControlProblem,
    jump_path: JumpPath,
    critic: Option<&ResNet>,
    actor: &ResNet,
    nonlocal: Option<&ResNet>,
    grid: &TimeGrid,
    noise: &NoisePanel,
    jumps: &JumpPanel,
    variant: ActorLossVariant,
) -> Result<f64> {
    let samples = actor_objective_samples(
        problem, jump_path, critic, actor, nonlocal, grid, noise, jumps, variant,
    )?;
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

#[cfg(feature = "std")]
struct Stopwatch(std::time::Instant);

#[cfg(feature = "std")]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(not(feature = "std"))]
struct Stopwatch;

#[cfg(not(feature = "std"))]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch
    }

    fn seconds(&self) -> f64 {
        0.0
    }
}

fn simulate_with(
    problem: &ControlProblem,
    actor: &ResNet,
    grid: &TimeGrid,
    noise: NoisePanel,
    jumps: JumpPanel,
    clamp: Option<(f64, f64)>,
) -> Result<PathBatch> {
    let cache = RefCell::new(Cache::new(actor));
    let bounded = actor.has_bound();
    let policy = |t: f64, x: &[f64], u: &mut [f64]| {
        let mut cache = cache.borrow_mut();
        actor.forward_cached(t, x, bounded, &mut cache);
        u.copy_from_slice(cache.output());
    };
    simulate_batch(&problem.dynamics, policy, grid, &problem.x0, noise, jumps, clamp)
}

struct CriticSweepCtx<'a> {
    problem: &'a ControlProblem,
    critic: &'a ResNet,
    actor: &'a ResNet,
    nonlocal: Option<&'a ResNet>,
    jump_path: JumpPath,
    grid: &'a TimeGrid,
    step: usize,
    states: &'a [f64],
    noise: &'a NoisePanel,
    jumps: &'a JumpPanel,
    m: usize,
    clamp: Option<(f64, f64)>,
}

struct CriticPart {
    next: Vec<f64>,
    sq_sum: f64,
    bias_sum: f64,
    grad: Vec<f64>,
    bias_grad: Vec<f64>,
    nonlocal_grad: Vec<f64>,
    nonlocal_bias_grad: Vec<f64>,
}

fn critic_sweep_chunk(ctx: &CriticSweepCtx<'_>, range: Range<usize>) -> Result<CriticPart> {
    let d = ctx.problem.state_dim();
    let dt = ctx.grid.dt();
    let t = ctx.grid.node(ctx.step);
    let t_next = ctx.grid.node(ctx.step + 1);
    let m = ctx.m as f64;
    let general = matches!(ctx.jump_path, JumpPath::General);

    let mut part = CriticPart {
        next: vec![0.0; range.len() * d],
        sq_sum: 0.0,
        bias_sum: 0.0,
        grad: vec![0.0; ctx.critic.param_count()],
        bias_grad: if general {
            vec![0.0; ctx.critic.param_count()]
        } else {
            Vec::new()
        },
        nonlocal_grad: ctx.nonlocal.map_or(Vec::new(), |n| vec![0.0; n.param_count()]),
        nonlocal_bias_grad: ctx.nonlocal.map_or(Vec::new(), |n| vec![0.0; n.param_count()]),
    };

    let mut u = vec![0.0; ctx.problem.control_dim()];
    let mut dx = vec![0.0; d];
    let mut gmap = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    let mut actor_cache = Cache::new(ctx.actor);
    let mut dual = DualCache::new(ctx.critic);
    let mut next_cache = Cache::new(ctx.critic);
    let mut mark_cache = Cache::new(ctx.critic);
    let mut nonlocal_cache = ctx.nonlocal.map(Cache::new);
    let num_sources = ctx.problem.dynamics.measure().num_sources();
    let mut fixed_caches: Vec<Cache> = (0..num_sources).map(|_| Cache::new(ctx.critic)).collect();
    let mut fixed_weight = vec![0.0; num_sources];

    for j in range.clone() {
        let x = &ctx.states[j * d..(j + 1) * d];
        let dw = ctx.noise.dw(j, ctx.step);
        eval_control(ctx.actor, t, x, &mut actor_cache, &mut u);
        let f_val = (ctx.problem.running)(t, x, &u);
        ctx.problem.dynamics.diffusion(x, &u, dw, &mut dx);
        ctx.critic.forward_dual(t, x, &dx, false, &mut dual);
        let v0 = dual.output()[0];
        let tangent = dual.tangent()[0];

        // Forward pass over jump terms; fixed-mark sources keep their cache
        // for the backward pass, sampled marks are revisited afterwards.
        let mut jump_sum = 0.0;
        let mut v0_weight = 0.0;
        let mut sampled_marks = 0usize;
        match ctx.problem.dynamics.measure() {
            LevyMeasureSpec::Native(sources) => {
                for (k, source) in sources.iter().enumerate() {
                    fixed_weight[k] = 0.0;
                    if let Some(z) = source.fixed_mark() {
                        let count = ctx.jumps.count(k, j, ctx.step);
                        let weight = match ctx.jump_path {
                            JumpPath::PoissonFast => count as f64 - source.intensity() * dt,
                            JumpPath::General => count as f64,
                        };
                        if weight != 0.0 {
                            ctx.problem.dynamics.jump(x, z, &u, &mut gmap);
                            for (s, (&xi, &g)) in shifted.iter_mut().zip(x.iter().zip(&gmap)) {
                                *s = xi + g;
                            }
                            ctx.critic.forward_cached(t, &shifted, false, &mut fixed_caches[k]);
                            jump_sum += weight * (fixed_caches[k].output()[0] - v0);
                            fixed_weight[k] = weight;
                            v0_weight += weight;
                        }
                    } else {
                        for z in ctx.jumps.marks(k, j, ctx.step) {
                            ctx.problem.dynamics.jump(x, z, &u, &mut gmap);
                            for (s, (&xi, &g)) in shifted.iter_mut().zip(x.iter().zip(&gmap)) {
                                *s = xi + g;
                            }
                            ctx.critic.forward_cached(t, &shifted, false, &mut mark_cache);
                            jump_sum += mark_cache.output()[0] - v0;
                            v0_weight += 1.0;
                            sampled_marks += 1;
                        }
                    }
                }
            }
            LevyMeasureSpec::External(_) => {
                for z in ctx.jumps.marks(0, j, ctx.step) {
                    ctx.problem.dynamics.jump(x, z, &u, &mut gmap);
                    for (s, (&xi, &g)) in shifted.iter_mut().zip(x.iter().zip(&gmap)) {
                        *s = xi + g;
                    }
                    ctx.critic.forward_cached(t, &shifted, false, &mut mark_cache);
                    jump_sum += mark_cache.output()[0] - v0;
                    v0_weight += 1.0;
                    sampled_marks += 1;
                }
            }
        }

        let mut non_val = 0.0;
        if let (Some(net), Some(cache)) = (ctx.nonlocal, nonlocal_cache.as_mut()) {
            net.forward_cached(t, x, false, cache);
            non_val = cache.output()[0];
        }

        let r = if general {
            f_val * dt - tangent - (jump_sum - dt * non_val)
        } else {
            f_val * dt - tangent - jump_sum
        };

        let next = &mut part.next[(j - range.start) * d..(j - range.start + 1) * d];
        euler_step(&ctx.problem.dynamics, x, &u, dw, ctx.jumps, j, ctx.step, dt, next)?;
        if let Some((lo, hi)) = ctx.clamp {
            for c in next.iter_mut() {
                *c = c.clamp(lo, hi);
            }
        }
        ctx.critic.forward_cached(t_next, next, false, &mut next_cache);
        let td = r + next_cache.output()[0] - v0;
        part.sq_sum += td * td;

        let w = 2.0 * td / m;
        ctx.critic.backward_dual(
            &mut dual,
            &[w * (v0_weight - 1.0)],
            &[-w],
            Some(&mut part.grad),
            None,
            None,
        );
        ctx.critic.backward(&mut next_cache, &[w], Some(&mut part.grad), None);
        for (k, cache) in fixed_caches.iter_mut().enumerate() {
            if fixed_weight[k] != 0.0 {
                ctx.critic.backward(cache, &[-w * fixed_weight[k]], Some(&mut part.grad), None);
            }
        }
        if general {
            let bias = jump_sum - dt * non_val;
            part.bias_sum += bias;
            ctx.critic.backward_dual(
                &mut dual,
                &[-v0_weight],
                &[0.0],
                Some(&mut part.bias_grad),
                None,
                None,
            );
            for (k, cache) in fixed_caches.iter_mut().enumerate() {
                if fixed_weight[k] != 0.0 {
                    ctx.critic.backward(cache, &[fixed_weight[k]], Some(&mut part.bias_grad), None);
                }
            }
            if let (Some(net), Some(cache)) = (ctx.nonlocal, nonlocal_cache.as_mut()) {
                net.backward(cache, &[w * dt], Some(&mut part.nonlocal_grad), None);
                net.backward(cache, &[-dt], Some(&mut part.nonlocal_bias_grad), None);
            }
        }
        if sampled_marks > 0 {
            // Second pass over sampled marks now that the residual is known.
            let revisit = |z: &[f64], part: &mut CriticPart, gmap: &mut [f64], shifted: &mut [f64], cache: &mut Cache| {
                ctx.problem.dynamics.jump(x, z, &u, gmap);
                for (s, (&xi, &g)) in shifted.iter_mut().zip(x.iter().zip(gmap.iter())) {
                    *s = xi + g;
                }
                ctx.critic.forward_cached(t, shifted, false, cache);
                ctx.critic.backward(cache, &[-w], Some(&mut part.grad), None);
                if general {
                    ctx.critic.backward(cache, &[1.0], Some(&mut part.bias_grad), None);
                }
            };
            match ctx.problem.dynamics.measure() {
                LevyMeasureSpec::Native(sources) => {
                    for (k, source) in sources.iter().enumerate() {
                        if source.fixed_mark().is_none() {
                            for z in ctx.jumps.marks(k, j, ctx.step) {
                                revisit(z, &mut part, &mut gmap, &mut shifted, &mut mark_cache);
                            }
                        }
                    }
                }
                LevyMeasureSpec::External(_) => {
                    for z in ctx.jumps.marks(0, j, ctx.step) {
                        revisit(z, &mut part, &mut gmap, &mut shifted, &mut mark_cache);
                    }
                }
            }
        }
    }
    Ok(part)
}

struct TerminalCtx<'a> {
    problem: &'a ControlProblem,
    critic: &'a ResNet,
    buffer: &'a TerminalBuffer,
    horizon: f64,
    scale: f64,
}

struct TerminalPart {
    loss: f64,
    grad: Vec<f64>,
}

fn terminal_chunk(ctx: &TerminalCtx<'_>, range: Range<usize>) -> TerminalPart {
    let mut part = TerminalPart {
        loss: 0.0,
        grad: vec![0.0; ctx.critic.param_count()],
    };
    let mut cache = Cache::new(ctx.critic);
    for j in range {
        let x = ctx.buffer.state(j);
        ctx.critic.forward_cached(ctx.horizon, x, false, &mut cache);
        let diff = cache.output()[0] - (ctx.problem.terminal)(x);
        part.loss += diff * diff * ctx.scale;
        ctx.critic.backward(&mut cache, &[2.0 * diff * ctx.scale], Some(&mut part.grad), None);
    }
    part
}

struct ActorPassCtx<'a> {
    problem: &'a ControlProblem,
    critic: &'a ResNet,
    actor: &'a ResNet,
    nonlocal: Option<&'a ResNet>,
    jump_path: JumpPath,
    variant: ActorLossVariant,
    grid: &'a TimeGrid,
    noise: &'a NoisePanel,
    jumps: &'a JumpPanel,
    m: usize,
    clamp: Option<(f64, f64)>,
}

struct ActorPart {
    obj_sum: f64,
    grad: Vec<f64>,
}

fn actor_pass_chunk(ctx: &ActorPassCtx<'_>, range: Range<usize>) -> Result<ActorPart> {
    let d = ctx.problem.state_dim();
    let dc = ctx.problem.control_dim();
    let l = ctx.grid.steps();
    let dt = ctx.grid.dt();
    let m = ctx.m as f64;
    let surrogate = matches!(ctx.variant, ActorLossVariant::JTilde);
    let general = matches!(ctx.jump_path, JumpPath::General);

    let mut part = ActorPart {
        obj_sum: 0.0,
        grad: vec![0.0; ctx.actor.param_count()],
    };

    let mut xpanel = vec![0.0; (l + 1) * d];
    let mut upanel = vec![0.0; l * dc];
    let mut clamped = vec![false; (l + 1) * d];
    let mut actor_cache = Cache::new(ctx.actor);
    let mut reward = RewardScratch::new(ctx.problem, ctx.critic, ctx.actor, ctx.nonlocal);
    let mut xbar = vec![0.0; d];
    let mut xbar_new = vec![0.0; d];
    let mut ubar = vec![0.0; dc];
    let mut input_bar = vec![0.0; 1 + d];
    let mut input_bar_tan = vec![0.0; 1 + d];
    let mut next = vec![0.0; d];

    for j in range {
        // Forward sweep: states, controls, clamp marks, objective value.
        xpanel[..d].copy_from_slice(&ctx.problem.x0);
        if ctx.clamp.is_some() {
            clamped.iter_mut().for_each(|c| *c = false);
        }
        let mut total = 0.0;
        for n in 0..l {
            let t = ctx.grid.node(n);
            let (head, tail) = xpanel.split_at_mut((n + 1) * d);
            let x = &head[n * d..];
            let u = &mut upanel[n * dc..(n + 1) * dc];
            eval_control(ctx.actor, t, x, &mut actor_cache, u);
            if surrogate {
                let r = match ctx.jump_path {
                    JumpPath::General => reward_tilde_general_inner(
                        ctx.problem,
                        ctx.critic,
                        ctx.actor,
                        ctx.nonlocal.expect("nonlocal"),
                        ctx.grid,
                        x,
                        ctx.noise.dw(j, n),
                        ctx.jumps,
                        j,
                        n,
                        &mut reward,
                    ),
                    JumpPath::PoissonFast => reward_tilde_poisson_inner(
                        ctx.problem,
                        ctx.critic,
                        ctx.actor,
                        ctx.grid,
                        x,
                        ctx.noise.dw(j, n),
                        ctx.jumps,
                        j,
                        n,
                        &mut reward,
                    )?,
                };
                total += r;
            } else {
                total += (ctx.problem.running)(t, x, u) * dt;
            }
            euler_step(
                &ctx.problem.dynamics,
                x,
                u,
                ctx.noise.dw(j, n),
                ctx.jumps,
                j,
                n,
                dt,
                &mut next,
            )?;
            if let Some((lo, hi)) = ctx.clamp {
                for (c, val) in next.iter_mut().enumerate() {
                    if *val < lo {
                        *val = lo;
                        clamped[(n + 1) * d + c] = true;
                    } else if *val > hi {
                        *val = hi;
                        clamped[(n + 1) * d + c] = true;
                    }
                }
            }
            tail[..d].copy_from_slice(&next);
        }
        let x_term = &xpanel[l * d..];
        total += (ctx.problem.terminal)(x_term);
        part.obj_sum += total;

        // Backward sweep through the Euler scheme.
        xbar.iter_mut().for_each(|v| *v = 0.0);
        (ctx.problem.grads.terminal)(x_term, 1.0 / m, &mut xbar);
        for n in (0..l).rev() {
            let t = ctx.grid.node(n);
            let x = &xpanel[n * d..(n + 1) * d];
            let u = &upanel[n * dc..(n + 1) * dc];
            let dw = ctx.noise.dw(j, n);
            if ctx.clamp.is_some() {
                for c in 0..d {
                    if clamped[(n + 1) * d + c] {
                        xbar[c] = 0.0;
                    }
                }
            }
            xbar_new.iter_mut().for_each(|v| *v = 0.0);
            ubar.iter_mut().for_each(|v| *v = 0.0);
            let stepctx = StepCtx {
                grid: ctx.grid,
                step: n,
                path: j,
                x,
                u,
                dw,
                jumps: ctx.jumps,
            };
            (ctx.problem.grads.step)(&stepctx, &xbar, &mut xbar_new, &mut ubar);
            (ctx.problem.grads.running)(t, x, u, dt / m, &mut xbar_new, &mut ubar);

            if surrogate {
                // Gradient of the per-step martingale correction
                // `tangent + jump increments (- dt * nonlocal)`, weight -1/m.
                let wm = -1.0 / m;
                ctx.problem.dynamics.diffusion(x, u, dw, &mut reward.dx);
                ctx.critic.forward_dual(t, x, &reward.dx, false, &mut reward.dual);
                let mut v0_weight = 0.0;
                let shift = |z: &[f64], weight: f64, xbar_new: &mut [f64], ubar: &mut [f64],
                             input_bar: &mut [f64], reward: &mut RewardScratch| {
                    ctx.problem.dynamics.jump(x, z, u, &mut reward.gmap);
                    for (s, (&xi, &g)) in
                        reward.shifted.iter_mut().zip(x.iter().zip(&reward.gmap))
                    {
                        *s = xi + g;
                    }
                    ctx.critic.forward_cached(t, &reward.shifted, false, &mut reward.shift_cache);
                    input_bar.iter_mut().for_each(|v| *v = 0.0);
                    ctx.critic.backward(
                        &mut reward.shift_cache,
                        &[wm * weight],
                        None,
                        Some(input_bar),
                    );
                    for c in 0..d {
                        xbar_new[c] += input_bar[1 + c];
                    }
                    (ctx.problem.grads.jump)(x, z, u, &input_bar[1..], xbar_new, ubar);
                };
                match ctx.problem.dynamics.measure() {
                    LevyMeasureSpec::Native(sources) => {
                        for (k, source) in sources.iter().enumerate() {
                            if let Some(z) = source.fixed_mark() {
                                let count = ctx.jumps.count(k, j, n);
                                let weight = match ctx.jump_path {
                                    JumpPath::PoissonFast => {
                                        count as f64 - source.intensity() * dt
                                    }
                                    JumpPath::General => count as f64,
                                };
                                if weight != 0.0 {
                                    shift(z, weight, &mut xbar_new, &mut ubar, &mut input_bar, &mut reward);
                                    v0_weight += weight;
                                }
                            } else {
                                for z in ctx.jumps.marks(k, j, n) {
                                    shift(z, 1.0, &mut xbar_new, &mut ubar, &mut input_bar, &mut reward);
                                    v0_weight += 1.0;
                                }
                            }
                        }
                    }
                    LevyMeasureSpec::External(_) => {
                        for z in ctx.jumps.marks(0, j, n) {
                            shift(z, 1.0, &mut xbar_new, &mut ubar, &mut input_bar, &mut reward);
                            v0_weight += 1.0;
                        }
                    }
                }
                input_bar.iter_mut().for_each(|v| *v = 0.0);
                input_bar_tan.iter_mut().for_each(|v| *v = 0.0);
                ctx.critic.backward_dual(
                    &mut reward.dual,
                    &[-wm * v0_weight],
                    &[wm],
                    None,
                    Some(&mut input_bar),
                    Some(&mut input_bar_tan),
                );
                for c in 0..d {
                    xbar_new[c] += input_bar[1 + c];
                }
                (ctx.problem.grads.diffusion)(x, u, dw, &input_bar_tan[1..], &mut xbar_new, &mut ubar);
                if general {
                    let net = ctx.nonlocal.expect("nonlocal");
                    let cache = reward.nonlocal_cache.as_mut().expect("nonlocal cache");
                    net.forward_cached(t, x, false, cache);
                    input_bar.iter_mut().for_each(|v| *v = 0.0);
                    net.backward(cache, &[-wm * dt], None, Some(&mut input_bar));
                    for c in 0..d {
                        xbar_new[c] += input_bar[1 + c];
                    }
                }
            }

            ctx.actor.forward_cached(t, x, ctx.actor.has_bound(), &mut actor_cache);
            input_bar.iter_mut().for_each(|v| *v = 0.0);
            ctx.actor.backward(&mut actor_cache, &ubar, Some(&mut part.grad), Some(&mut input_bar));
            for c in 0..d {
                xbar_new[c] += input_bar[1 + c];
            }
            xbar.copy_from_slice(&xbar_new);
        }
    }
    Ok(part)
}

fn add_scaled(acc: &mut [f64], inc: &[f64], scale: f64) {
    for (a, &g) in acc.iter_mut().zip(inc) {
        *a += scale * g;
    }
}

/// Losses, parameter gradients, and successor states of one critic update
/// at grid node `step`, exactly as consumed inside [`train`].
pub struct CriticNodeEval {
    pub td_loss: f64,
    pub terminal_loss: f64,
    pub nonlocal_loss: Option<f64>,
    pub total: f64,
    pub next_states: Vec<f64>,
    pub critic_grad: Vec<f64>,
    pub nonlocal_grad: Option<Vec<f64>>,
}

/// Evaluates one node of the critic sweep: simulates the Euler successors of
/// `states` under the frozen actor, assembles the TD, terminal, and (general
/// path) nonlocal bias losses, and returns their summed parameter gradients.
/// With `terminal_from_next` the terminal term reads the just-computed
/// successors instead of `buffer`, which is how the sweep's last node
/// refreshes the pool.
#[allow(clippy::too_many_arguments)]
pub fn critic_node_eval(
    problem: &ControlProblem,
    jump_path: JumpPath,
    critic: &ResNet,
    actor: &ResNet,
    nonlocal: Option<&ResNet>,
    grid: &TimeGrid,
    step: usize,
    states: &[f64],
    noise: &NoisePanel,
    jumps: &JumpPanel,
    buffer: &TerminalBuffer,
    clamp: Option<(f64, f64)>,
    terminal_from_next: bool,
) -> Result<CriticNodeEval> {
    check_panels(&problem.dynamics, grid, noise, jumps)?;
    let d = problem.state_dim();
    let m = noise.m();
    if states.len() != m * d {
        return Err(Error::InvalidArgument("state batch must hold m paths"));
    }
    if step >= grid.steps() {
        return Err(Error::InvalidArgument("step outside the grid"));
    }
    let general = matches!(jump_path, JumpPath::General);
    if general && nonlocal.is_none() {
        return Err(Error::InvalidArgument("the general jump path needs a nonlocal network"));
    }
    if !terminal_from_next && buffer.is_empty() {
        return Err(Error::InvalidState("terminal buffer is empty"));
    }

    let ctx = CriticSweepCtx {
        problem,
        critic,
        actor,
        nonlocal,
        jump_path,
        grid,
        step,
        states,
        noise,
        jumps,
        m,
        clamp,
    };
    let parts = par::run(m, par::CHUNK, |range| critic_sweep_chunk(&ctx, range));
    let mut next_states = vec![0.0; m * d];
    let mut critic_grad = vec![0.0; critic.param_count()];
    let mut nonlocal_grad = nonlocal.map(|n| vec![0.0; n.param_count()]);
    let mut bias_grad = if general {
        vec![0.0; critic.param_count()]
    } else {
        Vec::new()
    };
    let mut nonlocal_bias_grad = if general {
        nonlocal.map(|n| vec![0.0; n.param_count()])
    } else {
        None
    };
    let mut sq_sum = 0.0;
    let mut bias_sum = 0.0;
    let mut offset = 0;
    for part in parts {
        let part = part?;
        next_states[offset..offset + part.next.len()].copy_from_slice(&part.next);
        offset += part.next.len();
        sq_sum += part.sq_sum;
        bias_sum += part.bias_sum;
        add_scaled(&mut critic_grad, &part.grad, 1.0);
        if general {
            add_scaled(&mut bias_grad, &part.bias_grad, 1.0);
            if let (Some(g), Some(bg)) = (nonlocal_grad.as_mut(), nonlocal_bias_grad.as_mut()) {
                add_scaled(g, &part.nonlocal_grad, 1.0);
                add_scaled(bg, &part.nonlocal_bias_grad, 1.0);
            }
        }
    }
    let td_loss = sq_sum / m as f64;

    let fresh;
    let terminal_source = if terminal_from_next {
        fresh = TerminalBuffer::from_states(d, next_states.clone())?;
        &fresh
    } else {
        buffer
    };
    let term_ctx = TerminalCtx {
        problem,
        critic,
        buffer: terminal_source,
        horizon: grid.horizon(),
        scale: 1.0 / (grid.steps() as f64 * terminal_source.m() as f64),
    };
    let term_parts = par::run(terminal_source.m(), par::CHUNK, |range| {
        terminal_chunk(&term_ctx, range)
    });
    let mut terminal_loss = 0.0;
    for part in term_parts {
        terminal_loss += part.loss;
        add_scaled(&mut critic_grad, &part.grad, 1.0);
    }

    let mut nonlocal_loss = None;
    if general {
        let mean_bias = bias_sum / m as f64;
        nonlocal_loss = Some(mean_bias.abs());
        let sign = if mean_bias > 0.0 {
            1.0
        } else if mean_bias < 0.0 {
            -1.0
        } else {
            0.0
        };
        if sign != 0.0 {
            add_scaled(&mut critic_grad, &bias_grad, sign / m as f64);
            if let (Some(g), Some(bg)) = (nonlocal_grad.as_mut(), nonlocal_bias_grad.as_ref()) {
                add_scaled(g, bg, sign / m as f64);
            }
        }
    }

    let total = critic_total(td_loss, terminal_loss, nonlocal_loss);
    Ok(CriticNodeEval {
        td_loss,
        terminal_loss,
        nonlocal_loss,
        total,
        next_states,
        critic_grad,
        nonlocal_grad,
    })
}

/// Mean objective over the panel batch and its gradient with respect to the
/// actor parameters, obtained by backpropagation through the Euler scheme.
/// This is the quantity [`train`] feeds (sign-adjusted for the sense) to the
/// actor's optimizer; the optional clamp mirrors training-time state
/// clamping, with clamped components cut out of the chain rule.
#[allow(clippy::too_many_arguments)]
pub fn actor_objective_grad(
    problem: &ControlProblem,
    jump_path: JumpPath,
    critic: Option<&ResNet>,
    actor: &ResNet,
    nonlocal: Option<&ResNet>,
    grid: &TimeGrid,
    noise: &NoisePanel,
    jumps: &JumpPanel,
    variant: ActorLossVariant,
    clamp: Option<(f64, f64)>,
) -> Result<(f64, Vec<f64>)> {
    check_panels(&problem.dynamics, grid, noise, jumps)?;
    let surrogate = matches!(variant, ActorLossVariant::JTilde);
    if surrogate && critic.is_none() {
        return Err(Error::InvalidArgument("the surrogate actor loss needs a critic"));
    }
    if surrogate && matches!(jump_path, JumpPath::General) && nonlocal.is_none() {
        return Err(Error::InvalidArgument("the general jump path needs a nonlocal network"));
    }
    let m = noise.m();
    let ctx = ActorPassCtx {
        problem,
        critic: critic.unwrap_or(actor),
        actor,
        nonlocal,
        jump_path,
        variant,
        grid,
        noise,
        jumps,
        m,
        clamp,
    };
    let parts = par::run(m, par::CHUNK, |range| actor_pass_chunk(&ctx, range));
    let mut obj_sum = 0.0;
    let mut grad = vec![0.0; actor.param_count()];
    for part in parts {
        let part = part?;
        obj_sum += part.obj_sum;
        add_scaled(&mut grad, &part.grad, 1.0);
    }
    Ok((obj_sum / m as f64, grad))
}

struct EvalCtx<'a> {
    critic: &'a ResNet,
    actor: &'a ResNet,
    oracle: &'a ControlOracle,
    grid: &'a TimeGrid,
    m: usize,
    dc: usize,
}

fn evaluate_errors(ctx: &EvalCtx<'_>, batch: &PathBatch) -> Result<(f64, f64)> {
    let l = ctx.grid.steps();
    let m = ctx.m;
    let dc = ctx.dc;
    let mut approx_v = vec![0.0; l * m];
    let mut exact_v = vec![0.0; l * m];
    let mut approx_u = vec![0.0; l * m * dc];
    let mut exact_u = vec![0.0; l * m * dc];
    let mut v_cache = Cache::new(ctx.critic);
    let mut a_cache = Cache::new(ctx.actor);
    for n in 0..l {
        let t = ctx.grid.node(n);
        for j in 0..m {
            let x = batch.state(j, n);
            ctx.critic.forward_cached(t, x, false, &mut v_cache);
            approx_v[n * m + j] = v_cache.output()[0];
            exact_v[n * m + j] = (ctx.oracle.value)(t, x);
            let at = (n * m + j) * dc;
            ctx.actor.forward_cached(t, x, ctx.actor.has_bound(), &mut a_cache);
            approx_u[at..at + dc].copy_from_slice(a_cache.output());
            (ctx.oracle.control)(t, x, &mut exact_u[at..at + dc]);
        }
    }
    let dt = ctx.grid.dt();
    let ev = metrics::error_value(dt, &approx_v, &exact_v, l, m)?;
    let ec = metrics::error_control(dt, &approx_u, &exact_u, l, m, dc)?;
    Ok((ev, ec))
}

/// Runs the actor-critic loop and returns the trained networks together
/// with the per-iteration report.
///
/// Per iteration: one critic sweep over the grid (simulating a fresh batch
/// from `x0` under the frozen actor, one optimizer step per grid node on the
/// summed critic loss, refreshing the terminal buffer at the last node
/// before its loss term is evaluated), then `actor_step` optimizer steps on
/// the actor objective re-evaluated on one fresh set of panels, then, when
/// an oracle is supplied, value and control errors on held-out panels.
pub fn train(
    problem: &ControlProblem,
    config: &TrainConfig,
    oracle: Option<&ControlOracle>,
) -> Result<TrainOutput> {
    config.validate()?;
    if matches!(config.jump_path, JumpPath::PoissonFast) {
        poisson_sources(&problem.dynamics)?;
    }
    let d = problem.state_dim();
    let dc = problem.control_dim();
    let grid = &config.grid;
    let l = grid.steps();
    let m = config.batch;
    let width = config.net_width(d);
    let general = matches!(config.jump_path, JumpPath::General);

    let bound = match config.explosion {
        ExplosionMode::BoundedActor { bound } => Some(bound),
        _ => None,
    };
    let mut critic = ResNet::init(d, width, config.blocks, 1, None, rng::derive(config.seed, &[tags::NET, 0]))?;
    let mut actor = ResNet::init(d, width, config.blocks, dc, bound, rng::derive(config.seed, &[tags::NET, 1]))?;
    let mut nonlocal = if general {
        Some(ResNet::init(d, width, config.blocks, 1, None, rng::derive(config.seed, &[tags::NET, 2]))?)
    } else {
        None
    };

    let mut critic_adam = AdamState::new(critic.param_count());
    let mut actor_adam = AdamState::new(actor.param_count());
    let mut nonlocal_adam = nonlocal.as_ref().map(|n| AdamState::new(n.param_count()));

    let clamp_cfg = match config.explosion {
        ExplosionMode::StateClamp { lo, hi, warmup } => Some((lo, hi, warmup)),
        _ => None,
    };
    let clamp_at = |iteration: usize| -> Option<(f64, f64)> {
        clamp_cfg.and_then(|(lo, hi, warmup)| (iteration < warmup).then_some((lo, hi)))
    };

    // The buffer starts from one simulation under the freshly initialized
    // actor so the terminal loss is defined from the first update on.
    let noise = NoisePanel::sample(grid, m, d, rng::derive(config.seed, &[tags::BUFFER, 0]))?;
    let jumps = JumpPanel::sample(problem.dynamics.measure(), grid, m, rng::derive(config.seed, &[tags::BUFFER, 1]))?;
    let init_batch = simulate_with(problem, &actor, grid, noise, jumps, clamp_at(0))?;
    let mut terminal_states = vec![0.0; m * d];
    for j in 0..m {
        terminal_states[j * d..(j + 1) * d].copy_from_slice(init_batch.state(j, l));
    }
    let mut buffer = TerminalBuffer::from_states(d, terminal_states)?;
    drop(init_batch);

    let mut rows = Vec::with_capacity(config.iterations);
    let mut states = vec![0.0; m * d];

    for iteration in 0..config.iterations {
        let watch = Stopwatch::start();
        let lr = config.schedule.at(iteration, config.iterations);
        let clamp = clamp_at(iteration);
        let iter_tag = iteration as u64;

        // Critic sweep.
        let noise = NoisePanel::sample(grid, m, d, rng::derive(config.seed, &[tags::CRITIC, iter_tag, 0]))?;
        let jumps = JumpPanel::sample(problem.dynamics.measure(), grid, m, rng::derive(config.seed, &[tags::CRITIC, iter_tag, 1]))?;
        for j in 0..m {
            states[j * d..(j + 1) * d].copy_from_slice(&problem.x0);
        }
        let mut critic_loss_sum = 0.0;
        for n in 0..l {
            let eval = critic_node_eval(
                problem,
                config.jump_path,
                &critic,
                &actor,
                nonlocal.as_ref(),
                grid,
                n,
                &states,
                &noise,
                &jumps,
                &buffer,
                clamp,
                n == l - 1,
            )?;
            critic_loss_sum += eval.total;
            critic_adam.update(critic.params_mut(), &eval.critic_grad, lr)?;
            if let (Some(net), Some(adam), Some(grad)) =
                (nonlocal.as_mut(), nonlocal_adam.as_mut(), eval.nonlocal_grad.as_ref())
            {
                adam.update(net.params_mut(), grad, lr)?;
            }
            if n == l - 1 {
                buffer.replace(eval.next_states);
            } else {
                states = eval.next_states;
            }
        }
        let critic_loss = critic_loss_sum / l as f64;

        // Actor updates: the objective is re-evaluated on the same panels
        // after every optimizer step; the reported loss is the first value.
        let noise = NoisePanel::sample(grid, m, d, rng::derive(config.seed, &[tags::ACTOR, iter_tag, 0]))?;
        let jumps = JumpPanel::sample(problem.dynamics.measure(), grid, m, rng::derive(config.seed, &[tags::ACTOR, iter_tag, 1]))?;
        let sense_sign = match problem.sense {
            Sense::Maximize => -1.0,
            Sense::Minimize => 1.0,
        };
        let mut actor_loss = 0.0;
        for s in 0..config.actor_step {
            let (objective, mut grad) = actor_objective_grad(
                problem,
                config.jump_path,
                Some(&critic),
                &actor,
                nonlocal.as_ref(),
                grid,
                &noise,
                &jumps,
                config.actor_loss,
                clamp,
            )?;
            if s == 0 {
                actor_loss = objective;
            }
            if sense_sign < 0.0 {
                for g in grad.iter_mut() {
                    *g = -*g;
                }
            }
            actor_adam.update(actor.params_mut(), &grad, lr)?;
        }

        // Held-out panels score the current networks against the oracle.
        let (error_value, error_control) = match oracle {
            Some(oracle) => {
                let noise = NoisePanel::sample(grid, m, d, rng::derive(config.seed, &[tags::EVAL, iter_tag, 0]))?;
                let jumps = JumpPanel::sample(problem.dynamics.measure(), grid, m, rng::derive(config.seed, &[tags::EVAL, iter_tag, 1]))?;
                let batch = simulate_with(problem, &actor, grid, noise, jumps, clamp)?;
                let ctx = EvalCtx {
                    critic: &critic,
                    actor: &actor,
                    oracle,
                    grid,
                    m,
                    dc,
                };
                let (ev, ec) = evaluate_errors(&ctx, &batch)?;
                (Some(ev), Some(ec))
            }
            None => (None, None),
        };

        rows.push(TrainRow {
            iteration,
            critic_loss,
            actor_loss,
            error_value,
            error_control,
            lr,
            seconds: watch.seconds(),
        });
    }

    let clamp_active = clamp_at(config.iterations).is_some();
    Ok(TrainOutput {
        critic,
        actor,
        nonlocal,
        buffer,
        report: TrainReport { rows },
        clamp_active,
    })
}
