use std::cell::RefCell;

use levyac_core::control::{
    actor_objective, actor_objective_grad, actor_objective_samples, clamp_state,
    critic_loss_nonlocal, critic_loss_td, critic_loss_terminal, critic_node_eval, critic_total,
    reward_tilde_general, reward_tilde_poisson, train, ActorLossVariant, ControlProblem,
    ControlSpace, ExplosionMode, JumpPath, ProblemGrads, Sense, TerminalBuffer, TrainConfig,
};
use levyac_core::equilibrium::{LqrParams, MertonParams, MertonUtility};
use levyac_core::grid::TimeGrid;
use levyac_core::net::{Cache, LrSchedule, ResNet};
use levyac_core::problems::{
    lqr_config, lqr_problem, merton_config, merton_oracle, merton_problem, Preset, MERTON_X0,
};
use levyac_core::rng::{self, tags};
use levyac_core::sde::{
    simulate_batch, CompoundPoissonSource, ControlledDynamics, JumpPanel, LevyMeasureSpec,
    MarkSpec, NoisePanel,
};
use levyac_core::Error;

use approx::assert_relative_eq;
use proptest::prelude::*;

const FD_TOL: f64 = 1e-5;

fn merton_params() -> MertonParams {
    MertonParams {
        mu: 0.05,
        r: 0.03,
        sigma: 0.4,
        lambda: 0.3,
        z: 0.2,
    }
}

fn copy_net(net: &ResNet) -> ResNet {
    ResNet::from_snapshot(&net.snapshot()).unwrap()
}

fn eval_net(net: &ResNet, t: f64, x: &[f64]) -> f64 {
    let mut cache = Cache::new(net);
    net.forward_cached(t, x, false, &mut cache);
    cache.output()[0]
}

/// `v(t, x) = ct * t + cx . x + c0`: pass-through input layer, zero blocks,
/// affine output row. Exact because tanh only sits inside the (zeroed)
/// residual blocks.
fn affine_net(state_dim: usize, width: usize, blocks: usize, ct: f64, cx: &[f64], c0: f64) -> ResNet {
    let in_dim = state_dim + 1;
    assert!(width >= in_dim);
    let mut net = ResNet::zeros(state_dim, width, blocks, 1, None).unwrap();
    let w_out = width * in_dim + width + blocks * 2 * (width * width + width);
    let params = net.params_mut();
    for i in 0..in_dim {
        params[i * in_dim + i] = 1.0;
    }
    params[w_out] = ct;
    for (i, &c) in cx.iter().enumerate() {
        params[w_out + 1 + i] = c;
    }
    params[w_out + width] = c0;
    net
}

/// Constant map `u(t, x) = c` in every output component (zero function plus
/// output bias).
fn constant_net(state_dim: usize, out_dim: usize, c: f64) -> ResNet {
    let width = state_dim + 2;
    let blocks = 1;
    let in_dim = state_dim + 1;
    let mut net = ResNet::zeros(state_dim, width, blocks, out_dim, None).unwrap();
    let b_out = width * in_dim + width + blocks * 2 * (width * width + width) + out_dim * width;
    for i in 0..out_dim {
        net.params_mut()[b_out + i] = c;
    }
    net
}

const TOY_DRIFT: f64 = 0.1;
const TOY_DIFF: f64 = 0.5;
const TOY_JUMP: f64 = 0.3;
const TOY_LAMBDA: f64 = 2.0;

fn toy_grads() -> ProblemGrads {
    ProblemGrads {
        running: Box::new(|_, _, _, w, xbar, ubar| {
            xbar[0] += w;
            ubar[0] += w;
        }),
        terminal: Box::new(|x, w, xbar| xbar[0] += w * 2.0 * x[0]),
        step: Box::new(|ctx, cot, xbar, ubar| {
            let dt = ctx.grid.dt();
            let dm = ctx.jumps.count(0, ctx.path, ctx.step) as f64 - TOY_LAMBDA * dt;
            xbar[0] += cot[0] * (1.0 + TOY_DRIFT * dt);
            ubar[0] += cot[0] * (dt + TOY_DIFF * ctx.dw[0] + dm * TOY_JUMP);
        }),
        diffusion: Box::new(|_, _, w, cot, _, ubar| ubar[0] += cot[0] * TOY_DIFF * w[0]),
        jump: Box::new(|_, z, _, cot, _, ubar| ubar[0] += cot[0] * z[0]),
    }
}

/// Scalar testbed with every ingredient active: state-dependent running
/// reward, controlled diffusion, one fixed-mark jump source entering through
/// the control.
fn toy_problem() -> ControlProblem {
    let measure =
        LevyMeasureSpec::Native(vec![CompoundPoissonSource::fixed(TOY_LAMBDA, vec![TOY_JUMP]).unwrap()]);
    let dynamics = ControlledDynamics::new(
        1,
        1,
        |x, u, out| out[0] = TOY_DRIFT * x[0] + u[0],
        |_, u, w, out| out[0] = TOY_DIFF * u[0] * w[0],
        |_, z, u, out| out[0] = z[0] * u[0],
        measure,
    )
    .unwrap();
    ControlProblem::new(
        dynamics,
        |_, x, u| x[0] + u[0],
        |x| x[0] * x[0],
        Sense::Maximize,
        vec![1.0],
        ControlSpace::Unbounded,
        toy_grads(),
    )
    .unwrap()
}

fn fd_indices(count: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).map(|k| k * (count - 1) / (n - 1)).collect();
    idx.dedup();
    idx
}

fn assert_grad_close(label: &str, index: usize, analytic: f64, fd: f64) {
    let scale = 1.0f64.max(analytic.abs()).max(fd.abs());
    assert!(
        (analytic - fd).abs() <= FD_TOL * scale,
        "{label} param {index}: analytic {analytic} vs fd {fd}"
    );
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn reward_tilde_poisson_matches_hand_arithmetic() {
    let problem = toy_problem();
    let critic = affine_net(1, 4, 2, 0.5, &[2.0], 0.0);
    let actor = constant_net(1, 1, 0.7);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let dt = 0.25;
    let mut counts = vec![0u32; 4];
    counts[1] = 2;
    let jumps = JumpPanel::from_counts(1, 4, vec![counts], vec![vec![TOY_JUMP]]).unwrap();
    let x = [1.3];
    let dw = [0.11];
    let (u, dvdx) = (0.7, 2.0);

    let f_term = (1.3 + u) * dt;
    let diffusion_term = dvdx * (TOY_DIFF * u * 0.11);
    let delta_v = dvdx * TOY_JUMP * u;

    let r = reward_tilde_poisson(&problem, &critic, &actor, &grid, &x, &dw, &jumps, 0, 1).unwrap();
    assert_relative_eq!(
        r,
        f_term - diffusion_term - delta_v * (2.0 - TOY_LAMBDA * dt),
        max_relative = 1e-12
    );

    // No jump on the interval: the compensator part alone stays active.
    let r0 = reward_tilde_poisson(&problem, &critic, &actor, &grid, &x, &dw, &jumps, 0, 0).unwrap();
    assert_relative_eq!(
        r0,
        f_term - diffusion_term + delta_v * TOY_LAMBDA * dt,
        max_relative = 1e-12
    );
}

#[test]
fn reward_tilde_general_matches_hand_arithmetic() {
    let problem = toy_problem();
    let critic = affine_net(1, 4, 2, 0.5, &[2.0], 0.0);
    let actor = constant_net(1, 1, 0.7);
    let nonlocal = constant_net(1, 1, 0.9);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let dt = 0.25;
    let mut counts = vec![0u32; 4];
    counts[1] = 2;
    let jumps = JumpPanel::from_counts(1, 4, vec![counts], vec![vec![TOY_JUMP]]).unwrap();
    let x = [1.3];
    let dw = [0.11];

    let f_term = (1.3 + 0.7) * dt;
    let diffusion_term = 2.0 * (TOY_DIFF * 0.7 * 0.11);
    let delta_v = 2.0 * TOY_JUMP * 0.7;

    let r = reward_tilde_general(&problem, &critic, &actor, &nonlocal, &grid, &x, &dw, &jumps, 0, 1)
        .unwrap();
    assert_relative_eq!(
        r,
        f_term - diffusion_term - (2.0 * delta_v - dt * 0.9),
        max_relative = 1e-12
    );

    // Realized sum is empty without jumps; the nonlocal drift remains.
    let r0 = reward_tilde_general(&problem, &critic, &actor, &nonlocal, &grid, &x, &dw, &jumps, 0, 0)
        .unwrap();
    assert_relative_eq!(r0, f_term - diffusion_term + dt * 0.9, max_relative = 1e-12);
}

#[test]
fn general_path_reduces_to_poisson_with_exact_compensator() {
    // With v linear and a state-independent jump map, the critic increment
    // per jump is the constant 2 z u, so the exact compensator is
    // lambda * 2 z u and both reward paths must agree on every interval.
    let problem = toy_problem();
    let critic = affine_net(1, 4, 2, -0.3, &[2.0], 0.1);
    let actor = constant_net(1, 1, 0.7);
    let nonlocal = constant_net(1, 1, TOY_LAMBDA * 2.0 * TOY_JUMP * 0.7);
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let m = 40;
    let noise = NoisePanel::sample(&grid, m, 1, 2024).unwrap();
    let jumps = JumpPanel::sample(problem.dynamics.measure(), &grid, m, 2025).unwrap();
    let mut fired = 0u32;
    for j in 0..m {
        let x = [0.5 + 0.1 * j as f64];
        for n in 0..grid.steps() {
            fired += jumps.count(0, j, n);
            let dw = noise.dw(j, n);
            let general = reward_tilde_general(
                &problem, &critic, &actor, &nonlocal, &grid, &x, dw, &jumps, j, n,
            )
            .unwrap();
            let poisson =
                reward_tilde_poisson(&problem, &critic, &actor, &grid, &x, dw, &jumps, j, n).unwrap();
            assert_relative_eq!(general, poisson, max_relative = 1e-10, epsilon = 1e-12);
        }
    }
    assert!(fired > 0);
}

#[test]
fn critic_td_loss_matches_scalar_recomputation() {
    let problem = toy_problem();
    let critic = affine_net(1, 4, 2, 0.5, &[2.0], 0.1);
    let actor = constant_net(1, 1, 0.7);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let dt = grid.dt();
    let m = 3;
    let noise = NoisePanel::sample(&grid, m, 1, 77).unwrap();
    let counts = vec![0, 0, 0, 0, 2, 0, 0, 0, 1, 1, 0, 0];
    let jumps = JumpPanel::from_counts(m, 4, vec![counts], vec![vec![TOY_JUMP]]).unwrap();
    let states = [1.3, 0.8, 1.9];
    let u = 0.7;

    let mut next = Vec::new();
    let mut sq = 0.0;
    for j in 0..m {
        let x = states[j];
        let dw = noise.dw(j, 0)[0];
        let dm = jumps.count(0, j, 0) as f64 - TOY_LAMBDA * dt;
        let xn = x + (TOY_DRIFT * x + u) * dt + TOY_DIFF * u * dw + dm * TOY_JUMP * u;
        let v0 = 2.0 * x + 0.1;
        let vn = 0.5 * dt + 2.0 * xn + 0.1;
        let r = (x + u) * dt - 2.0 * TOY_DIFF * u * dw - dm * 2.0 * TOY_JUMP * u;
        let td = r + vn - v0;
        sq += td * td;
        next.push(xn);
    }

    let td_loss = critic_loss_td(
        &problem,
        JumpPath::PoissonFast,
        &critic,
        &actor,
        None,
        &grid,
        0,
        &states,
        &next,
        &noise,
        &jumps,
    )
    .unwrap();
    assert_relative_eq!(td_loss, sq / m as f64, max_relative = 1e-12);
    assert_relative_eq!(
        critic_total(td_loss, 0.25, Some(0.5)),
        td_loss + 0.75,
        max_relative = 1e-15
    );
}

#[test]
fn terminal_loss_matches_scalar_recomputation() {
    let problem = toy_problem();
    let critic = affine_net(1, 4, 2, 0.5, &[2.0], 0.1);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let points = [0.5, -0.3, 1.1];
    let buffer = TerminalBuffer::from_states(1, points.to_vec()).unwrap();
    let hand = points
        .iter()
        .map(|&x| {
            let v = 0.5 + 2.0 * x + 0.1;
            let g = x * x;
            (v - g) * (v - g)
        })
        .sum::<f64>()
        / (4.0 * 3.0);
    let loss = critic_loss_terminal(&problem, &critic, &buffer, &grid).unwrap();
    assert_relative_eq!(loss, hand, max_relative = 1e-12);
}

#[test]
fn nonlocal_bias_matches_scalar_recomputation() {
    let problem = toy_problem();
    let critic = affine_net(1, 4, 2, 0.5, &[2.0], 0.1);
    let actor = constant_net(1, 1, 0.7);
    let nonlocal = constant_net(1, 1, 0.9);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let dt = grid.dt();
    let m = 3;
    let counts = vec![0, 0, 0, 0, 2, 0, 0, 0, 1, 1, 0, 0];
    let jumps = JumpPanel::from_counts(m, 4, vec![counts], vec![vec![TOY_JUMP]]).unwrap();
    let states = [1.3, 0.8, 1.9];

    let delta_v = 2.0 * TOY_JUMP * 0.7;
    let hand = ((0.0 * delta_v - dt * 0.9)
        + (2.0 * delta_v - dt * 0.9)
        + (1.0 * delta_v - dt * 0.9))
        / 3.0;
    let loss =
        critic_loss_nonlocal(&problem, &critic, &actor, &nonlocal, &grid, 0, &states, &jumps)
            .unwrap();
    assert_relative_eq!(loss, hand.abs(), max_relative = 1e-12);
}

#[test]
fn nonlocal_bias_cancels_across_the_batch() {
    // One jump on the first path, none on the second, and a nonlocal value
    // tuned so the batch mean is exactly zero. Dyadic numbers throughout
    // keep the cancellation exact, which pins the absolute value outside
    // the mean: per-path magnitudes are 0.25 each.
    let measure =
        LevyMeasureSpec::Native(vec![CompoundPoissonSource::fixed(1.0, vec![0.25]).unwrap()]);
    let dynamics = ControlledDynamics::new(
        1,
        1,
        |_, _, out| out[0] = 0.0,
        |_, _, _, out| out[0] = 0.0,
        |_, z, _, out| out[0] = z[0],
        measure,
    )
    .unwrap();
    let problem = ControlProblem::new(
        dynamics,
        |_, _, _| 0.0,
        |_| 0.0,
        Sense::Maximize,
        vec![1.0],
        ControlSpace::Unbounded,
        ProblemGrads::frozen(),
    )
    .unwrap();
    let critic = affine_net(1, 4, 1, 0.0, &[2.0], 0.0);
    let actor = constant_net(1, 1, 1.0);
    let nonlocal = constant_net(1, 1, 1.0);
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let jumps = JumpPanel::from_counts(2, 4, vec![vec![1, 0, 0, 0, 0, 0, 0, 0]], vec![vec![0.25]])
        .unwrap();
    let states = [1.0, 0.5];
    let loss =
        critic_loss_nonlocal(&problem, &critic, &actor, &nonlocal, &grid, 0, &states, &jumps)
            .unwrap();
    assert_eq!(loss, 0.0);
}

/// Problem whose exact value function is linear in time: `f = c`,
/// `g = -c`, horizon 1. The critic `v(t, x) = -c t` then satisfies the
/// one-step relation exactly on dyadic grids, and every part of the critic
/// loss must vanish to the last bit.
fn const_time_problem(c: f64, with_jumps: bool) -> ControlProblem {
    let measure = if with_jumps {
        LevyMeasureSpec::Native(vec![CompoundPoissonSource::fixed(3.0, vec![0.4]).unwrap()])
    } else {
        LevyMeasureSpec::none()
    };
    let dynamics = ControlledDynamics::new(
        1,
        1,
        |x, _, out| out[0] = 0.2 * x[0],
        |x, u, w, out| out[0] = (0.3 * x[0] + u[0]) * w[0],
        |_, z, _, out| out[0] = z[0],
        measure,
    )
    .unwrap();
    ControlProblem::new(
        dynamics,
        move |_, _, _| c,
        move |_| -c,
        Sense::Maximize,
        vec![0.7],
        ControlSpace::Unbounded,
        ProblemGrads::frozen(),
    )
    .unwrap()
}

fn assert_exact_zero_node(
    problem: &ControlProblem,
    jump_path: JumpPath,
    c: f64,
    steps: usize,
    step: usize,
    seed: u64,
) {
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let m = 4;
    let critic = affine_net(1, 4, 2, -c, &[0.0], 0.0);
    let actor = constant_net(1, 1, 0.3);
    let nonlocal = ResNet::zeros(1, 4, 2, 1, None).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, seed).unwrap();
    let jumps =
        JumpPanel::sample(problem.dynamics.measure(), &grid, m, seed ^ 0x9e37).unwrap();
    let states = [0.7, -0.2, 1.5, 0.05];
    let buffer = TerminalBuffer::from_states(1, vec![0.4, -1.0, 2.0, 0.3]).unwrap();
    let nonlocal_ref = match jump_path {
        JumpPath::General => Some(&nonlocal),
        JumpPath::PoissonFast => None,
    };
    let eval = critic_node_eval(
        problem, jump_path, &critic, &actor, nonlocal_ref, &grid, step, &states, &noise, &jumps,
        &buffer, None, false,
    )
    .unwrap();
    assert_eq!(eval.td_loss, 0.0);
    assert_eq!(eval.terminal_loss, 0.0);
    assert_eq!(eval.total, 0.0);
    assert!(eval.critic_grad.iter().all(|&g| g == 0.0));
    if let JumpPath::General = jump_path {
        assert_eq!(eval.nonlocal_loss, Some(0.0));
        assert!(eval.nonlocal_grad.unwrap().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn td_residual_vanishes_for_values_linear_in_time() {
    for &(c, steps, step) in &[(1.0, 4usize, 0usize), (3.0, 64, 17), (5.0, 16, 15)] {
        let with_jumps = const_time_problem(c, true);
        assert_exact_zero_node(&with_jumps, JumpPath::PoissonFast, c, steps, step, 11 + steps as u64);
        assert_exact_zero_node(&with_jumps, JumpPath::General, c, steps, step, 23 + steps as u64);
        let diffusion_only = const_time_problem(c, false);
        assert_exact_zero_node(&diffusion_only, JumpPath::PoissonFast, c, steps, step, 31);
    }
}

#[test]
fn reward_tilde_is_centered_over_large_batches() {
    // Zero running reward makes the surrogate a pure martingale increment
    // for any critic, so the batch mean must sit within three standard
    // errors of zero.
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let critic = ResNet::init(1, 8, 2, 1, None, 611).unwrap();
    let actor = constant_net(1, 1, 0.4);
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let m = 20_000;
    let noise = NoisePanel::sample(&grid, m, 1, rng::derive(9, &[tags::NOISE])).unwrap();
    let jumps =
        JumpPanel::sample(problem.dynamics.measure(), &grid, m, rng::derive(9, &[tags::JUMP]))
            .unwrap();
    let x = [MERTON_X0];
    let mut samples = Vec::with_capacity(m);
    for j in 0..m {
        let r = reward_tilde_poisson(&problem, &critic, &actor, &grid, &x, noise.dw(j, 3), &jumps, j, 3)
            .unwrap();
        samples.push(r);
    }
    let (mean, var) = mean_and_variance(&samples);
    let se = (var / m as f64).sqrt();
    assert!(se > 0.0);
    assert!(mean.abs() <= 3.0 * se, "mean {mean} vs se {se}");
}

#[test]
fn surrogate_and_plain_objectives_share_their_mean() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let critic = ResNet::init(1, 8, 2, 1, None, 21).unwrap();
    let actor = constant_net(1, 1, 0.3);
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let m = 20_000;
    let noise = NoisePanel::sample(&grid, m, 1, 5501).unwrap();
    let jumps = JumpPanel::sample(problem.dynamics.measure(), &grid, m, 5502).unwrap();
    let plain = actor_objective_samples(
        &problem,
        JumpPath::PoissonFast,
        None,
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::J,
    )
    .unwrap();
    let surrogate = actor_objective_samples(
        &problem,
        JumpPath::PoissonFast,
        Some(&critic),
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::JTilde,
    )
    .unwrap();
    let (mean_j, var_j) = mean_and_variance(&plain);
    let (mean_jt, var_jt) = mean_and_variance(&surrogate);
    let pooled = ((var_j + var_jt) / m as f64).sqrt();
    assert!(pooled > 0.0);
    assert!(
        (mean_j - mean_jt).abs() <= 3.0 * pooled,
        "J {mean_j} vs J-tilde {mean_jt} with pooled se {pooled}"
    );
}

#[test]
fn plain_objective_matches_deterministic_recursion() {
    let dynamics = ControlledDynamics::new(
        1,
        1,
        |x, u, out| out[0] = TOY_DRIFT * x[0] + u[0],
        |_, _, _, out| out[0] = 0.0,
        |_, _, _, out| out[0] = 0.0,
        LevyMeasureSpec::none(),
    )
    .unwrap();
    let problem = ControlProblem::new(
        dynamics,
        |_, x, u| x[0] + u[0],
        |x| x[0] * x[0],
        Sense::Maximize,
        vec![0.9],
        ControlSpace::Unbounded,
        toy_grads(),
    )
    .unwrap();
    let actor = constant_net(1, 1, 0.7);
    let grid = TimeGrid::new(1.0, 5).unwrap();
    let dt = grid.dt();
    let m = 3;
    let noise = NoisePanel::sample(&grid, m, 1, 8).unwrap();
    let jumps = JumpPanel::sample(problem.dynamics.measure(), &grid, m, 9).unwrap();

    let mut x = 0.9;
    let mut hand = 0.0;
    for _ in 0..grid.steps() {
        hand += (x + 0.7) * dt;
        x += (TOY_DRIFT * x + 0.7) * dt;
    }
    hand += x * x;

    let samples = actor_objective_samples(
        &problem,
        JumpPath::PoissonFast,
        None,
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::J,
    )
    .unwrap();
    assert_eq!(samples.len(), m);
    for s in samples {
        assert_relative_eq!(s, hand, max_relative = 1e-12);
    }
}

#[test]
fn objective_value_agrees_between_serial_and_gradient_paths() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let critic = ResNet::init(1, 6, 2, 1, None, 41).unwrap();
    let nonlocal = ResNet::init(1, 6, 2, 1, None, 42).unwrap();
    let actor = ResNet::init(1, 6, 2, 1, Some(0.8), 43).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 6;
    let noise = NoisePanel::sample(&grid, m, 1, 44).unwrap();
    let jumps = JumpPanel::sample(problem.dynamics.measure(), &grid, m, 45).unwrap();

    let (obj, _) = actor_objective_grad(
        &problem,
        JumpPath::PoissonFast,
        None,
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::J,
        None,
    )
    .unwrap();
    let serial = actor_objective(
        &problem,
        JumpPath::PoissonFast,
        None,
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::J,
    )
    .unwrap();
    assert_eq!(obj.to_bits(), serial.to_bits());

    let (obj, _) = actor_objective_grad(
        &problem,
        JumpPath::General,
        Some(&critic),
        &actor,
        Some(&nonlocal),
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::JTilde,
        None,
    )
    .unwrap();
    let serial = actor_objective(
        &problem,
        JumpPath::General,
        Some(&critic),
        &actor,
        Some(&nonlocal),
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::JTilde,
    )
    .unwrap();
    assert_eq!(obj.to_bits(), serial.to_bits());
}

fn mixed_counts(m: usize, steps: usize) -> Vec<u32> {
    (0..m * steps).map(|i| ((i * 7 + 3) % 5 < 2) as u32 + (i % 11 == 0) as u32).collect()
}

#[test]
fn critic_gradient_matches_finite_differences() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 8;
    let critic = ResNet::init(1, 6, 2, 1, None, 5).unwrap();
    let actor = ResNet::init(1, 6, 2, 1, Some(0.8), 6).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, 100).unwrap();
    let jumps = JumpPanel::from_counts(m, 4, vec![mixed_counts(m, 4)], vec![vec![0.2]]).unwrap();
    let states: Vec<f64> = (0..m).map(|j| 9.0 + 0.3 * j as f64).collect();
    let buffer =
        TerminalBuffer::from_states(1, (0..m).map(|j| 8.0 + 0.5 * j as f64).collect()).unwrap();

    for &from_next in &[false, true] {
        let eval = critic_node_eval(
            &problem,
            JumpPath::PoissonFast,
            &critic,
            &actor,
            None,
            &grid,
            1,
            &states,
            &noise,
            &jumps,
            &buffer,
            None,
            from_next,
        )
        .unwrap();
        let mut pert = copy_net(&critic);
        for &i in &fd_indices(critic.param_count(), 12) {
            let base = critic.params()[i];
            let h = 1e-6 * base.abs().max(1.0);
            let total_at = |v: f64, pert: &mut ResNet| {
                pert.params_mut()[i] = v;
                critic_node_eval(
                    &problem,
                    JumpPath::PoissonFast,
                    pert,
                    &actor,
                    None,
                    &grid,
                    1,
                    &states,
                    &noise,
                    &jumps,
                    &buffer,
                    None,
                    from_next,
                )
                .unwrap()
                .total
            };
            let fd = (total_at(base + h, &mut pert) - total_at(base - h, &mut pert)) / (2.0 * h);
            pert.params_mut()[i] = base;
            assert_grad_close("critic", i, eval.critic_grad[i], fd);
        }
    }
}

#[test]
fn critic_gradient_matches_finite_differences_on_the_general_path() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 8;
    let critic = ResNet::init(1, 6, 2, 1, None, 15).unwrap();
    let actor = ResNet::init(1, 6, 2, 1, Some(0.8), 16).unwrap();
    let nonlocal = ResNet::init(1, 6, 2, 1, None, 17).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, 102).unwrap();
    let jumps = JumpPanel::from_counts(m, 4, vec![mixed_counts(m, 4)], vec![vec![0.2]]).unwrap();
    let states: Vec<f64> = (0..m).map(|j| 9.0 + 0.3 * j as f64).collect();
    let buffer =
        TerminalBuffer::from_states(1, (0..m).map(|j| 8.0 + 0.5 * j as f64).collect()).unwrap();

    let eval = critic_node_eval(
        &problem,
        JumpPath::General,
        &critic,
        &actor,
        Some(&nonlocal),
        &grid,
        1,
        &states,
        &noise,
        &jumps,
        &buffer,
        None,
        false,
    )
    .unwrap();
    // The absolute value in the bias term is differentiable only away from
    // zero; make sure the batch mean does not sit there.
    assert!(eval.nonlocal_loss.unwrap() > 1e-9);

    let mut pert_critic = copy_net(&critic);
    for &i in &fd_indices(critic.param_count(), 10) {
        let base = critic.params()[i];
        let h = 1e-6 * base.abs().max(1.0);
        let total_at = |v: f64, pert: &mut ResNet| {
            pert.params_mut()[i] = v;
            critic_node_eval(
                &problem,
                JumpPath::General,
                pert,
                &actor,
                Some(&nonlocal),
                &grid,
                1,
                &states,
                &noise,
                &jumps,
                &buffer,
                None,
                false,
            )
            .unwrap()
            .total
        };
        let fd = (total_at(base + h, &mut pert_critic) - total_at(base - h, &mut pert_critic))
            / (2.0 * h);
        pert_critic.params_mut()[i] = base;
        assert_grad_close("critic", i, eval.critic_grad[i], fd);
    }

    let analytic = eval.nonlocal_grad.unwrap();
    let mut pert_non = copy_net(&nonlocal);
    for &i in &fd_indices(nonlocal.param_count(), 10) {
        let base = nonlocal.params()[i];
        let h = 1e-6 * base.abs().max(1.0);
        let total_at = |v: f64, pert: &mut ResNet| {
            pert.params_mut()[i] = v;
            critic_node_eval(
                &problem,
                JumpPath::General,
                &critic,
                &actor,
                Some(pert),
                &grid,
                1,
                &states,
                &noise,
                &jumps,
                &buffer,
                None,
                false,
            )
            .unwrap()
            .total
        };
        let fd =
            (total_at(base + h, &mut pert_non) - total_at(base - h, &mut pert_non)) / (2.0 * h);
        pert_non.params_mut()[i] = base;
        assert_grad_close("nonlocal", i, analytic[i], fd);
    }
}

#[test]
fn critic_gradient_matches_finite_differences_under_clamping() {
    let params = LqrParams::new(3, 0.4, vec![0.3; 3], vec![0.5; 3], 1.0, 1.0, 1.0).unwrap();
    let problem = lqr_problem(&params).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 8;
    let critic = ResNet::init(3, 8, 2, 1, None, 25).unwrap();
    let actor = ResNet::init(3, 8, 2, 3, None, 26).unwrap();
    let noise = NoisePanel::sample(&grid, m, 3, 104).unwrap();
    let jumps = JumpPanel::sample(problem.dynamics.measure(), &grid, m, 105).unwrap();
    let states: Vec<f64> = (0..m * 3).map(|i| -1.5 + 0.4 * (i % 9) as f64).collect();
    let buffer = TerminalBuffer::from_states(3, states.clone()).unwrap();
    let clamp = Some((-1.2, 1.8));

    let eval = critic_node_eval(
        &problem,
        JumpPath::PoissonFast,
        &critic,
        &actor,
        None,
        &grid,
        2,
        &states,
        &noise,
        &jumps,
        &buffer,
        clamp,
        false,
    )
    .unwrap();
    assert!(eval.next_states.iter().any(|&x| x == -1.2 || x == 1.8));

    let mut pert = copy_net(&critic);
    for &i in &fd_indices(critic.param_count(), 12) {
        let base = critic.params()[i];
        let h = 1e-6 * base.abs().max(1.0);
        let total_at = |v: f64, pert: &mut ResNet| {
            pert.params_mut()[i] = v;
            critic_node_eval(
                &problem,
                JumpPath::PoissonFast,
                pert,
                &actor,
                None,
                &grid,
                2,
                &states,
                &noise,
                &jumps,
                &buffer,
                clamp,
                false,
            )
            .unwrap()
            .total
        };
        let fd = (total_at(base + h, &mut pert) - total_at(base - h, &mut pert)) / (2.0 * h);
        pert.params_mut()[i] = base;
        assert_grad_close("critic", i, eval.critic_grad[i], fd);
    }
}

fn fd_actor_grad(
    problem: &ControlProblem,
    jump_path: JumpPath,
    critic: Option<&ResNet>,
    actor: &ResNet,
    nonlocal: Option<&ResNet>,
    grid: &TimeGrid,
    noise: &NoisePanel,
    jumps: &JumpPanel,
    variant: ActorLossVariant,
    index: usize,
) -> f64 {
    let mut pert = copy_net(actor);
    let base = actor.params()[index];
    let h = 1e-6 * base.abs().max(1.0);
    let mut value_at = |v: f64| {
        pert.params_mut()[index] = v;
        actor_objective(problem, jump_path, critic, &pert, nonlocal, grid, noise, jumps, variant)
            .unwrap()
    };
    (value_at(base + h) - value_at(base - h)) / (2.0 * h)
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 6;
    let actor = ResNet::init(1, 6, 2, 1, Some(0.8), 36).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, 120).unwrap();
    let jumps = JumpPanel::from_counts(m, 4, vec![mixed_counts(m, 4)], vec![vec![0.2]]).unwrap();

    let (_, grad) = actor_objective_grad(
        &problem,
        JumpPath::PoissonFast,
        None,
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::J,
        None,
    )
    .unwrap();
    let mut indices = fd_indices(actor.param_count(), 12);
    indices.push(actor.param_count() - 1);
    indices.dedup();
    for &i in &indices {
        let fd = fd_actor_grad(
            &problem,
            JumpPath::PoissonFast,
            None,
            &actor,
            None,
            &grid,
            &noise,
            &jumps,
            ActorLossVariant::J,
            i,
        );
        assert_grad_close("actor", i, grad[i], fd);
    }
}

#[test]
fn actor_gradient_matches_finite_differences_for_the_surrogate() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 6;
    let critic = ResNet::init(1, 6, 2, 1, None, 46).unwrap();
    let actor = ResNet::init(1, 6, 2, 1, Some(0.8), 47).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, 121).unwrap();
    let jumps = JumpPanel::from_counts(m, 4, vec![mixed_counts(m, 4)], vec![vec![0.2]]).unwrap();

    let (_, grad) = actor_objective_grad(
        &problem,
        JumpPath::PoissonFast,
        Some(&critic),
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::JTilde,
        None,
    )
    .unwrap();
    for &i in &fd_indices(actor.param_count(), 12) {
        let fd = fd_actor_grad(
            &problem,
            JumpPath::PoissonFast,
            Some(&critic),
            &actor,
            None,
            &grid,
            &noise,
            &jumps,
            ActorLossVariant::JTilde,
            i,
        );
        assert_grad_close("actor", i, grad[i], fd);
    }
}

#[test]
fn actor_gradient_matches_finite_differences_on_the_general_path() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 6;
    let critic = ResNet::init(1, 6, 2, 1, None, 56).unwrap();
    let actor = ResNet::init(1, 6, 2, 1, Some(0.8), 57).unwrap();
    let nonlocal = ResNet::init(1, 6, 2, 1, None, 58).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, 122).unwrap();
    let jumps = JumpPanel::from_counts(m, 4, vec![mixed_counts(m, 4)], vec![vec![0.2]]).unwrap();

    let (_, grad) = actor_objective_grad(
        &problem,
        JumpPath::General,
        Some(&critic),
        &actor,
        Some(&nonlocal),
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::JTilde,
        None,
    )
    .unwrap();
    for &i in &fd_indices(actor.param_count(), 12) {
        let fd = fd_actor_grad(
            &problem,
            JumpPath::General,
            Some(&critic),
            &actor,
            Some(&nonlocal),
            &grid,
            &noise,
            &jumps,
            ActorLossVariant::JTilde,
            i,
        );
        assert_grad_close("actor", i, grad[i], fd);
    }
}

#[test]
fn actor_gradient_matches_finite_differences_under_clamping() {
    let params = LqrParams::new(3, 0.4, vec![0.3; 3], vec![0.5; 3], 1.0, 1.0, 1.0).unwrap();
    let problem = lqr_problem(&params).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 6;
    let actor = ResNet::init(3, 8, 2, 3, None, 66).unwrap();
    let noise = NoisePanel::sample(&grid, m, 3, 123).unwrap();
    let jumps = JumpPanel::sample(problem.dynamics.measure(), &grid, m, 124).unwrap();
    let clamp = Some((-0.5, 1.25));

    let (_, grad) = actor_objective_grad(
        &problem,
        JumpPath::PoissonFast,
        None,
        &actor,
        None,
        &grid,
        &noise,
        &jumps,
        ActorLossVariant::J,
        clamp,
    )
    .unwrap();
    let mut pert = copy_net(&actor);
    for &i in &fd_indices(actor.param_count(), 12) {
        let base = actor.params()[i];
        let h = 1e-6 * base.abs().max(1.0);
        let value_at = |v: f64, pert: &mut ResNet| {
            pert.params_mut()[i] = v;
            actor_objective_grad(
                &problem,
                JumpPath::PoissonFast,
                None,
                pert,
                None,
                &grid,
                &noise,
                &jumps,
                ActorLossVariant::J,
                clamp,
            )
            .unwrap()
            .0
        };
        let fd = (value_at(base + h, &mut pert) - value_at(base - h, &mut pert)) / (2.0 * h);
        pert.params_mut()[i] = base;
        assert_grad_close("actor", i, grad[i], fd);
    }
}

#[test]
fn terminal_buffer_refreshes_from_the_last_critic_sweep() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 16;
    let mut config = TrainConfig::new(grid, m, 2, 99);
    config.actor_step = 2;
    config.width = 6;
    config.blocks = 2;
    config.schedule = LrSchedule { rates: [0.0; 3] };
    config.jump_path = JumpPath::PoissonFast;
    config.explosion = ExplosionMode::BoundedActor { bound: 1.0 };
    let out = train(&problem, &config, None).unwrap();

    // Zero learning rate turns every optimizer step into the identity.
    let fresh_critic = ResNet::init(1, 6, 2, 1, None, rng::derive(99, &[tags::NET, 0])).unwrap();
    let fresh_actor =
        ResNet::init(1, 6, 2, 1, Some(1.0), rng::derive(99, &[tags::NET, 1])).unwrap();
    assert_eq!(out.critic.params(), fresh_critic.params());
    assert_eq!(out.actor.params(), fresh_actor.params());
    assert!(out.nonlocal.is_none());

    // The buffer must hold the terminal states of the second iteration's
    // critic panels, simulated under the unchanged actor.
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, rng::derive(99, &[tags::CRITIC, 1, 0])).unwrap();
    let jumps = JumpPanel::sample(
        problem.dynamics.measure(),
        &grid,
        m,
        rng::derive(99, &[tags::CRITIC, 1, 1]),
    )
    .unwrap();
    let cache = RefCell::new(Cache::new(&fresh_actor));
    let policy = |t: f64, x: &[f64], u: &mut [f64]| {
        let mut cache = cache.borrow_mut();
        fresh_actor.forward_cached(t, x, true, &mut cache);
        u.copy_from_slice(cache.output());
    };
    let batch =
        simulate_batch(&problem.dynamics, policy, &grid, &problem.x0, noise, jumps, None).unwrap();
    assert_eq!(out.buffer.m(), m);
    for j in 0..m {
        assert_eq!(out.buffer.state(j), batch.state(j, 4));
    }
}

#[test]
fn zero_iteration_training_returns_fresh_networks() {
    let problem = merton_problem(&merton_params(), MertonUtility::Power(0.5)).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let m = 8;
    let mut config = TrainConfig::new(grid, m, 0, 123);
    config.width = 5;
    config.blocks = 1;
    config.jump_path = JumpPath::General;
    let out = train(&problem, &config, None).unwrap();

    assert!(out.report.rows.is_empty());
    assert!(!out.clamp_active);
    let fresh_critic = ResNet::init(1, 5, 1, 1, None, rng::derive(123, &[tags::NET, 0])).unwrap();
    let fresh_actor = ResNet::init(1, 5, 1, 1, None, rng::derive(123, &[tags::NET, 1])).unwrap();
    let fresh_nonlocal =
        ResNet::init(1, 5, 1, 1, None, rng::derive(123, &[tags::NET, 2])).unwrap();
    assert_eq!(out.critic.params(), fresh_critic.params());
    assert_eq!(out.actor.params(), fresh_actor.params());
    assert_eq!(out.nonlocal.as_ref().unwrap().params(), fresh_nonlocal.params());

    // Even without iterations the buffer is seeded from one simulation.
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let noise = NoisePanel::sample(&grid, m, 1, rng::derive(123, &[tags::BUFFER, 0])).unwrap();
    let jumps = JumpPanel::sample(
        problem.dynamics.measure(),
        &grid,
        m,
        rng::derive(123, &[tags::BUFFER, 1]),
    )
    .unwrap();
    let cache = RefCell::new(Cache::new(&fresh_actor));
    let policy = |t: f64, x: &[f64], u: &mut [f64]| {
        let mut cache = cache.borrow_mut();
        fresh_actor.forward_cached(t, x, false, &mut cache);
        u.copy_from_slice(cache.output());
    };
    let batch =
        simulate_batch(&problem.dynamics, policy, &grid, &problem.x0, noise, jumps, None).unwrap();
    for j in 0..m {
        assert_eq!(out.buffer.state(j), batch.state(j, 4));
    }
}

#[test]
fn state_clamp_deactivates_after_warmup() {
    // Constant drift 10 would push paths to 11 by the horizon; during
    // warmup the clamp pins them to the upper bound instead.
    let make_problem = || {
        ControlProblem::new(
            ControlledDynamics::new(
                1,
                1,
                |_, _, out| out[0] = 10.0,
                |_, _, _, out| out[0] = 0.0,
                |_, _, _, out| out[0] = 0.0,
                LevyMeasureSpec::none(),
            )
            .unwrap(),
            |_, _, _| 0.0,
            |x| x[0],
            Sense::Minimize,
            vec![1.0],
            ControlSpace::Unbounded,
            ProblemGrads::frozen(),
        )
        .unwrap()
    };

    let grid = TimeGrid::new(1.0, 4).unwrap();
    let mut config = TrainConfig::new(grid, 4, 2, 3);
    config.actor_step = 1;
    config.width = 4;
    config.blocks = 1;
    config.jump_path = JumpPath::PoissonFast;
    config.explosion = ExplosionMode::StateClamp { lo: -2.0, hi: 2.0, warmup: 3 };
    let out = train(&make_problem(), &config, None).unwrap();
    assert!(out.clamp_active);
    assert!(out.buffer.states().iter().all(|&x| x == 2.0));

    let grid = TimeGrid::new(1.0, 4).unwrap();
    let mut config = TrainConfig::new(grid, 4, 4, 3);
    config.actor_step = 1;
    config.width = 4;
    config.blocks = 1;
    config.jump_path = JumpPath::PoissonFast;
    config.explosion = ExplosionMode::StateClamp { lo: -2.0, hi: 2.0, warmup: 3 };
    let out = train(&make_problem(), &config, None).unwrap();
    assert!(!out.clamp_active);
    assert!(out.buffer.states().iter().all(|&x| x > 2.0));
}

#[test]
fn training_is_deterministic_and_reports_oracle_errors() {
    let params = merton_params();
    let problem = merton_problem(&params, MertonUtility::Power(0.5)).unwrap();
    let oracle = merton_oracle(&params, MertonUtility::Power(0.5), 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 8).unwrap();
    let mut config = TrainConfig::new(grid, 32, 2, 4242);
    config.actor_step = 2;
    config.width = 6;
    config.blocks = 2;
    config.jump_path = JumpPath::PoissonFast;
    config.explosion = ExplosionMode::BoundedActor { bound: 1.0 };

    let a = train(&problem, &config, Some(&oracle)).unwrap();
    let b = train(&problem, &config, Some(&oracle)).unwrap();
    assert_eq!(a.report.rows.len(), 2);
    for (ra, rb) in a.report.rows.iter().zip(&b.report.rows) {
        assert!(ra.critic_loss.is_finite());
        assert!(ra.actor_loss.is_finite());
        let ev = ra.error_value.unwrap();
        let ec = ra.error_control.unwrap();
        assert!(ev.is_finite() && ev > 0.0);
        assert!(ec.is_finite() && ec > 0.0);
        assert_eq!(ra.lr, config.schedule.at(ra.iteration, config.iterations));
        assert_eq!(ra.critic_loss.to_bits(), rb.critic_loss.to_bits());
        assert_eq!(ra.actor_loss.to_bits(), rb.actor_loss.to_bits());
        assert_eq!(ra.error_value.unwrap().to_bits(), rb.error_value.unwrap().to_bits());
        assert_eq!(ra.error_control.unwrap().to_bits(), rb.error_control.unwrap().to_bits());
    }
    assert_eq!(a.critic.params(), b.critic.params());
    assert_eq!(a.actor.params(), b.actor.params());
    assert_eq!(a.buffer.states(), b.buffer.states());
}

#[test]
fn benchmark_presets_pin_the_published_hyperparameters() {
    let ci = merton_config(Preset::Ci, 7).unwrap();
    assert_eq!(ci.grid.steps(), 50);
    assert_eq!(ci.grid.horizon(), 1.0);
    assert_eq!(ci.batch, 500);
    assert_eq!(ci.iterations, 300);
    assert_eq!(ci.actor_step, 10);
    assert_eq!(ci.schedule.rates, [1e-3, 1e-4, 1e-5]);
    assert!(matches!(ci.explosion, ExplosionMode::BoundedActor { bound } if bound == 1.0));
    assert_eq!(ci.jump_path, JumpPath::PoissonFast);
    assert_eq!(merton_config(Preset::Paper, 7).unwrap().iterations, 1000);

    let lqr = lqr_config(Preset::Ci, 7).unwrap();
    assert_eq!(lqr.batch, 500);
    assert!(matches!(
        lqr.explosion,
        ExplosionMode::StateClamp { lo, hi, warmup } if lo == -5.0 && hi == 5.0 && warmup == 100
    ));
    assert_eq!(lqr.actor_loss, ActorLossVariant::J);
}

#[test]
fn invalid_inputs_are_rejected() {
    let problem = toy_problem();
    let grid = TimeGrid::new(1.0, 4).unwrap();

    let mut config = TrainConfig::new(TimeGrid::new(1.0, 4).unwrap(), 0, 1, 1);
    assert!(matches!(config.validate(), Err(Error::InvalidArgument(_))));
    config.batch = 8;
    config.actor_step = 0;
    assert!(matches!(config.validate(), Err(Error::InvalidArgument(_))));
    config.actor_step = 1;
    config.blocks = 0;
    assert!(matches!(config.validate(), Err(Error::InvalidArgument(_))));
    config.blocks = 1;
    config.explosion = ExplosionMode::BoundedActor { bound: 0.0 };
    assert!(matches!(config.validate(), Err(Error::InvalidArgument(_))));
    config.explosion = ExplosionMode::StateClamp { lo: 1.0, hi: -1.0, warmup: 5 };
    assert!(matches!(config.validate(), Err(Error::InvalidArgument(_))));

    // Sampled marks cannot use the closed-form Poisson compensation.
    let sampler = CompoundPoissonSource::new(
        1.0,
        MarkSpec::Sampler { dim: 1, draw: Box::new(|_| vec![0.2]) },
    )
    .unwrap();
    let dynamics = ControlledDynamics::new(
        1,
        1,
        |_, _, out| out[0] = 0.0,
        |_, _, _, out| out[0] = 0.0,
        |_, z, _, out| out[0] = z[0],
        LevyMeasureSpec::Native(vec![sampler]),
    )
    .unwrap();
    let sampled = ControlProblem::new(
        dynamics,
        |_, _, _| 0.0,
        |_| 0.0,
        Sense::Maximize,
        vec![1.0],
        ControlSpace::Unbounded,
        ProblemGrads::frozen(),
    )
    .unwrap();
    let mut config = TrainConfig::new(TimeGrid::new(1.0, 4).unwrap(), 4, 1, 1);
    config.jump_path = JumpPath::PoissonFast;
    assert!(matches!(train(&sampled, &config, None), Err(Error::UnsupportedMeasure(_))));

    let critic = constant_net(1, 1, 0.0);
    let actor = constant_net(1, 1, 0.0);
    let noise = NoisePanel::sample(&grid, 2, 1, 1).unwrap();
    let jumps = JumpPanel::from_counts(2, 4, vec![vec![0; 8]], vec![vec![0.3]]).unwrap();
    let empty = TerminalBuffer::empty(1);
    assert!(matches!(
        critic_node_eval(
            &problem,
            JumpPath::PoissonFast,
            &critic,
            &actor,
            None,
            &grid,
            0,
            &[1.0, 2.0],
            &noise,
            &jumps,
            &empty,
            None,
            false,
        ),
        Err(Error::InvalidState(_))
    ));
    assert!(matches!(
        critic_loss_td(
            &problem,
            JumpPath::General,
            &critic,
            &actor,
            None,
            &grid,
            0,
            &[1.0, 2.0],
            &[1.0, 2.0],
            &noise,
            &jumps,
        ),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        actor_objective(
            &problem,
            JumpPath::PoissonFast,
            None,
            &actor,
            None,
            &grid,
            &noise,
            &jumps,
            ActorLossVariant::JTilde,
        ),
        Err(Error::InvalidArgument(_))
    ));

    assert!(TerminalBuffer::from_states(2, vec![1.0, 2.0, 3.0]).is_err());
    assert!(TerminalBuffer::from_states(1, vec![f64::NAN]).is_err());
    assert!(clamp_state(&mut [0.0], 1.0, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn td_residual_is_exactly_zero_on_dyadic_grids(
        k in 1usize..=6,
        c in 1u32..=8,
        frac in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let steps = 1usize << k;
        let step = ((frac * steps as f64) as usize).min(steps - 1);
        let problem = const_time_problem(c as f64, true);
        assert_exact_zero_node(&problem, JumpPath::PoissonFast, c as f64, steps, step, seed);
        assert_exact_zero_node(&problem, JumpPath::General, c as f64, steps, step, seed ^ 1);
    }

    #[test]
    fn clamp_state_projects_into_the_interval(
        mut xs in proptest::collection::vec(-100.0f64..100.0, 1..20),
        lo in -10.0f64..-0.1,
        hi in 0.1f64..10.0,
    ) {
        clamp_state(&mut xs, lo, hi).unwrap();
        prop_assert!(xs.iter().all(|&x| (lo..=hi).contains(&x)));
        let once = xs.clone();
        clamp_state(&mut xs, lo, hi).unwrap();
        prop_assert_eq!(xs, once);
    }

    #[test]
    fn affine_networks_evaluate_exactly(
        ct in -4.0f64..4.0,
        cx in -4.0f64..4.0,
        c0 in -2.0f64..2.0,
        t in 0.0f64..1.0,
        x in -3.0f64..3.0,
    ) {
        let net = affine_net(1, 4, 2, ct, &[cx], c0);
        let v = eval_net(&net, t, &[x]);
        prop_assert!((v - (ct * t + cx * x + c0)).abs() <= 1e-12 * (1.0 + v.abs()));
    }
}
