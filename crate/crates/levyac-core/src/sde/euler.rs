use alloc::vec;
use alloc::vec::Vec;

use crate::grid::TimeGrid;
use crate::{Error, Result};

use super::dynamics::ControlledDynamics;
use super::measure::LevyMeasureSpec;
use super::panel::{JumpPanel, NoisePanel};

fn check_finite(values: &[f64], what: &'static str, path: usize, step: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFault { what, path, step })
    }
}

/// Compensator drift `sum_k lambda_k G(x, z_k, u)`, the term subtracted per
/// unit time so that realized jumps enter in compensated form.
///
/// Native sources must carry fixed marks; a mark-sampler source has no
/// closed-form compensator here and an external measure must bring its own
/// compensator callback.
pub fn compensator_drift(dynamics: &ControlledDynamics, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let d = dynamics.state_dim();
    let mut total = vec![0.0f64; d];
    match dynamics.measure() {
        LevyMeasureSpec::Native(sources) => {
            let mut shift = vec![0.0f64; d];
            for source in sources {
                if source.intensity() == 0.0 {
                    continue;
                }
                let z = source.fixed_mark().ok_or(Error::UnsupportedMeasure(
                    "mark-sampler source needs an external compensator",
                ))?;
                dynamics.jump(x, z, u, &mut shift);
                for (acc, g) in total.iter_mut().zip(&shift) {
                    *acc += source.intensity() * g;
                }
            }
        }
        LevyMeasureSpec::External(ext) => {
            let integral = ext.compensator.as_ref().ok_or(Error::UnsupportedMeasure(
                "external measure without compensator integral",
            ))?;
            let value = integral(x, u);
            if value.len() != d {
                return Err(Error::InvalidArgument(
                    "compensator integral returned wrong dimension",
                ));
            }
            total.copy_from_slice(&value);
        }
    }
    if total.iter().all(|v| v.is_finite()) {
        Ok(total)
    } else {
        Err(Error::NonFinite("compensator drift"))
    }
}

/// One Euler update over `[t_n, t_n + dt)`:
/// `out = x + b dt + sigma(x, u) dw + sum of realized jumps - dt *
/// compensator`. Realized jumps of a fixed-mark source enter as
/// `count * G(x, z_k, u)` (a single multiply, not repeated addition);
/// listed marks are summed chronologically.
pub fn euler_step(
    dynamics: &ControlledDynamics,
    x: &[f64],
    u: &[f64],
    dw: &[f64],
    jumps: &JumpPanel,
    j: usize,
    n: usize,
    dt: f64,
    out: &mut [f64],
) -> Result<()> {
    let d = dynamics.state_dim();
    if x.len() != d || out.len() != d || dw.len() != d {
        return Err(Error::InvalidArgument("euler_step dimension mismatch"));
    }
    if jumps.num_sources() != dynamics.measure().num_sources() {
        return Err(Error::InvalidArgument("jump panel does not match measure"));
    }
    let mut work = vec![0.0f64; d];

    dynamics.drift(x, u, &mut work);
    check_finite(&work, "drift", j, n)?;
    for (o, (&xi, &b)) in out.iter_mut().zip(x.iter().zip(&work)) {
        *o = xi + b * dt;
    }

    dynamics.diffusion(x, u, dw, &mut work);
    check_finite(&work, "diffusion", j, n)?;
    for (o, &s) in out.iter_mut().zip(&work) {
        *o += s;
    }

    match dynamics.measure() {
        LevyMeasureSpec::Native(sources) => {
            for (k, source) in sources.iter().enumerate() {
                let count = jumps.count(k, j, n);
                if let Some(z) = source.fixed_mark() {
                    if count > 0 {
                        dynamics.jump(x, z, u, &mut work);
                        check_finite(&work, "jump map", j, n)?;
                        for (o, &g) in out.iter_mut().zip(&work) {
                            *o += count as f64 * g;
                        }
                    }
                } else {
                    for z in jumps.marks(k, j, n) {
                        dynamics.jump(x, z, u, &mut work);
                        check_finite(&work, "jump map", j, n)?;
                        for (o, &g) in out.iter_mut().zip(&work) {
                            *o += g;
                        }
                    }
                }
            }
        }
        LevyMeasureSpec::External(_) => {
            for z in jumps.marks(0, j, n) {
                dynamics.jump(x, z, u, &mut work);
                check_finite(&work, "jump map", j, n)?;
                for (o, &g) in out.iter_mut().zip(&work) {
                    *o += g;
                }
            }
        }
    }

    let compensator = compensator_drift(dynamics, x, u).map_err(|e| match e {
        Error::NonFinite(what) => Error::NumericFault { what, path: j, step: n },
        other => other,
    })?;
    for (o, &c) in out.iter_mut().zip(&compensator) {
        *o -= dt * c;
    }
    check_finite(out, "state update", j, n)
}

/// Simulated batch: states on all grid nodes plus the panels that produced
/// them.
#[derive(Debug)]
pub struct PathBatch {
    grid: TimeGrid,
    state_dim: usize,
    states: Vec<f64>,
    noise: NoisePanel,
    jumps: JumpPanel,
}

impl PathBatch {
    pub(crate) fn from_parts(
        grid: TimeGrid,
        state_dim: usize,
        states: Vec<f64>,
        noise: NoisePanel,
        jumps: JumpPanel,
    ) -> Self {
        debug_assert_eq!(states.len(), noise.m() * (grid.steps() + 1) * state_dim);
        PathBatch {
            grid,
            state_dim,
            states,
            noise,
            jumps,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.noise.m()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// State of path `j` at node `t_n`, `n` in `0..=steps`.
    pub fn state(&self, j: usize, n: usize) -> &[f64] {
        let base = (j * (self.grid.steps() + 1) + n) * self.state_dim;
        &self.states[base..base + self.state_dim]
    }

    pub fn noise(&self) -> &NoisePanel {
        &self.noise
    }

    pub fn jumps(&self) -> &JumpPanel {
        &self.jumps
    }
}

/// Simulates the whole batch under the feedback policy `u(t, x)`, starting
/// every path at `x0`. With `clamp = (a, b)` each state is pulled
/// componentwise into `[a, b]` after every update.
pub fn simulate_batch(
    dynamics: &ControlledDynamics,
    policy: impl Fn(f64, &[f64], &mut [f64]),
    grid: &TimeGrid,
    x0: &[f64],
    noise: NoisePanel,
    jumps: JumpPanel,
    clamp: Option<(f64, f64)>,
) -> Result<PathBatch> {
    let d = dynamics.state_dim();
    if x0.len() != d {
        return Err(Error::InvalidArgument("x0 dimension mismatch"));
    }
    if noise.dim() != d {
        return Err(Error::InvalidArgument("noise panel dimension mismatch"));
    }
    if noise.m() != jumps.m() || noise.steps() != jumps.steps() || noise.steps() != grid.steps() {
        return Err(Error::InvalidArgument("panel shapes do not match the grid"));
    }
    if let Some((lo, hi)) = clamp {
        if !(lo < hi) {
            return Err(Error::InvalidArgument("clamp bounds must satisfy a < b"));
        }
    }
    let m = noise.m();
    let steps = grid.steps();
    let dt = grid.dt();
    let mut states = vec![0.0f64; m * (steps + 1) * d];
    let mut u = vec![0.0f64; dynamics.control_dim()];
    let mut next = vec![0.0f64; d];
    for j in 0..m {
        let row = j * (steps + 1) * d;
        states[row..row + d].copy_from_slice(x0);
        for n in 0..steps {
            let (head, tail) = states[row..].split_at_mut((n + 1) * d);
            let x = &head[n * d..];
            policy(grid.node(n), x, &mut u);
            check_finite(&u, "policy", j, n)?;
            euler_step(dynamics, x, &u, noise.dw(j, n), &jumps, j, n, dt, &mut next)?;
            if let Some((lo, hi)) = clamp {
                for v in next.iter_mut() {
                    *v = v.clamp(lo, hi);
                }
            }
            tail[..d].copy_from_slice(&next);
        }
    }
    Ok(PathBatch {
        grid: *grid,
        state_dim: d,
        states,
        noise,
        jumps,
    })
}
