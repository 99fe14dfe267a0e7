//! Relative L2 error metrics on grid-node series.
//!
//! Series are flat arrays indexed `[node][path]` (scalars) or
//! `[node][path][dim]` (controls), with `nodes` covering `t_0 .. t_{L-1}`.
//! The per-node error is `sqrt(sum_j (approx - exact)^2 / sum_j exact^2)`;
//! aggregates weight nodes by `dt`.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

fn check_inputs(approx: &[f64], exact: &[f64], len: usize) -> Result<()> {
    if approx.len() != len || exact.len() != len {
        return Err(Error::InvalidArgument("metric series shapes do not match"));
    }
    if approx.iter().chain(exact).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input series"));
    }
    Ok(())
}

/// Per-node relative L2 errors of a scalar series. A node whose reference
/// norm is identically zero is marked absent rather than infinite.
pub fn per_time_l2_errors(
    approx: &[f64],
    exact: &[f64],
    nodes: usize,
    m: usize,
) -> Result<Vec<Option<f64>>> {
    if nodes == 0 || m == 0 {
        return Err(Error::InvalidArgument("metric needs nodes >= 1 and m >= 1"));
    }
    check_inputs(approx, exact, nodes * m)?;
    let mut out = Vec::with_capacity(nodes);
    for n in 0..nodes {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..m {
            let a = approx[n * m + j];
            let e = exact[n * m + j];
            num += (a - e) * (a - e);
            den += e * e;
        }
        out.push(if den == 0.0 { None } else { Some((num / den).sqrt()) });
    }
    Ok(out)
}

/// `sum_n dt * per_time_l2_errors[n]`, the value-approximation error. A
/// degenerate node (zero reference norm) is a hard error here.
pub fn error_value(dt: f64, approx: &[f64], exact: &[f64], nodes: usize, m: usize) -> Result<f64> {
    let series = per_time_l2_errors(approx, exact, nodes, m)?;
    weighted_sum(dt, &series)
}

/// Folds an already-computed per-node series; [`error_value`] is exactly
/// this fold over [`per_time_l2_errors`].
pub fn weighted_sum(dt: f64, series: &[Option<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (node, entry) in series.iter().enumerate() {
        match entry {
            Some(e) => total += dt * e,
            None => return Err(Error::DegenerateMetric { node }),
        }
    }
    Ok(total)
}

/// Control-approximation error: the per-dimension value-style errors of a
/// `[node][path][dim]` series, averaged over dimensions.
pub fn error_control(
    dt: f64,
    approx: &[f64],
    exact: &[f64],
    nodes: usize,
    m: usize,
    dims: usize,
) -> Result<f64> {
    if nodes == 0 || m == 0 || dims == 0 {
        return Err(Error::InvalidArgument("metric needs nodes, m, dims >= 1"));
    }
    check_inputs(approx, exact, nodes * m * dims)?;
    let mut total = 0.0;
    for c in 0..dims {
        for n in 0..nodes {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..m {
                let a = approx[(n * m + j) * dims + c];
                let e = exact[(n * m + j) * dims + c];
                num += (a - e) * (a - e);
                den += e * e;
            }
            if den == 0.0 {
                return Err(Error::DegenerateMetric { node: n });
            }
            total += dt * (num / den).sqrt();
        }
    }
    Ok(total / dims as f64)
}

/// Game-level aggregates: the plain means of per-agent value and control
/// errors.
pub fn error_game(value_errors: &[f64], control_errors: &[f64]) -> Result<(f64, f64)> {
    if value_errors.is_empty() || control_errors.is_empty() {
        return Err(Error::InvalidArgument("game error needs at least one agent"));
    }
    let v = value_errors.iter().sum::<f64>() / value_errors.len() as f64;
    let c = control_errors.iter().sum::<f64>() / control_errors.len() as f64;
    Ok((v, c))
}
