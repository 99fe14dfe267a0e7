use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::rng::{self, tags};
use crate::{Error, Result};

/// Residual network `R x R^d -> R^m` on inputs `(t, x)`.
///
/// Architecture: input linear layer to `width`, then `blocks` residual
/// blocks `h -> h + tanh(W2 tanh(W1 h + b1) + b2)`, then an output linear
/// layer. Tanh appears only inside the blocks, so a zero parameter vector
/// gives the zero function. With a trainable bound `b` the bounded output
/// is `b * tanh(raw)`, which keeps values strictly inside `(-|b|, |b|)`.
///
/// Parameters live in one flat vector (input layer, blocks in order, output
/// layer, optional bound last) so optimizer state and snapshots are plain
/// `f64` arrays.
pub struct ResNet {
    in_dim: usize,
    width: usize,
    blocks: usize,
    out_dim: usize,
    has_bound: bool,
    params: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for ((row, &bias), o) in w.chunks_exact(cols).zip(b).zip(out.iter_mut()) {
        let mut acc = bias;
        for (&wi, &xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o = acc;
    }
}

fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        let mut acc = 0.0;
        for (&wi, &xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *o = acc;
    }
}

/// `xbar += W^T ybar` for row-major `W`.
fn add_matvec_t(w: &[f64], ybar: &[f64], xbar: &mut [f64]) {
    let cols = xbar.len();
    for (row, &yb) in w.chunks_exact(cols).zip(ybar) {
        for (xb, &wi) in xbar.iter_mut().zip(row) {
            *xb += yb * wi;
        }
    }
}

/// `Wbar += ybar x^T` for row-major `Wbar`.
fn add_outer(wbar: &mut [f64], ybar: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &yb) in wbar.chunks_exact_mut(cols).zip(ybar) {
        for (wb, &xi) in row.iter_mut().zip(x) {
            *wb += yb * xi;
        }
    }
}

fn add_scaled(acc: &mut [f64], v: &[f64]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

impl ResNet {
    /// Network with fan-in-scaled zero-mean uniform weights, zero biases,
    /// and, if given, a trainable output bound initialized to `bound`.
    /// Initialization is a pure function of the architecture and `seed`.
    pub fn init(
        state_dim: usize,
        width: usize,
        blocks: usize,
        out_dim: usize,
        bound: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(state_dim, width, blocks, out_dim, bound)?;
        let mut stream = rng::stream(seed, &[tags::NET]);
        let in_dim = net.in_dim;
        let scale_in = 1.0 / (in_dim as f64).sqrt();
        let scale_hidden = 1.0 / (width as f64).sqrt();
        {
            let range = net.off_w_in()..net.off_w_in() + width * in_dim;
            for w in &mut net.params[range] {
                *w = stream.random_range(-scale_in..scale_in);
            }
        }
        for k in 0..blocks {
            for layer in 0..2 {
                let base = net.off_block(k) + layer * (width * width + width);
                for w in &mut net.params[base..base + width * width] {
                    *w = stream.random_range(-scale_hidden..scale_hidden);
                }
            }
        }
        {
            let range = net.off_w_out()..net.off_w_out() + out_dim * width;
            for w in &mut net.params[range] {
                *w = stream.random_range(-scale_hidden..scale_hidden);
            }
        }
        Ok(net)
    }

    /// All-zero network (the zero function); mostly useful in tests.
    pub fn zeros(
        state_dim: usize,
        width: usize,
        blocks: usize,
        out_dim: usize,
        bound: Option<f64>,
    ) -> Result<Self> {
        if state_dim == 0 || width == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument("network dimensions must be >= 1"));
        }
        let mut net = ResNet {
            in_dim: state_dim + 1,
            width,
            blocks,
            out_dim,
            has_bound: bound.is_some(),
            params: Vec::new(),
        };
        net.params = vec![0.0; net.param_count()];
        if let Some(b0) = bound {
            let idx = net.off_bound();
            net.params[idx] = b0;
        }
        Ok(net)
    }

    fn block_len(&self) -> usize {
        2 * (self.width * self.width + self.width)
    }

    fn off_w_in(&self) -> usize {
        0
    }

    fn off_b_in(&self) -> usize {
        self.width * self.in_dim
    }

    fn off_block(&self, k: usize) -> usize {
        self.off_b_in() + self.width + k * self.block_len()
    }

    fn off_w_out(&self) -> usize {
        self.off_block(self.blocks)
    }

    fn off_b_out(&self) -> usize {
        self.off_w_out() + self.out_dim * self.width
    }

    fn off_bound(&self) -> usize {
        self.off_b_out() + self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.off_bound() + self.has_bound as usize
    }

    pub fn state_dim(&self) -> usize {
        self.in_dim - 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn has_bound(&self) -> bool {
        self.has_bound
    }

    /// Current bound value `b` (its sign is free; the output range is
    /// `(-|b|, |b|)`).
    pub fn bound(&self) -> Option<f64> {
        self.has_bound.then(|| self.params[self.off_bound()])
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Raw (unbounded) forward pass.
    pub fn forward(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut cache = Cache::new(self);
        self.forward_cached(t, x, false, &mut cache);
        out.copy_from_slice(cache.output());
    }

    /// Bounded forward pass `b * tanh(raw)`; the network must carry a bound.
    pub fn forward_bounded(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if !self.has_bound {
            return Err(Error::InvalidState("network has no output bound"));
        }
        let mut cache = Cache::new(self);
        self.forward_cached(t, x, true, &mut cache);
        out.copy_from_slice(cache.output());
        Ok(())
    }

    /// Forward pass into a caller-owned cache; `bounded` selects the output
    /// head and requires the bound parameter to exist.
    pub fn forward_cached(&self, t: f64, x: &[f64], bounded: bool, cache: &mut Cache) {
        debug_assert_eq!(x.len(), self.state_dim());
        debug_assert!(!bounded || self.has_bound);
        let w = self.width;
        cache.bounded = bounded;
        cache.input[0] = t;
        cache.input[1..].copy_from_slice(x);
        affine(
            &self.params[self.off_w_in()..self.off_b_in()],
            &self.params[self.off_b_in()..self.off_b_in() + w],
            &cache.input,
            &mut cache.h[..w],
        );
        for k in 0..self.blocks {
            let base = self.off_block(k);
            let (w1, rest) = self.params[base..].split_at(w * w);
            let (b1, rest) = rest.split_at(w);
            let (w2, rest) = rest.split_at(w * w);
            let b2 = &rest[..w];
            let (head, tail) = cache.h.split_at_mut((k + 1) * w);
            let h_in = &head[k * w..];
            let a1 = &mut cache.a1[k * w..(k + 1) * w];
            affine(w1, b1, h_in, a1);
            for v in a1.iter_mut() {
                *v = v.tanh();
            }
            let a2 = &mut cache.a2[k * w..(k + 1) * w];
            affine(w2, b2, a1, a2);
            for v in a2.iter_mut() {
                *v = v.tanh();
            }
            for ((next, &prev), &a) in tail[..w].iter_mut().zip(h_in).zip(a2.iter()) {
                *next = prev + a;
            }
        }
        affine(
            &self.params[self.off_w_out()..self.off_b_out()],
            &self.params[self.off_b_out()..self.off_b_out() + self.out_dim],
            &cache.h[self.blocks * w..(self.blocks + 1) * w],
            &mut cache.out_pre,
        );
        if bounded {
            let b = self.params[self.off_bound()];
            for (tau, (&o, y)) in cache
                .tanh_out
                .iter_mut()
                .zip(cache.out_pre.iter().zip(cache.out.iter_mut()))
            {
                *tau = o.tanh();
                *y = b * *tau;
            }
        } else {
            cache.out.copy_from_slice(&cache.out_pre);
        }
    }

    /// Reverse pass for the evaluation recorded in `cache`.
    ///
    /// Adds the pullback of `cot` (an adjoint of the network output, bounded
    /// head included if the forward pass used it) into `grads` (length
    /// `param_count`) and the input adjoint into `input_bar` (length
    /// `1 + state_dim`, time slot first). Both targets accumulate.
    pub fn backward(
        &self,
        cache: &mut Cache,
        cot: &[f64],
        mut grads: Option<&mut [f64]>,
        mut input_bar: Option<&mut [f64]>,
    ) {
        let w = self.width;
        let obar = &mut cache.scratch_o;
        if cache.bounded {
            let b = self.params[self.off_bound()];
            let mut bbar = 0.0;
            for ((&c, &tau), ob) in cot.iter().zip(&cache.tanh_out).zip(obar.iter_mut()) {
                bbar += c * tau;
                *ob = c * b * (1.0 - tau * tau);
            }
            if let Some(g) = grads.as_deref_mut() {
                g[self.off_bound()] += bbar;
            }
        } else {
            obar.copy_from_slice(cot);
        }

        let hbar = &mut cache.bar_h;
        let h_last = &cache.h[self.blocks * w..(self.blocks + 1) * w];
        hbar.fill(0.0);
        add_matvec_t(&self.params[self.off_w_out()..self.off_b_out()], obar, hbar);
        if let Some(g) = grads.as_deref_mut() {
            add_outer(&mut g[self.off_w_out()..self.off_b_out()], obar, h_last);
            add_scaled(&mut g[self.off_b_out()..self.off_b_out() + self.out_dim], obar);
        }

        for k in (0..self.blocks).rev() {
            let base = self.off_block(k);
            let (w1, rest) = self.params[base..].split_at(w * w);
            let (_b1, rest) = rest.split_at(w);
            let (w2, _rest) = rest.split_at(w * w);
            let h_in = &cache.h[k * w..(k + 1) * w];
            let a1 = &cache.a1[k * w..(k + 1) * w];
            let a2 = &cache.a2[k * w..(k + 1) * w];

            // h_out = h_in + tanh(p2); hbar currently holds the h_out adjoint,
            // which is also the identity-branch contribution to h_in.
            let p2bar = &mut cache.bar_t;
            for ((pb, &hb), &a) in p2bar.iter_mut().zip(hbar.iter()).zip(a2) {
                *pb = hb * (1.0 - a * a);
            }
            let a1bar = &mut cache.bar_a;
            a1bar.fill(0.0);
            add_matvec_t(w2, p2bar, a1bar);
            for (ab, &a) in a1bar.iter_mut().zip(a1) {
                *ab *= 1.0 - a * a;
            }
            if let Some(g) = grads.as_deref_mut() {
                let gb = &mut g[base..base + self.block_len()];
                let (gw1, grest) = gb.split_at_mut(w * w);
                let (gb1, grest) = grest.split_at_mut(w);
                let (gw2, gb2) = grest.split_at_mut(w * w);
                add_outer(gw2, p2bar, a1);
                add_scaled(&mut gb2[..w], p2bar);
                add_outer(gw1, a1bar, h_in);
                add_scaled(gb1, a1bar);
            }
            add_matvec_t(w1, a1bar, hbar);
        }

        if let Some(g) = grads.as_deref_mut() {
            add_outer(&mut g[self.off_w_in()..self.off_b_in()], hbar, &cache.input);
            add_scaled(&mut g[self.off_b_in()..self.off_b_in() + w], hbar);
        }
        if let Some(ib) = input_bar.as_deref_mut() {
            add_matvec_t(&self.params[self.off_w_in()..self.off_b_in()], hbar, ib);
        }
    }

    /// Forward pass together with the directional derivative along the input
    /// tangent `(0, dx)`; records values and tangents in `dual`.
    pub fn forward_dual(&self, t: f64, x: &[f64], dx: &[f64], bounded: bool, dual: &mut DualCache) {
        debug_assert_eq!(dx.len(), self.state_dim());
        self.forward_cached(t, x, bounded, &mut dual.val);
        let w = self.width;
        dual.d_input[0] = 0.0;
        dual.d_input[1..].copy_from_slice(dx);
        matvec(
            &self.params[self.off_w_in()..self.off_b_in()],
            &dual.d_input,
            &mut dual.d_h[..w],
        );
        for k in 0..self.blocks {
            let base = self.off_block(k);
            let (w1, rest) = self.params[base..].split_at(w * w);
            let (_b1, rest) = rest.split_at(w);
            let (w2, _rest) = rest.split_at(w * w);
            let a1 = &dual.val.a1[k * w..(k + 1) * w];
            let a2 = &dual.val.a2[k * w..(k + 1) * w];
            let (dhead, dtail) = dual.d_h.split_at_mut((k + 1) * w);
            let dh_in = &dhead[k * w..];
            let dp1 = &mut dual.dp1[k * w..(k + 1) * w];
            matvec(w1, dh_in, dp1);
            let da1 = &mut dual.scratch_d;
            for (da, (&dp, &a)) in da1.iter_mut().zip(dp1.iter().zip(a1)) {
                *da = (1.0 - a * a) * dp;
            }
            let dp2 = &mut dual.dp2[k * w..(k + 1) * w];
            matvec(w2, da1, dp2);
            for ((next, &prev), (&dp, &a)) in dtail[..w]
                .iter_mut()
                .zip(dh_in)
                .zip(dp2.iter().zip(a2))
            {
                *next = prev + (1.0 - a * a) * dp;
            }
        }
        matvec(
            &self.params[self.off_w_out()..self.off_b_out()],
            &dual.d_h[self.blocks * w..(self.blocks + 1) * w],
            &mut dual.d_out_pre,
        );
        if bounded {
            let b = self.params[self.off_bound()];
            for (dy, (&tau, &dov)) in dual
                .d_out
                .iter_mut()
                .zip(dual.val.tanh_out.iter().zip(&dual.d_out_pre))
            {
                *dy = b * (1.0 - tau * tau) * dov;
            }
        } else {
            dual.d_out.copy_from_slice(&dual.d_out_pre);
        }
    }

    /// Reverse pass through the dual evaluation in `dual`.
    ///
    /// Pulls back `cot_val` (adjoint of the output value) and `cot_tan`
    /// (adjoint of the output tangent) into parameter gradients and the
    /// adjoints of the input value and the input tangent. Differentiating a
    /// function of the directional derivative `grad_x N . dx` with respect
    /// to parameters and inputs is exactly this pass with `cot_val = 0`.
    pub fn backward_dual(
        &self,
        dual: &mut DualCache,
        cot_val: &[f64],
        cot_tan: &[f64],
        mut grads: Option<&mut [f64]>,
        mut input_bar_val: Option<&mut [f64]>,
        mut input_bar_tan: Option<&mut [f64]>,
    ) {
        let w = self.width;
        let cache = &mut dual.val;
        let obar = &mut cache.scratch_o;
        let dobar = &mut dual.scratch_do;
        if cache.bounded {
            let b = self.params[self.off_bound()];
            let mut bbar = 0.0;
            for i in 0..self.out_dim {
                let tau = cache.tanh_out[i];
                let g = 1.0 - tau * tau;
                let dov = dual.d_out_pre[i];
                bbar += cot_val[i] * tau + cot_tan[i] * g * dov;
                obar[i] = cot_val[i] * b * g + cot_tan[i] * b * (-2.0 * tau * g) * dov;
                dobar[i] = cot_tan[i] * b * g;
            }
            if let Some(g) = grads.as_deref_mut() {
                g[self.off_bound()] += bbar;
            }
        } else {
            obar.copy_from_slice(cot_val);
            dobar.copy_from_slice(cot_tan);
        }

        let h_last = &cache.h[self.blocks * w..(self.blocks + 1) * w];
        let dh_last = &dual.d_h[self.blocks * w..(self.blocks + 1) * w];
        let hbar = &mut cache.bar_h;
        let dhbar = &mut dual.bar_dh;
        hbar.fill(0.0);
        dhbar.fill(0.0);
        let w_out = &self.params[self.off_w_out()..self.off_b_out()];
        add_matvec_t(w_out, obar, hbar);
        add_matvec_t(w_out, dobar, dhbar);
        if let Some(g) = grads.as_deref_mut() {
            let gw = &mut g[self.off_w_out()..self.off_b_out()];
            add_outer(gw, obar, h_last);
            add_outer(gw, dobar, dh_last);
            add_scaled(&mut g[self.off_b_out()..self.off_b_out() + self.out_dim], obar);
        }

        for k in (0..self.blocks).rev() {
            let base = self.off_block(k);
            let (w1, rest) = self.params[base..].split_at(w * w);
            let (_b1, rest) = rest.split_at(w);
            let (w2, _rest) = rest.split_at(w * w);
            let h_in = &cache.h[k * w..(k + 1) * w];
            let dh_in = &dual.d_h[k * w..(k + 1) * w];
            let a1 = &cache.a1[k * w..(k + 1) * w];
            let a2 = &cache.a2[k * w..(k + 1) * w];
            let dp1 = &dual.dp1[k * w..(k + 1) * w];
            let dp2 = &dual.dp2[k * w..(k + 1) * w];

            // Value tangent of a1, needed for the W2 gradient.
            let da1 = &mut dual.scratch_d;
            for (da, (&dp, &a)) in da1.iter_mut().zip(dp1.iter().zip(a1)) {
                *da = (1.0 - a * a) * dp;
            }

            // tanh at p2: a2bar = hbar, da2bar = dhbar.
            let p2bar = &mut cache.bar_t;
            let dp2bar = &mut dual.bar_dt;
            for i in 0..w {
                let a = a2[i];
                let g = 1.0 - a * a;
                p2bar[i] = hbar[i] * g + dhbar[i] * (-2.0 * a * g) * dp2[i];
                dp2bar[i] = dhbar[i] * g;
            }
            let a1bar = &mut cache.bar_a;
            let da1bar = &mut dual.bar_da;
            a1bar.fill(0.0);
            da1bar.fill(0.0);
            add_matvec_t(w2, p2bar, a1bar);
            add_matvec_t(w2, dp2bar, da1bar);
            if let Some(g) = grads.as_deref_mut() {
                let gb = &mut g[base..base + self.block_len()];
                let (_gw1, grest) = gb.split_at_mut(w * w);
                let (_gb1, grest) = grest.split_at_mut(w);
                let (gw2, gb2) = grest.split_at_mut(w * w);
                add_outer(gw2, p2bar, a1);
                add_outer(gw2, dp2bar, da1);
                add_scaled(&mut gb2[..w], p2bar);
            }

            // tanh at p1: turns a1bar/da1bar into the adjoints of p1 and dp1.
            for i in 0..w {
                let a = a1[i];
                let g = 1.0 - a * a;
                let abar = a1bar[i];
                let dabar = da1bar[i];
                a1bar[i] = abar * g + dabar * (-2.0 * a * g) * dp1[i];
                da1bar[i] = dabar * g;
            }
            if let Some(g) = grads.as_deref_mut() {
                let gb = &mut g[base..base + self.block_len()];
                let (gw1, grest) = gb.split_at_mut(w * w);
                let gb1 = &mut grest[..w];
                add_outer(gw1, a1bar, h_in);
                add_outer(gw1, da1bar, dh_in);
                add_scaled(gb1, a1bar);
            }
            add_matvec_t(w1, a1bar, hbar);
            add_matvec_t(w1, da1bar, dhbar);
        }

        if let Some(g) = grads.as_deref_mut() {
            let gw = &mut g[self.off_w_in()..self.off_b_in()];
            add_outer(gw, hbar, &cache.input);
            add_outer(gw, dhbar, &dual.d_input);
            add_scaled(&mut g[self.off_b_in()..self.off_b_in() + w], hbar);
        }
        let w_in = &self.params[self.off_w_in()..self.off_b_in()];
        if let Some(ib) = input_bar_val.as_deref_mut() {
            add_matvec_t(w_in, hbar, ib);
        }
        if let Some(ib) = input_bar_tan.as_deref_mut() {
            add_matvec_t(w_in, dhbar, ib);
        }
    }

    /// Exact Jacobian of the network output with respect to the state input
    /// `x` (not `t`), row-major `out_dim x state_dim`. Uses the bounded head
    /// when the network carries a bound.
    pub fn grad_input(&self, t: f64, x: &[f64], jac: &mut [f64]) {
        debug_assert_eq!(jac.len(), self.out_dim * self.state_dim());
        let mut cache = Cache::new(self);
        self.forward_cached(t, x, self.has_bound, &mut cache);
        let mut cot = vec![0.0; self.out_dim];
        let mut ibar = vec![0.0; self.in_dim];
        for r in 0..self.out_dim {
            cot[r] = 1.0;
            ibar.fill(0.0);
            self.backward(&mut cache, &cot, None, Some(&mut ibar));
            jac[r * self.state_dim()..(r + 1) * self.state_dim()].copy_from_slice(&ibar[1..]);
            cot[r] = 0.0;
        }
    }
}

/// Caller-owned forward/backward workspace for one network evaluation.
pub struct Cache {
    input: Vec<f64>,
    h: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    out_pre: Vec<f64>,
    tanh_out: Vec<f64>,
    out: Vec<f64>,
    bounded: bool,
    bar_h: Vec<f64>,
    bar_a: Vec<f64>,
    bar_t: Vec<f64>,
    scratch_o: Vec<f64>,
}

impl Cache {
    pub fn new(net: &ResNet) -> Self {
        let w = net.width;
        Cache {
            input: vec![0.0; net.in_dim],
            h: vec![0.0; (net.blocks + 1) * w],
            a1: vec![0.0; net.blocks * w],
            a2: vec![0.0; net.blocks * w],
            out_pre: vec![0.0; net.out_dim],
            tanh_out: vec![0.0; net.out_dim],
            out: vec![0.0; net.out_dim],
            bounded: false,
            bar_h: vec![0.0; w],
            bar_a: vec![0.0; w],
            bar_t: vec![0.0; w],
            scratch_o: vec![0.0; net.out_dim],
        }
    }

    /// Output of the recorded forward pass (bounded head applied if used).
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

/// Workspace for a forward pass carrying one input tangent.
pub struct DualCache {
    pub(crate) val: Cache,
    d_input: Vec<f64>,
    d_h: Vec<f64>,
    dp1: Vec<f64>,
    dp2: Vec<f64>,
    d_out_pre: Vec<f64>,
    d_out: Vec<f64>,
    bar_dh: Vec<f64>,
    bar_da: Vec<f64>,
    bar_dt: Vec<f64>,
    scratch_d: Vec<f64>,
    scratch_do: Vec<f64>,
}

impl DualCache {
    pub fn new(net: &ResNet) -> Self {
        let w = net.width;
        DualCache {
            val: Cache::new(net),
            d_input: vec![0.0; net.in_dim],
            d_h: vec![0.0; (net.blocks + 1) * w],
            dp1: vec![0.0; net.blocks * w],
            dp2: vec![0.0; net.blocks * w],
            d_out_pre: vec![0.0; net.out_dim],
            d_out: vec![0.0; net.out_dim],
            bar_dh: vec![0.0; w],
            bar_da: vec![0.0; w],
            bar_dt: vec![0.0; w],
            scratch_d: vec![0.0; w],
            scratch_do: vec![0.0; net.out_dim],
        }
    }

    /// Output value of the recorded dual pass.
    pub fn output(&self) -> &[f64] {
        self.val.output()
    }

    /// Output tangent, i.e. the directional derivative along the input
    /// tangent supplied to [`ResNet::forward_dual`].
    pub fn tangent(&self) -> &[f64] {
        &self.d_out
    }
}
