//! LSTM cells and sequence runners.
//!
//! The cell uses the standard four-gate formulation without peepholes:
//!
//! ```text
//! i_t = sigma(W_i x_t + U_i h_{t-1} + b_i)
//! f_t = sigma(W_f x_t + U_f h_{t-1} + b_f)
//! c_t = f_t * c_{t-1} + i_t * tanh(W_c x_t + U_c h_{t-1} + b_c)
//! o_t = sigma(W_o x_t + U_o h_{t-1} + b_o)
//! h_t = o_t * tanh(c_t)
//! ```
//!
//! A bidirectional pass concatenates the forward state at `t` with the
//! state of a second LSTM run over the reversed sequence, re-aligned so
//! position `t` sees its own backward state.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::{self, Mat};

/// Weights for one LSTM direction: input matrices `W_*` (hidden x input),
/// recurrent matrices `U_*` (hidden x hidden), and bias vectors, for the
/// input, forget, candidate, and output gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Mat,
    pub w_f: Mat,
    pub w_c: Mat,
    pub w_o: Mat,
    pub u_i: Mat,
    pub u_f: Mat,
    pub u_c: Mat,
    pub u_o: Mat,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmParams {
            w_i: Mat::zeros(hidden, input),
            w_f: Mat::zeros(hidden, input),
            w_c: Mat::zeros(hidden, input),
            w_o: Mat::zeros(hidden, input),
            u_i: Mat::zeros(hidden, hidden),
            u_f: Mat::zeros(hidden, hidden),
            u_c: Mat::zeros(hidden, hidden),
            u_o: Mat::zeros(hidden, hidden),
            b_i: vec![0.0; hidden],
            b_f: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
        }
    }

    /// Random init: matrices uniform in the scaled range
    /// `+-sqrt(6/(fan_in+fan_out))`, biases zero.
    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let mut p = LstmParams::zeros(hidden, input);
        for m in [&mut p.w_i, &mut p.w_f, &mut p.w_c, &mut p.w_o] {
            crate::init::xavier_fill(m, rng);
        }
        for m in [&mut p.u_i, &mut p.u_f, &mut p.u_c, &mut p.u_o] {
            crate::init::xavier_fill(m, rng);
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.w_i.rows()
    }

    pub fn input_size(&self) -> usize {
        self.w_i.cols()
    }

    pub(crate) fn visit<'a>(&'a self, f: &mut impl FnMut(&'a [f64])) {
        for m in [&self.w_i, &self.w_f, &self.w_c, &self.w_o, &self.u_i, &self.u_f, &self.u_c, &self.u_o] {
            f(m.data());
        }
        for b in [&self.b_i, &self.b_f, &self.b_c, &self.b_o] {
            f(b);
        }
    }

    pub(crate) fn visit_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        for m in [
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.u_i,
            &mut self.u_f,
            &mut self.u_c,
            &mut self.u_o,
        ] {
            f(m.data_mut());
        }
        for b in [&mut self.b_i, &mut self.b_f, &mut self.b_c, &mut self.b_o] {
            f(b);
        }
    }
}

/// Hidden and cell state after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Gate activations retained for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LstmStepCache {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    /// Candidate, already through tanh.
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

fn gate_preact(w: &Mat, u: &Mat, b: &[f64], x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    w.matvec_add(x, &mut z);
    u.matvec_add(h_prev, &mut z);
    z
}

/// One cell update. Panics on shape mismatch between `x`, `prev`, and the
/// parameter matrices.
pub fn lstm_step(x: &[f64], prev: &LstmState, p: &LstmParams) -> LstmState {
    let (state, _) = lstm_step_cached(x, prev, p);
    state
}

pub(crate) fn lstm_step_cached(x: &[f64], prev: &LstmState, p: &LstmParams) -> (LstmState, LstmStepCache) {
    let hidden = p.hidden_size();
    assert_eq!(x.len(), p.input_size(), "lstm input size mismatch");
    assert_eq!(prev.h.len(), hidden, "lstm hidden size mismatch");
    assert_eq!(prev.c.len(), hidden, "lstm cell size mismatch");

    let mut i = gate_preact(&p.w_i, &p.u_i, &p.b_i, x, &prev.h);
    let mut f = gate_preact(&p.w_f, &p.u_f, &p.b_f, x, &prev.h);
    let mut g = gate_preact(&p.w_c, &p.u_c, &p.b_c, x, &prev.h);
    let mut o = gate_preact(&p.w_o, &p.u_o, &p.b_o, x, &prev.h);
    for v in i.iter_mut() {
        *v = math::sigmoid(*v);
    }
    for v in f.iter_mut() {
        *v = math::sigmoid(*v);
    }
    for v in g.iter_mut() {
        *v = math::tanh(*v);
    }
    for v in o.iter_mut() {
        *v = math::sigmoid(*v);
    }

    let mut c = Vec::with_capacity(hidden);
    for k in 0..hidden {
        c.push(f[k] * prev.c[k] + i[k] * g[k]);
    }
    let tanh_c: Vec<f64> = c.iter().map(|&v| math::tanh(v)).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(ov, tv)| ov * tv).collect();

    let state = LstmState { h: h.clone(), c: c.clone() };
    (state, LstmStepCache { i, f, g, o, c, tanh_c, h })
}

/// Runs the cell over `xs`, returning the state after every step. The
/// initial state defaults to zeros. Panics on an empty sequence.
pub fn lstm_forward(xs: &[Vec<f64>], p: &LstmParams, init: Option<&LstmState>) -> Vec<LstmState> {
    assert!(!xs.is_empty(), "lstm_forward on empty sequence");
    let zero = LstmState::zeros(p.hidden_size());
    let mut state = init.unwrap_or(&zero).clone();
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        state = lstm_step(x, &state, p);
        out.push(state.clone());
    }
    out
}

/// Cached variant, always starting from zeros (training never seeds a
/// nonzero initial state).
pub(crate) fn lstm_forward_cached(xs: &[Vec<f64>], p: &LstmParams) -> Vec<LstmStepCache> {
    assert!(!xs.is_empty(), "lstm_forward on empty sequence");
    let mut state = LstmState::zeros(p.hidden_size());
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        let (next, cache) = lstm_step_cached(x, &state, p);
        state = next;
        caches.push(cache);
    }
    caches
}

/// Backpropagation through a zero-initialized forward run.
///
/// `dh_external[t]` is the loss gradient flowing into `h_t` from layers
/// above. Parameter gradients accumulate into `grads`; input gradients
/// accumulate into `dx`.
pub(crate) fn lstm_backward(
    xs: &[Vec<f64>],
    caches: &[LstmStepCache],
    p: &LstmParams,
    dh_external: &[Vec<f64>],
    grads: &mut LstmParams,
    dx: &mut [Vec<f64>],
) {
    let hidden = p.hidden_size();
    let steps = xs.len();
    assert_eq!(caches.len(), steps);
    assert_eq!(dh_external.len(), steps);
    assert_eq!(dx.len(), steps);

    let zero = vec![0.0; hidden];
    let mut dh_carry = vec![0.0; hidden];
    let mut dc_carry = vec![0.0; hidden];

    for t in (0..steps).rev() {
        let cache = &caches[t];
        let h_prev = if t == 0 { &zero } else { &caches[t - 1].h };
        let c_prev = if t == 0 { &zero } else { &caches[t - 1].c };

        let mut d_pre_i = vec![0.0; hidden];
        let mut d_pre_f = vec![0.0; hidden];
        let mut d_pre_g = vec![0.0; hidden];
        let mut d_pre_o = vec![0.0; hidden];
        for k in 0..hidden {
            let dh = dh_external[t][k] + dh_carry[k];
            let do_ = dh * cache.tanh_c[k];
            let dc = dc_carry[k] + dh * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let di = dc * cache.g[k];
            let dg = dc * cache.i[k];
            let df = dc * c_prev[k];
            dc_carry[k] = dc * cache.f[k];
            d_pre_i[k] = di * cache.i[k] * (1.0 - cache.i[k]);
            d_pre_f[k] = df * cache.f[k] * (1.0 - cache.f[k]);
            d_pre_g[k] = dg * (1.0 - cache.g[k] * cache.g[k]);
            d_pre_o[k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
        }

        let x = &xs[t];
        grads.w_i.add_outer(&d_pre_i, x);
        grads.w_f.add_outer(&d_pre_f, x);
        grads.w_c.add_outer(&d_pre_g, x);
        grads.w_o.add_outer(&d_pre_o, x);
        grads.u_i.add_outer(&d_pre_i, h_prev);
        grads.u_f.add_outer(&d_pre_f, h_prev);
        grads.u_c.add_outer(&d_pre_g, h_prev);
        grads.u_o.add_outer(&d_pre_o, h_prev);
        math::add_scaled(&mut grads.b_i, &d_pre_i, 1.0);
        math::add_scaled(&mut grads.b_f, &d_pre_f, 1.0);
        math::add_scaled(&mut grads.b_c, &d_pre_g, 1.0);
        math::add_scaled(&mut grads.b_o, &d_pre_o, 1.0);

        p.w_i.tmatvec_add(&d_pre_i, &mut dx[t]);
        p.w_f.tmatvec_add(&d_pre_f, &mut dx[t]);
        p.w_c.tmatvec_add(&d_pre_g, &mut dx[t]);
        p.w_o.tmatvec_add(&d_pre_o, &mut dx[t]);

        dh_carry = vec![0.0; hidden];
        p.u_i.tmatvec_add(&d_pre_i, &mut dh_carry);
        p.u_f.tmatvec_add(&d_pre_f, &mut dh_carry);
        p.u_c.tmatvec_add(&d_pre_g, &mut dh_carry);
        p.u_o.tmatvec_add(&d_pre_o, &mut dh_carry);
    }
}

/// Bidirectional pass: `out[t]` is the forward state at `t` concatenated
/// with the backward state at `t` (the backward LSTM consumes the sequence
/// reversed). Both directions must share hidden and input sizes.
pub fn bilstm_forward(xs: &[Vec<f64>], fwd: &LstmParams, bwd: &LstmParams) -> Vec<Vec<f64>> {
    assert_eq!(fwd.hidden_size(), bwd.hidden_size(), "direction hidden sizes differ");
    assert_eq!(fwd.input_size(), bwd.input_size(), "direction input sizes differ");
    let f_states = lstm_forward(xs, fwd, None);
    let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let b_states = lstm_forward(&rev, bwd, None);

    let n = xs.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut row = f_states[t].h.clone();
        row.extend_from_slice(&b_states[n - 1 - t].h);
        out.push(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // With all parameters zero the gates sit at sigma(0)=0.5 and the
    // candidate at tanh(0)=0, so from c_prev=1: c=0.5, h=0.5*tanh(0.5).
    #[test]
    fn zero_params_fixed_point() {
        let p = LstmParams::zeros(2, 3);
        let state = lstm_step(&[1.0, -2.0, 0.5], &LstmState::zeros(2), &p);
        assert_eq!(state.h, vec![0.0, 0.0]);
        assert_eq!(state.c, vec![0.0, 0.0]);

        let prev = LstmState { h: vec![0.0, 0.0], c: vec![1.0, 1.0] };
        let state = lstm_step(&[0.0, 0.0, 0.0], &prev, &p);
        for k in 0..2 {
            assert!((state.c[k] - 0.5).abs() < 1e-15);
            assert!((state.h[k] - 0.23105857863000487).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_tracks_step_by_step() {
        let mut rng = crate::test_rng(7);
        let p = LstmParams::init(3, 2, &mut rng);
        let xs = vec![vec![0.3, -0.1], vec![1.0, 0.2], vec![-0.5, 0.8]];
        let states = lstm_forward(&xs, &p, None);
        assert_eq!(states.len(), 3);

        let mut manual = LstmState::zeros(3);
        for (t, x) in xs.iter().enumerate() {
            manual = lstm_step(x, &manual, &p);
            assert_eq!(states[t], manual);
        }
    }

    // States at position t never depend on later inputs.
    #[test]
    fn forward_is_prefix_stable() {
        let mut rng = crate::test_rng(11);
        let p = LstmParams::init(4, 3, &mut rng);
        let xs: Vec<Vec<f64>> =
            (0..5).map(|t| (0..3).map(|k| ((t * 3 + k) as f64).sin()).collect()).collect();
        let full = lstm_forward(&xs, &p, None);
        let prefix = lstm_forward(&xs[..3], &p, None);
        for t in 0..3 {
            assert_eq!(full[t], prefix[t]);
        }
    }

    #[test]
    fn bilstm_palindrome_symmetry() {
        let mut rng = crate::test_rng(3);
        let p = LstmParams::init(3, 2, &mut rng);
        // Palindromic input with shared direction parameters: the two
        // halves at mirrored positions swap.
        let xs = vec![vec![0.1, 0.9], vec![-0.4, 0.2], vec![0.1, 0.9]];
        let out = bilstm_forward(&xs, &p, &p);
        let n = xs.len();
        for t in 0..n {
            let (f_half, b_half) = out[t].split_at(3);
            let (f_mirror, b_mirror) = out[n - 1 - t].split_at(3);
            for k in 0..3 {
                assert!((f_half[k] - b_mirror[k]).abs() < 1e-15);
                assert!((b_half[k] - f_mirror[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    #[should_panic(expected = "empty sequence")]
    fn empty_sequence_rejected() {
        let p = LstmParams::zeros(2, 2);
        lstm_forward(&[], &p, None);
    }

    #[test]
    #[should_panic(expected = "input size mismatch")]
    fn shape_mismatch_rejected() {
        let p = LstmParams::zeros(2, 3);
        lstm_step(&[1.0, 2.0], &LstmState::zeros(2), &p);
    }
}
