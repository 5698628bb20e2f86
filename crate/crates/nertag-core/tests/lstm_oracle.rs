//! Checks the recurrent layers against an independent scalar reference.
//!
//! The reference below is written with explicit per-unit loops, plain
//! nested `Vec` weights, and the standard library's float functions, so it
//! shares no code with the implementation under test. Agreement is
//! required to 1e-12, far below any legitimate numeric drift at these
//! magnitudes but far above the gap any indexing or recurrence mistake
//! would open.

mod common;

use nertag_core::embeddings::{C2wParams, c2w_embed};
use nertag_core::heads::{HiddenParams, emissions};
use nertag_core::lstm::{LstmParams, bilstm_forward, lstm_forward};
use rand::Rng;

const TOL: f64 = 1e-12;

/// One LSTM direction with weights copied out into plain nested vectors.
struct RefLstm {
    wi: Vec<Vec<f64>>,
    wf: Vec<Vec<f64>>,
    wc: Vec<Vec<f64>>,
    wo: Vec<Vec<f64>>,
    ui: Vec<Vec<f64>>,
    uf: Vec<Vec<f64>>,
    uc: Vec<Vec<f64>>,
    uo: Vec<Vec<f64>>,
    bi: Vec<f64>,
    bf: Vec<f64>,
    bc: Vec<f64>,
    bo: Vec<f64>,
}

fn copy_mat(m: &nertag_core::Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m.get(r, c)).collect()).collect()
}

impl RefLstm {
    fn from_params(p: &LstmParams) -> RefLstm {
        RefLstm {
            wi: copy_mat(&p.w_i),
            wf: copy_mat(&p.w_f),
            wc: copy_mat(&p.w_c),
            wo: copy_mat(&p.w_o),
            ui: copy_mat(&p.u_i),
            uf: copy_mat(&p.u_f),
            uc: copy_mat(&p.u_c),
            uo: copy_mat(&p.u_o),
            bi: p.b_i.clone(),
            bf: p.b_f.clone(),
            bc: p.b_c.clone(),
            bo: p.b_o.clone(),
        }
    }

    fn hidden(&self) -> usize {
        self.bi.len()
    }
}

fn ref_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ref_dot(row: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in row.iter().zip(x) {
        acc += a * b;
    }
    acc
}

fn ref_step(p: &RefLstm, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = p.hidden();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for j in 0..n {
        let i = ref_sigmoid(ref_dot(&p.wi[j], x) + ref_dot(&p.ui[j], h_prev) + p.bi[j]);
        let f = ref_sigmoid(ref_dot(&p.wf[j], x) + ref_dot(&p.uf[j], h_prev) + p.bf[j]);
        let g = (ref_dot(&p.wc[j], x) + ref_dot(&p.uc[j], h_prev) + p.bc[j]).tanh();
        let o = ref_sigmoid(ref_dot(&p.wo[j], x) + ref_dot(&p.uo[j], h_prev) + p.bo[j]);
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    (h, c)
}

/// Hidden states for a whole sequence, starting from zeros.
fn ref_run(p: &RefLstm, xs: &[Vec<f64>]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut h = vec![0.0; p.hidden()];
    let mut c = vec![0.0; p.hidden()];
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let (nh, nc) = ref_step(p, x, &h, &c);
        h = nh.clone();
        c = nc.clone();
        out.push((nh, nc));
    }
    out
}

fn assert_close(a: &[f64], b: &[f64], what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length mismatch");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() < TOL, "{what}[{i}]: {x} vs {y}");
    }
}

fn random_seq(r: &mut rand_chacha::ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..dim).map(|_| r.random_range(-1.5..1.5)).collect()).collect()
}

#[test]
fn forward_matches_scalar_reference() {
    let mut r = common::rng(11);
    for case in 0..50 {
        let hidden = r.random_range(1..5usize);
        let input = r.random_range(1..5usize);
        let len = r.random_range(1..7usize);
        let p = LstmParams::init(hidden, input, &mut r);
        let xs = random_seq(&mut r, len, input);

        let got = lstm_forward(&xs, &p, None);
        let want = ref_run(&RefLstm::from_params(&p), &xs);
        for (t, (state, (h, c))) in got.iter().zip(&want).enumerate() {
            assert_close(&state.h, h, &format!("case {case} h at t={t}"));
            assert_close(&state.c, c, &format!("case {case} c at t={t}"));
        }
    }
}

#[test]
fn bilstm_concatenates_two_independent_runs() {
    let mut r = common::rng(12);
    for case in 0..30 {
        let hidden = r.random_range(1..4usize);
        let input = r.random_range(1..4usize);
        let len = r.random_range(1..6usize);
        let fwd = LstmParams::init(hidden, input, &mut r);
        let bwd = LstmParams::init(hidden, input, &mut r);
        let xs = random_seq(&mut r, len, input);

        let got = bilstm_forward(&xs, &fwd, &bwd);
        let fwd_ref = ref_run(&RefLstm::from_params(&fwd), &xs);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let bwd_ref = ref_run(&RefLstm::from_params(&bwd), &rev);

        for t in 0..len {
            let mut want = fwd_ref[t].0.clone();
            // The backward pass read the sequence reversed; its state for
            // original position t sits at reversed position len-1-t.
            want.extend_from_slice(&bwd_ref[len - 1 - t].0);
            assert_close(&got[t], &want, &format!("case {case} t={t}"));
        }
    }
}

#[test]
fn c2w_concatenates_final_states_of_both_directions() {
    let mut r = common::rng(13);
    for case in 0..30 {
        let char_dim = r.random_range(1..4usize);
        let hidden = r.random_range(1..4usize);
        let p = C2wParams::init(char_dim, hidden, &mut r);
        let len = r.random_range(1..8usize);
        let chars: Vec<usize> =
            (0..len).map(|_| r.random_range(0..p.char_table.rows())).collect();

        let got = c2w_embed(&chars, &p);

        let xs: Vec<Vec<f64>> = chars.iter().map(|&c| p.char_table.row(c).to_vec()).collect();
        let fwd_ref = ref_run(&RefLstm::from_params(&p.fwd), &xs);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let bwd_ref = ref_run(&RefLstm::from_params(&p.bwd), &rev);
        let mut want = fwd_ref.last().unwrap().0.clone();
        want.extend_from_slice(&bwd_ref.last().unwrap().0);

        assert_close(&got, &want, &format!("case {case}"));
    }
}

#[test]
fn emission_layer_matches_scalar_reference() {
    let mut r = common::rng(14);
    for case in 0..30 {
        let input = r.random_range(1..5usize);
        let fc = r.random_range(1..5usize);
        let k = r.random_range(2..6usize);
        let len = r.random_range(1..5usize);
        let p = HiddenParams::init(fc, input, k, &mut r);
        let xs = random_seq(&mut r, len, input);

        let got = emissions(&xs, &p);
        let w_h = copy_mat(&p.w_h);
        let w_out = copy_mat(&p.w_out);
        for (t, x) in xs.iter().enumerate() {
            let a: Vec<f64> =
                (0..fc).map(|j| (ref_dot(&w_h[j], x) + p.b_h[j]).tanh()).collect();
            for (tag, w_row) in w_out.iter().enumerate() {
                let want = ref_dot(w_row, &a) + p.b_out[tag];
                let diff = (got.get(t, tag) - want).abs();
                assert!(diff < TOL, "case {case} e[{t}][{tag}]: off by {diff}");
            }
        }
    }
}
