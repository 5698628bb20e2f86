//! Scoring heads over the Bi-LSTM: a fully connected tanh layer produces
//! per-token emission scores, which feed either an independent softmax per
//! token or a linear-chain CRF with start/stop scores and a transition
//! matrix.
//!
//! All CRF routines work in log space with max-shifted sums; hard-masked
//! transitions use a large negative sentinel instead of negative infinity
//! so subtraction can never produce NaN.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::IobTag;
use crate::math::{self, logsumexp, Mat};

/// Additive score for transitions ruled out by a mask. Finite on purpose.
pub const MASKED_SCORE: f64 = -1e30;

/// Which head turns emissions into a tag sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Softmax,
    Crf,
}

/// Fully connected layer between the Bi-LSTM output and the emission
/// scores: `e_t = W_out tanh(W_h b_t + b_h) + b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenParams {
    pub w_h: Mat,
    pub b_h: Vec<f64>,
    pub w_out: Mat,
    pub b_out: Vec<f64>,
}

impl HiddenParams {
    pub fn zeros(fc: usize, input: usize, num_tags: usize) -> Self {
        HiddenParams {
            w_h: Mat::zeros(fc, input),
            b_h: vec![0.0; fc],
            w_out: Mat::zeros(num_tags, fc),
            b_out: vec![0.0; num_tags],
        }
    }

    pub fn init(fc: usize, input: usize, num_tags: usize, rng: &mut impl Rng) -> Self {
        let mut p = HiddenParams::zeros(fc, input, num_tags);
        crate::init::xavier_fill(&mut p.w_h, rng);
        crate::init::xavier_fill(&mut p.w_out, rng);
        p
    }

    pub fn num_tags(&self) -> usize {
        self.w_out.rows()
    }

    pub(crate) fn visit<'a>(&'a self, f: &mut impl FnMut(&'a [f64])) {
        f(self.w_h.data());
        f(&self.b_h);
        f(self.w_out.data());
        f(&self.b_out);
    }

    pub(crate) fn visit_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        f(self.w_h.data_mut());
        f(&mut self.b_h);
        f(self.w_out.data_mut());
        f(&mut self.b_out);
    }
}

/// Per-token tag scores for one sentence: `len()` rows of `num_tags()`
/// finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Emissions {
    scores: Mat,
}

impl Emissions {
    pub fn new(scores: Mat) -> Self {
        assert!(scores.rows() > 0, "emissions need at least one token");
        Emissions { scores }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        Emissions::new(Mat::from_rows(rows))
    }

    /// Sentence length.
    pub fn len(&self) -> usize {
        self.scores.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_tags(&self) -> usize {
        self.scores.cols()
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.scores.get(t, k)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.scores.row(t)
    }

    pub fn scores(&self) -> &Mat {
        &self.scores
    }
}

/// Linear-chain CRF parameters: `transitions[j][k]` scores tag `j`
/// followed by tag `k`; `start`/`stop` score the first and last tag.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: Mat,
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(num_tags: usize) -> Self {
        CrfParams {
            transitions: Mat::zeros(num_tags, num_tags),
            start: vec![0.0; num_tags],
            stop: vec![0.0; num_tags],
        }
    }

    pub fn init(num_tags: usize, rng: &mut impl Rng) -> Self {
        let mut p = CrfParams::zeros(num_tags);
        crate::init::xavier_fill(&mut p.transitions, rng);
        p
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    pub(crate) fn visit<'a>(&'a self, f: &mut impl FnMut(&'a [f64])) {
        f(self.transitions.data());
        f(&self.start);
        f(&self.stop);
    }

    pub(crate) fn visit_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        f(self.transitions.data_mut());
        f(&mut self.start);
        f(&mut self.stop);
    }
}

/// Hard decode-time constraints: which tags may start a sequence and which
/// may follow which. Masked choices receive [`MASKED_SCORE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    num_tags: usize,
    start_ok: Vec<bool>,
    pair_ok: Vec<bool>,
}

impl TransitionMask {
    pub fn from_fn(
        num_tags: usize,
        start: impl Fn(usize) -> bool,
        pair: impl Fn(usize, usize) -> bool,
    ) -> Self {
        let start_ok = (0..num_tags).map(&start).collect();
        let mut pair_ok = Vec::with_capacity(num_tags * num_tags);
        for j in 0..num_tags {
            for k in 0..num_tags {
                pair_ok.push(pair(j, k));
            }
        }
        TransitionMask { num_tags, start_ok, pair_ok }
    }

    /// The IOB legality mask over the 11-tag NE scheme: `I-X` only after
    /// `B-X` or `I-X`, and never first.
    pub fn iob() -> Self {
        let tag = |i: usize| IobTag::from_index(i).unwrap();
        TransitionMask::from_fn(
            IobTag::COUNT,
            |k| tag(k).can_follow(None),
            |j, k| tag(k).can_follow(Some(tag(j))),
        )
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn start_allowed(&self, k: usize) -> bool {
        self.start_ok[k]
    }

    pub fn pair_allowed(&self, j: usize, k: usize) -> bool {
        self.pair_ok[j * self.num_tags + k]
    }

    fn start_penalty(&self, k: usize) -> f64 {
        if self.start_ok[k] {
            0.0
        } else {
            MASKED_SCORE
        }
    }

    fn pair_penalty(&self, j: usize, k: usize) -> f64 {
        if self.pair_ok[j * self.num_tags + k] {
            0.0
        } else {
            MASKED_SCORE
        }
    }
}

/// Computes emission scores for a sentence of Bi-LSTM outputs.
pub fn emissions(bilstm_out: &[Vec<f64>], p: &HiddenParams) -> Emissions {
    let (e, _) = emissions_cached(bilstm_out, p);
    e
}

/// Also returns the tanh activations, needed for backpropagation.
pub(crate) fn emissions_cached(bilstm_out: &[Vec<f64>], p: &HiddenParams) -> (Emissions, Vec<Vec<f64>>) {
    assert!(!bilstm_out.is_empty(), "emissions on empty sentence");
    let mut rows = Vec::with_capacity(bilstm_out.len());
    let mut fc_cache = Vec::with_capacity(bilstm_out.len());
    for b in bilstm_out {
        let mut fc = p.b_h.clone();
        p.w_h.matvec_add(b, &mut fc);
        for v in fc.iter_mut() {
            *v = math::tanh(*v);
        }
        let mut e = p.b_out.clone();
        p.w_out.matvec_add(&fc, &mut e);
        rows.push(e);
        fc_cache.push(fc);
    }
    (Emissions::from_rows(&rows), fc_cache)
}

/// Backward pass through the fully connected layer. Returns the gradient
/// with respect to the Bi-LSTM outputs.
pub(crate) fn emissions_backward(
    d_e: &Mat,
    bilstm_out: &[Vec<f64>],
    fc_cache: &[Vec<f64>],
    p: &HiddenParams,
    grads: &mut HiddenParams,
) -> Vec<Vec<f64>> {
    let mut d_bilstm = Vec::with_capacity(bilstm_out.len());
    for (t, b) in bilstm_out.iter().enumerate() {
        let d_out = d_e.row(t);
        let fc = &fc_cache[t];
        grads.w_out.add_outer(d_out, fc);
        math::add_scaled(&mut grads.b_out, d_out, 1.0);

        let mut d_fc = vec![0.0; fc.len()];
        p.w_out.tmatvec_add(d_out, &mut d_fc);
        for (d, &a) in d_fc.iter_mut().zip(fc) {
            *d *= 1.0 - a * a;
        }
        grads.w_h.add_outer(&d_fc, b);
        math::add_scaled(&mut grads.b_h, &d_fc, 1.0);

        let mut d_b = vec![0.0; b.len()];
        p.w_h.tmatvec_add(&d_fc, &mut d_b);
        d_bilstm.push(d_b);
    }
    d_bilstm
}

/// Per-token argmax with row-wise softmax probabilities. Ties resolve to
/// the lowest tag index.
pub fn softmax_decode(e: &Emissions) -> (Vec<usize>, Mat) {
    let (t_len, k_len) = (e.len(), e.num_tags());
    let mut path = Vec::with_capacity(t_len);
    let mut probs = Mat::zeros(t_len, k_len);
    for t in 0..t_len {
        let row = e.row(t);
        let lse = logsumexp(row);
        let mut best = 0;
        for (k, &s) in row.iter().enumerate() {
            probs.set(t, k, math::exp(s - lse));
            if s > row[best] {
                best = k;
            }
        }
        path.push(best);
    }
    (path, probs)
}

fn check_crf_shapes(e: &Emissions, crf: &CrfParams) {
    assert_eq!(e.num_tags(), crf.num_tags(), "emission/CRF tag count mismatch");
}

/// Unnormalized log score of one path:
/// `start[y_0] + sum_t e[t][y_t] + sum_t transitions[y_{t-1}][y_t] + stop[y_last]`.
pub fn crf_score(e: &Emissions, crf: &CrfParams, tags: &[usize]) -> f64 {
    check_crf_shapes(e, crf);
    assert_eq!(tags.len(), e.len(), "path length mismatch");
    let mut score = crf.start[tags[0]] + e.get(0, tags[0]);
    for t in 1..tags.len() {
        score += crf.transitions.get(tags[t - 1], tags[t]) + e.get(t, tags[t]);
    }
    score + crf.stop[tags[tags.len() - 1]]
}

fn crf_alphas(e: &Emissions, crf: &CrfParams) -> Mat {
    let (t_len, k_len) = (e.len(), e.num_tags());
    let mut alpha = Mat::zeros(t_len, k_len);
    for k in 0..k_len {
        alpha.set(0, k, crf.start[k] + e.get(0, k));
    }
    let mut scratch = vec![0.0; k_len];
    for t in 1..t_len {
        for k in 0..k_len {
            for j in 0..k_len {
                scratch[j] = alpha.get(t - 1, j) + crf.transitions.get(j, k);
            }
            alpha.set(t, k, e.get(t, k) + logsumexp(&scratch));
        }
    }
    alpha
}

/// Log of the partition function over all `K^T` paths, via the forward
/// recursion.
pub fn crf_log_partition(e: &Emissions, crf: &CrfParams) -> f64 {
    check_crf_shapes(e, crf);
    let alpha = crf_alphas(e, crf);
    let t_last = e.len() - 1;
    let final_scores: Vec<f64> =
        (0..e.num_tags()).map(|k| alpha.get(t_last, k) + crf.stop[k]).collect();
    logsumexp(&final_scores)
}

/// Max-product decode. Returns the best path and its score; score ties
/// resolve to the lowest tag index at every choice point. An optional mask
/// rules out transitions entirely.
pub fn viterbi_decode(
    e: &Emissions,
    crf: &CrfParams,
    mask: Option<&TransitionMask>,
) -> (Vec<usize>, f64) {
    check_crf_shapes(e, crf);
    if let Some(m) = mask {
        assert_eq!(m.num_tags(), e.num_tags(), "mask tag count mismatch");
    }
    let (t_len, k_len) = (e.len(), e.num_tags());
    let start_pen = |k: usize| mask.map_or(0.0, |m| m.start_penalty(k));
    let pair_pen = |j: usize, k: usize| mask.map_or(0.0, |m| m.pair_penalty(j, k));

    let mut delta: Vec<f64> =
        (0..k_len).map(|k| crf.start[k] + e.get(0, k) + start_pen(k)).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));

    for t in 1..t_len {
        let mut next = vec![0.0; k_len];
        let mut back_row = vec![0usize; k_len];
        for k in 0..k_len {
            let mut best_j = 0;
            let mut best = delta[0] + crf.transitions.get(0, k) + pair_pen(0, k);
            for j in 1..k_len {
                let s = delta[j] + crf.transitions.get(j, k) + pair_pen(j, k);
                if s > best {
                    best = s;
                    best_j = j;
                }
            }
            next[k] = best + e.get(t, k);
            back_row[k] = best_j;
        }
        delta = next;
        back.push(back_row);
    }

    let mut best_k = 0;
    let mut best_score = delta[0] + crf.stop[0];
    for k in 1..k_len {
        let s = delta[k] + crf.stop[k];
        if s > best_score {
            best_score = s;
            best_k = k;
        }
    }

    let mut path = vec![best_k; t_len];
    for t in (1..t_len).rev() {
        path[t - 1] = back[t - 1][path[t]];
    }
    (path, best_score)
}

/// Negative log-likelihood of the gold path under the chosen head.
///
/// Softmax: per-token cross-entropy summed over the sentence. CRF:
/// `log Z - score(gold)`; requires `crf` parameters.
pub fn loss(e: &Emissions, head: Head, gold: &[usize], crf: Option<&CrfParams>) -> f64 {
    assert_eq!(gold.len(), e.len(), "gold length mismatch");
    assert!(gold.iter().all(|&k| k < e.num_tags()), "gold tag out of range");
    match head {
        Head::Softmax => {
            let mut total = 0.0;
            for (t, &g) in gold.iter().enumerate() {
                total += logsumexp(e.row(t)) - e.get(t, g);
            }
            total
        }
        Head::Crf => {
            let crf = crf.expect("CRF head without CRF parameters");
            crf_log_partition(e, crf) - crf_score(e, crf, gold)
        }
    }
}

/// Softmax loss and its gradient with respect to the emissions.
pub(crate) fn softmax_loss_backward(e: &Emissions, gold: &[usize]) -> (f64, Mat) {
    let (t_len, k_len) = (e.len(), e.num_tags());
    let mut d_e = Mat::zeros(t_len, k_len);
    let mut total = 0.0;
    for (t, &g) in gold.iter().enumerate() {
        let row = e.row(t);
        let lse = logsumexp(row);
        total += lse - row[g];
        for k in 0..k_len {
            let p = math::exp(row[k] - lse);
            d_e.set(t, k, p - if k == g { 1.0 } else { 0.0 });
        }
    }
    (total, d_e)
}

/// CRF negative log-likelihood with gradients for the emissions and the
/// CRF parameters, from one forward-backward sweep.
pub(crate) fn crf_loss_backward(
    e: &Emissions,
    crf: &CrfParams,
    gold: &[usize],
) -> (f64, Mat, CrfParams) {
    let (t_len, k_len) = (e.len(), e.num_tags());
    let alpha = crf_alphas(e, crf);

    // beta[t][j] folds in the stop scores, so alpha + beta at any t gives
    // complete path mass.
    let mut beta = Mat::zeros(t_len, k_len);
    for k in 0..k_len {
        beta.set(t_len - 1, k, crf.stop[k]);
    }
    let mut scratch = vec![0.0; k_len];
    for t in (0..t_len - 1).rev() {
        for j in 0..k_len {
            for k in 0..k_len {
                scratch[k] = crf.transitions.get(j, k) + e.get(t + 1, k) + beta.get(t + 1, k);
            }
            beta.set(t, j, logsumexp(&scratch));
        }
    }

    let final_scores: Vec<f64> =
        (0..k_len).map(|k| alpha.get(t_len - 1, k) + crf.stop[k]).collect();
    let log_z = logsumexp(&final_scores);
    let nll = log_z - crf_score(e, crf, gold);

    let mut d_e = Mat::zeros(t_len, k_len);
    let mut d_crf = CrfParams::zeros(k_len);
    for t in 0..t_len {
        for k in 0..k_len {
            let marginal = math::exp(alpha.get(t, k) + beta.get(t, k) - log_z);
            let gold_hit = if gold[t] == k { 1.0 } else { 0.0 };
            d_e.set(t, k, marginal - gold_hit);
            if t == 0 {
                d_crf.start[k] = marginal - gold_hit;
            }
            if t == t_len - 1 {
                d_crf.stop[k] = marginal - gold_hit;
            }
        }
    }
    for t in 0..t_len - 1 {
        for j in 0..k_len {
            for k in 0..k_len {
                let pair = math::exp(
                    alpha.get(t, j)
                        + crf.transitions.get(j, k)
                        + e.get(t + 1, k)
                        + beta.get(t + 1, k)
                        - log_z,
                );
                let gold_hit = if gold[t] == j && gold[t + 1] == k { 1.0 } else { 0.0 };
                d_crf.transitions.add_at(j, k, pair - gold_hit);
            }
        }
    }
    (nll, d_e, d_crf)
}
