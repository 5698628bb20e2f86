//! Model assembly and training.
//!
//! A [`Model`] bundles the input tables, the two C2W character LSTMs, the
//! sentence Bi-LSTM, the fully connected scoring layer, and (for the CRF
//! head) the transition parameters. Training is plain per-sentence SGD
//! with global gradient-norm clipping; gradients come from exact
//! backpropagation through the full stack.
//!
//! Everything is deterministic for a fixed seed: initialization and epoch
//! shuffling draw from one ChaCha stream, and no step depends on iteration
//! order of unordered containers.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{IobTag, PosTag, Sentence, Vocab, CHAR_VOCAB_SIZE};
use crate::embeddings::{
    build_word_table, index_sentence, C2wParams, EmbeddingTable, PretrainedEmbeddings, TokenInput,
};
use crate::eval;
use crate::heads::{
    self, crf_loss_backward, emissions_backward, emissions_cached, softmax_decode,
    softmax_loss_backward, viterbi_decode, CrfParams, Emissions, Head, HiddenParams,
    TransitionMask,
};
use crate::lstm::{lstm_backward, lstm_forward_cached, LstmParams, LstmStepCache};
use crate::math::Mat;

/// Layer widths. The defaults give 100-dimensional word vectors, 25-unit
/// character LSTMs per direction (a 50-dimensional C2W vector), 25-dimensional
/// POS vectors, 100 Bi-LSTM units per direction, a 100-unit fully connected
/// layer, and the 11-tag output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub word_dim: usize,
    pub char_dim: usize,
    pub c2w_hidden: usize,
    pub pos_dim: usize,
    pub lstm_hidden: usize,
    pub fc_hidden: usize,
    pub num_tags: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            word_dim: 100,
            char_dim: 25,
            c2w_hidden: 25,
            pos_dim: 25,
            lstm_hidden: 100,
            fc_hidden: 100,
            num_tags: IobTag::COUNT,
        }
    }
}

/// The four architecture variants: head choice crossed with POS input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Crf,
    CrfPos,
    Softmax,
    SoftmaxPos,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Crf, Variant::CrfPos, Variant::Softmax, Variant::SoftmaxPos];

    pub fn head(self) -> Head {
        match self {
            Variant::Crf | Variant::CrfPos => Head::Crf,
            Variant::Softmax | Variant::SoftmaxPos => Head::Softmax,
        }
    }

    pub fn use_pos(self) -> bool {
        matches!(self, Variant::CrfPos | Variant::SoftmaxPos)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Crf => "crf",
            Variant::CrfPos => "crf-pos",
            Variant::Softmax => "softmax",
            Variant::SoftmaxPos => "softmax-pos",
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown variant `{0}`, expected crf, crf-pos, softmax, or softmax-pos")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, UnknownVariant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

/// Everything needed to rebuild a model's shape and rerun its training.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub head: Head,
    pub use_pos: bool,
    pub dims: Dims,
    pub seed: u64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    /// Update pretrained word vectors during training; off keeps them
    /// frozen. The unknown-word row trains either way.
    pub finetune_word_emb: bool,
    /// Constrain CRF decoding to IOB-legal transitions.
    pub decode_mask: bool,
    /// Input-layer dropout probability; 0 disables.
    pub input_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            head: Head::Crf,
            use_pos: true,
            dims: Dims::default(),
            seed: 42,
            learning_rate: 0.01,
            clip_norm: 5.0,
            epochs: 50,
            finetune_word_emb: false,
            decode_mask: false,
            input_dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn for_variant(variant: Variant) -> Self {
        ModelConfig { head: variant.head(), use_pos: variant.use_pos(), ..ModelConfig::default() }
    }

    pub fn variant(&self) -> Variant {
        match (self.head, self.use_pos) {
            (Head::Crf, false) => Variant::Crf,
            (Head::Crf, true) => Variant::CrfPos,
            (Head::Softmax, false) => Variant::Softmax,
            (Head::Softmax, true) => Variant::SoftmaxPos,
        }
    }

    /// Width of the per-token vector entering the sentence Bi-LSTM.
    pub fn input_dim(&self) -> usize {
        self.dims.word_dim
            + 2 * self.dims.c2w_hidden
            + if self.use_pos { self.dims.pos_dim } else { 0 }
    }
}

/// A complete tagger: configuration plus every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub word_table: EmbeddingTable,
    /// Vocabulary index to word-table row; unknown-to-the-table words fall
    /// back to row 0.
    pub word_rows: Vec<u32>,
    pub c2w: C2wParams,
    pub pos_table: Option<EmbeddingTable>,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub hidden: HiddenParams,
    pub crf: Option<CrfParams>,
}

impl Model {
    /// Seeded initialization around a prebuilt word table. Matrices draw
    /// uniform Xavier ranges, biases start at zero, in a fixed order from
    /// one stream seeded by `config.seed`.
    pub fn init(config: &ModelConfig, word_table: EmbeddingTable, word_rows: Vec<u32>) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Model::init_with_rng(config, word_table, word_rows, &mut rng)
    }

    pub fn init_with_rng(
        config: &ModelConfig,
        word_table: EmbeddingTable,
        word_rows: Vec<u32>,
        rng: &mut impl Rng,
    ) -> Model {
        let d = &config.dims;
        assert_eq!(word_table.dim(), d.word_dim, "word table dimension mismatch");
        assert!(!word_rows.is_empty(), "empty word row map");
        assert!(
            word_rows.iter().all(|&r| (r as usize) < word_table.rows()),
            "word row out of range"
        );

        let c2w = C2wParams::init(d.char_dim, d.c2w_hidden, rng);
        let pos_table =
            config.use_pos.then(|| EmbeddingTable::init(PosTag::COUNT, d.pos_dim, true, rng));
        let input_dim = config.input_dim();
        let fwd = LstmParams::init(d.lstm_hidden, input_dim, rng);
        let bwd = LstmParams::init(d.lstm_hidden, input_dim, rng);
        let hidden = HiddenParams::init(d.fc_hidden, 2 * d.lstm_hidden, d.num_tags, rng);
        let crf = matches!(config.head, Head::Crf).then(|| CrfParams::init(d.num_tags, rng));

        Model { config: config.clone(), word_table, word_rows, c2w, pos_table, fwd, bwd, hidden, crf }
    }

    /// Builds the word table from a vocabulary and pretrained vectors,
    /// then initializes the rest.
    pub fn from_pretrained(
        config: &ModelConfig,
        vocab: &Vocab,
        pretrained: &PretrainedEmbeddings,
    ) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (word_table, word_rows) =
            build_word_table(vocab, pretrained, config.finetune_word_emb, &mut rng);
        Model::init_with_rng(config, word_table, word_rows, &mut rng)
    }

    pub fn num_tags(&self) -> usize {
        self.config.dims.num_tags
    }

    /// Emission scores for an indexed sentence.
    pub fn forward_tokens(&self, inputs: &[TokenInput]) -> Emissions {
        assert!(!inputs.is_empty(), "forward on empty sentence");
        let xs: Vec<Vec<f64>> = inputs
            .iter()
            .map(|i| {
                crate::embeddings::assemble_input(
                    i,
                    &self.word_table,
                    &self.word_rows,
                    &self.c2w,
                    self.pos_table.as_ref(),
                )
            })
            .collect();
        let bi = crate::lstm::bilstm_forward(&xs, &self.fwd, &self.bwd);
        heads::emissions(&bi, &self.hidden)
    }

    /// Emission scores for a corpus sentence.
    pub fn forward(&self, vocab: &Vocab, sent: &Sentence) -> Emissions {
        self.forward_tokens(&index_sentence(vocab, sent))
    }

    /// Decoded tag indices for an indexed sentence: Viterbi for the CRF
    /// head (optionally masked), per-token argmax for softmax.
    pub fn predict_tokens(&self, inputs: &[TokenInput]) -> Vec<usize> {
        let e = self.forward_tokens(inputs);
        match self.config.head {
            Head::Softmax => softmax_decode(&e).0,
            Head::Crf => {
                let crf = self.crf.as_ref().expect("CRF head carries CRF parameters");
                let mask = self.config.decode_mask.then(TransitionMask::iob);
                viterbi_decode(&e, crf, mask.as_ref()).0
            }
        }
    }

    /// Decoded IOB tags for a corpus sentence. Requires the standard
    /// 11-tag output layer.
    pub fn predict(&self, vocab: &Vocab, sent: &Sentence) -> Vec<IobTag> {
        assert_eq!(self.num_tags(), IobTag::COUNT, "predict needs the {} NE tags", IobTag::COUNT);
        self.predict_tokens(&index_sentence(vocab, sent))
            .into_iter()
            .map(|k| IobTag::from_index(k).unwrap())
            .collect()
    }

    /// Loss and exact parameter gradients for one sentence.
    pub fn backward(&self, inputs: &[TokenInput], gold: &[usize]) -> (f64, Gradients) {
        self.backward_impl(inputs, gold, None)
    }

    pub fn num_trainable_params(&self) -> usize {
        let mut n = 0;
        self.visit_trainable(&mut |s: &[f64]| n += s.len());
        n
    }

    /// Visits every trainable parameter block in a fixed order (the same
    /// order [`Gradients::visit`] uses). Only the trainable prefix of the
    /// word table appears; a fully frozen one is skipped.
    pub fn visit_trainable<'a>(&'a self, f: &mut impl FnMut(&'a [f64])) {
        let wn = self.word_table.trainable_len();
        if wn > 0 {
            f(&self.word_table.weights.data()[..wn]);
        }
        f(self.c2w.char_table.weights.data());
        self.c2w.fwd.visit(f);
        self.c2w.bwd.visit(f);
        if let Some(t) = &self.pos_table {
            f(t.weights.data());
        }
        self.fwd.visit(f);
        self.bwd.visit(f);
        self.hidden.visit(f);
        if let Some(c) = &self.crf {
            c.visit(f);
        }
    }

    pub fn visit_trainable_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        let wn = self.word_table.trainable_len();
        if wn > 0 {
            f(&mut self.word_table.weights.data_mut()[..wn]);
        }
        f(self.c2w.char_table.weights.data_mut());
        self.c2w.fwd.visit_mut(f);
        self.c2w.bwd.visit_mut(f);
        if let Some(t) = &mut self.pos_table {
            f(t.weights.data_mut());
        }
        self.fwd.visit_mut(f);
        self.bwd.visit_mut(f);
        self.hidden.visit_mut(f);
        if let Some(c) = &mut self.crf {
            c.visit_mut(f);
        }
    }

    fn forward_cached(&self, inputs: &[TokenInput], drop: Option<&[Vec<f64>]>) -> (Emissions, SentenceCache) {
        assert!(!inputs.is_empty(), "forward on empty sentence");
        let n = inputs.len();
        let mut xs = Vec::with_capacity(n);
        let mut c2w_caches = Vec::with_capacity(n);
        for (t, input) in inputs.iter().enumerate() {
            let row = self.word_rows[input.word as usize] as usize;
            let mut x = self.word_table.row(row).to_vec();

            assert!(!input.chars.is_empty(), "token with no characters");
            let char_xs: Vec<Vec<f64>> =
                input.chars.iter().map(|&c| self.c2w.char_table.row(c).to_vec()).collect();
            let fwd = lstm_forward_cached(&char_xs, &self.c2w.fwd);
            let rev: Vec<Vec<f64>> = char_xs.iter().rev().cloned().collect();
            let bwd = lstm_forward_cached(&rev, &self.c2w.bwd);
            x.extend_from_slice(&fwd.last().unwrap().h);
            x.extend_from_slice(&bwd.last().unwrap().h);
            c2w_caches.push(TokenC2wCache { char_xs, fwd, bwd });

            if let Some(t_pos) = &self.pos_table {
                x.extend_from_slice(t_pos.row(input.pos));
            }
            if let Some(masks) = drop {
                for (xv, m) in x.iter_mut().zip(&masks[t]) {
                    *xv *= m;
                }
            }
            xs.push(x);
        }

        let main_fwd = lstm_forward_cached(&xs, &self.fwd);
        let rev_xs: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let main_bwd = lstm_forward_cached(&rev_xs, &self.bwd);
        let bilstm: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                let mut r = main_fwd[t].h.clone();
                r.extend_from_slice(&main_bwd[n - 1 - t].h);
                r
            })
            .collect();
        let (e, fc) = emissions_cached(&bilstm, &self.hidden);
        let drop_mask = drop.map(|m| m.to_vec());
        (e, SentenceCache { xs, drop_mask, c2w: c2w_caches, main_fwd, main_bwd, bilstm, fc })
    }

    fn backward_impl(
        &self,
        inputs: &[TokenInput],
        gold: &[usize],
        drop: Option<&[Vec<f64>]>,
    ) -> (f64, Gradients) {
        assert_eq!(gold.len(), inputs.len(), "gold length mismatch");
        let n = inputs.len();
        let (e, cache) = self.forward_cached(inputs, drop);

        let mut grads = Gradients::zeros_like(self);
        let (loss, d_e) = match self.config.head {
            Head::Softmax => softmax_loss_backward(&e, gold),
            Head::Crf => {
                let crf = self.crf.as_ref().expect("CRF head carries CRF parameters");
                let (loss, d_e, d_crf) = crf_loss_backward(&e, crf, gold);
                grads.crf = Some(d_crf);
                (loss, d_e)
            }
        };

        let d_bilstm = emissions_backward(&d_e, &cache.bilstm, &cache.fc, &self.hidden, &mut grads.hidden);

        let h = self.config.dims.lstm_hidden;
        let dh_fwd: Vec<Vec<f64>> = d_bilstm.iter().map(|r| r[..h].to_vec()).collect();
        let dh_bwd_rev: Vec<Vec<f64>> = (0..n).map(|i| d_bilstm[n - 1 - i][h..].to_vec()).collect();

        let input_dim = self.config.input_dim();
        let mut dx = vec![vec![0.0; input_dim]; n];
        lstm_backward(&cache.xs, &cache.main_fwd, &self.fwd, &dh_fwd, &mut grads.fwd, &mut dx);

        let rev_xs: Vec<Vec<f64>> = cache.xs.iter().rev().cloned().collect();
        let mut dx_rev = vec![vec![0.0; input_dim]; n];
        lstm_backward(&rev_xs, &cache.main_bwd, &self.bwd, &dh_bwd_rev, &mut grads.bwd, &mut dx_rev);
        for t in 0..n {
            for (a, b) in dx[t].iter_mut().zip(&dx_rev[n - 1 - t]) {
                *a += b;
            }
        }

        if let Some(masks) = &cache.drop_mask {
            for t in 0..n {
                for (d, m) in dx[t].iter_mut().zip(&masks[t]) {
                    *d *= m;
                }
            }
        }

        let wd = self.config.dims.word_dim;
        let ch = self.config.dims.c2w_hidden;
        let char_dim = self.config.dims.char_dim;
        for t in 0..n {
            let input = &inputs[t];
            if let Some(gw) = &mut grads.word {
                let row = self.word_rows[input.word as usize] as usize;
                // Rows past the trainable prefix are frozen: no gradient.
                if row < gw.rows() {
                    for (g, d) in gw.row_mut(row).iter_mut().zip(&dx[t][..wd]) {
                        *g += d;
                    }
                }
            }

            let token_cache = &cache.c2w[t];
            let l = token_cache.char_xs.len();
            let d_c2w = &dx[t][wd..wd + 2 * ch];
            let mut dh_cf = vec![vec![0.0; ch]; l];
            dh_cf[l - 1].copy_from_slice(&d_c2w[..ch]);
            let mut dx_cf = vec![vec![0.0; char_dim]; l];
            lstm_backward(&token_cache.char_xs, &token_cache.fwd, &self.c2w.fwd, &dh_cf, &mut grads.c2w_fwd, &mut dx_cf);

            let rev_chars: Vec<Vec<f64>> = token_cache.char_xs.iter().rev().cloned().collect();
            let mut dh_cb = vec![vec![0.0; ch]; l];
            dh_cb[l - 1].copy_from_slice(&d_c2w[ch..]);
            let mut dx_cb = vec![vec![0.0; char_dim]; l];
            lstm_backward(&rev_chars, &token_cache.bwd, &self.c2w.bwd, &dh_cb, &mut grads.c2w_bwd, &mut dx_cb);

            for (p, &ci) in input.chars.iter().enumerate() {
                let row = grads.char_table.row_mut(ci);
                for (g, d) in row.iter_mut().zip(&dx_cf[p]) {
                    *g += d;
                }
                for (g, d) in row.iter_mut().zip(&dx_cb[l - 1 - p]) {
                    *g += d;
                }
            }

            if let Some(gp) = &mut grads.pos {
                for (g, d) in gp.row_mut(input.pos).iter_mut().zip(&dx[t][wd + 2 * ch..]) {
                    *g += d;
                }
            }
        }

        (loss, grads)
    }
}

struct TokenC2wCache {
    char_xs: Vec<Vec<f64>>,
    fwd: Vec<LstmStepCache>,
    bwd: Vec<LstmStepCache>,
}

struct SentenceCache {
    xs: Vec<Vec<f64>>,
    drop_mask: Option<Vec<Vec<f64>>>,
    c2w: Vec<TokenC2wCache>,
    main_fwd: Vec<LstmStepCache>,
    main_bwd: Vec<LstmStepCache>,
    bilstm: Vec<Vec<f64>>,
    fc: Vec<Vec<f64>>,
}

/// Per-sentence parameter gradients, shaped exactly like the trainable
/// blocks of the model they came from.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Gradient for the trainable prefix of the word table: just the
    /// unknown-word row by default, every row under fine-tuning, absent
    /// for a fully frozen table.
    pub word: Option<Mat>,
    pub char_table: Mat,
    pub c2w_fwd: LstmParams,
    pub c2w_bwd: LstmParams,
    pub pos: Option<Mat>,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub hidden: HiddenParams,
    pub crf: Option<CrfParams>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Gradients {
        let d = &model.config.dims;
        let input_dim = model.config.input_dim();
        Gradients {
            // Sized to the trainable prefix: one row for the unknown-word
            // entry alone, the full table under fine-tuning.
            word: (model.word_table.trainable_rows > 0)
                .then(|| Mat::zeros(model.word_table.trainable_rows, model.word_table.dim())),
            char_table: Mat::zeros(CHAR_VOCAB_SIZE, d.char_dim),
            c2w_fwd: LstmParams::zeros(d.c2w_hidden, d.char_dim),
            c2w_bwd: LstmParams::zeros(d.c2w_hidden, d.char_dim),
            pos: model.pos_table.as_ref().map(|t| Mat::zeros(t.rows(), t.dim())),
            fwd: LstmParams::zeros(d.lstm_hidden, input_dim),
            bwd: LstmParams::zeros(d.lstm_hidden, input_dim),
            hidden: HiddenParams::zeros(d.fc_hidden, 2 * d.lstm_hidden, d.num_tags),
            crf: model.crf.as_ref().map(|c| CrfParams::zeros(c.num_tags())),
        }
    }

    /// Visits every gradient block in [`Model::visit_trainable`] order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a [f64])) {
        if let Some(w) = &self.word {
            f(w.data());
        }
        f(self.char_table.data());
        self.c2w_fwd.visit(f);
        self.c2w_bwd.visit(f);
        if let Some(p) = &self.pos {
            f(p.data());
        }
        self.fwd.visit(f);
        self.bwd.visit(f);
        self.hidden.visit(f);
        if let Some(c) = &self.crf {
            c.visit(f);
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut [f64])) {
        if let Some(w) = &mut self.word {
            f(w.data_mut());
        }
        f(self.char_table.data_mut());
        self.c2w_fwd.visit_mut(f);
        self.c2w_bwd.visit_mut(f);
        if let Some(p) = &mut self.pos {
            f(p.data_mut());
        }
        self.fwd.visit_mut(f);
        self.bwd.visit_mut(f);
        self.hidden.visit_mut(f);
        if let Some(c) = &mut self.crf {
            c.visit_mut(f);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        self.visit(&mut |s: &[f64]| {
            for v in s {
                sum += v * v;
            }
        });
        crate::math::sqrt(sum)
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |s: &[f64]| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }

    /// Scales all blocks so the global L2 norm does not exceed `max_norm`.
    /// Returns the factor applied (1 when already within bounds), so the
    /// update direction is unchanged.
    pub fn clip_to_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.l2_norm();
        if norm <= max_norm || norm == 0.0 {
            return 1.0;
        }
        let factor = max_norm / norm;
        self.visit_mut(&mut |s: &mut [f64]| {
            for v in s {
                *v *= factor;
            }
        });
        factor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SgdError {
    #[error("learning rate must be positive and finite")]
    BadLearningRate,
    #[error("clip norm must be positive and finite")]
    BadClipNorm,
    #[error("non-finite gradient")]
    NonFiniteGradient,
}

/// One SGD update: clips the global gradient norm to `clip_norm`, then
/// applies `theta -= learning_rate * g` to every trainable block.
pub fn sgd_step(
    model: &mut Model,
    grads: &Gradients,
    learning_rate: f64,
    clip_norm: f64,
) -> Result<(), SgdError> {
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(SgdError::BadLearningRate);
    }
    if !(clip_norm > 0.0 && clip_norm.is_finite()) {
        return Err(SgdError::BadClipNorm);
    }
    if !grads.is_finite() {
        return Err(SgdError::NonFiniteGradient);
    }
    let norm = grads.l2_norm();
    let factor = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    let scale = -(learning_rate * factor);

    let mut slices: Vec<&[f64]> = Vec::new();
    grads.visit(&mut |s: &[f64]| slices.push(s));
    let mut i = 0;
    model.visit_trainable_mut(&mut |p: &mut [f64]| {
        let g = slices[i];
        assert_eq!(p.len(), g.len(), "gradient/parameter shape mismatch");
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv += scale * gv;
        }
        i += 1;
    });
    assert_eq!(i, slices.len(), "gradient/parameter block count mismatch");
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("model has {model} output tags but the corpus scheme has {expected}")]
    TagCount { model: usize, expected: usize },
    #[error("pretrained vectors are {found}-dimensional, config wants {expected}")]
    WordDim { found: usize, expected: usize },
    #[error("input dropout must lie in [0, 1)")]
    BadDropout,
    #[error("{source} (epoch {epoch}, sentence {sentence})")]
    Sgd { epoch: usize, sentence: usize, source: SgdError },
    #[error("loss diverged to {loss} at epoch {epoch}, sentence {sentence}")]
    Diverged { epoch: usize, sentence: usize, loss: f64 },
}

/// Loss, training-set token accuracy, and held-out F1 after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub dev_f1: Option<f64>,
}

/// A trained model plus its per-epoch history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model with the best held-out F1 when a dev set was given,
    /// otherwise the final-epoch model.
    pub model: Model,
    pub history: Vec<EpochStats>,
    /// Token accuracy of the final-epoch parameters on the training set.
    pub train_accuracy: f64,
}

fn index_corpus(vocab: &Vocab, sents: &[Sentence]) -> Vec<(Vec<TokenInput>, Vec<usize>)> {
    sents
        .iter()
        .map(|s| {
            let inputs = index_sentence(vocab, s);
            let gold = s.ne_tags().iter().map(|t| t.index()).collect();
            (inputs, gold)
        })
        .collect()
}

fn token_accuracy(model: &Model, indexed: &[(Vec<TokenInput>, Vec<usize>)]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (inputs, gold) in indexed {
        let pred = model.predict_tokens(inputs);
        correct += pred.iter().zip(gold).filter(|(p, g)| p == g).count();
        total += gold.len();
    }
    correct as f64 / total as f64
}

fn dev_overall_f1(model: &Model, indexed: &[(Vec<TokenInput>, Vec<usize>)]) -> f64 {
    let gold: Vec<Vec<IobTag>> = indexed
        .iter()
        .map(|(_, g)| g.iter().map(|&k| IobTag::from_index(k).unwrap()).collect())
        .collect();
    let pred: Vec<Vec<IobTag>> = indexed
        .iter()
        .map(|(inputs, _)| {
            model
                .predict_tokens(inputs)
                .into_iter()
                .map(|k| IobTag::from_index(k).unwrap())
                .collect()
        })
        .collect();
    eval::score(&gold, &pred).expect("aligned validated sentences").overall.f1()
}

/// Trains a model from scratch.
///
/// Runs exactly `config.epochs` passes of shuffled per-sentence SGD. When
/// `dev` is given, each epoch is scored on it and the returned model is
/// the one with the best overall entity F1; otherwise the final model.
/// Identical inputs and config produce bit-identical results.
pub fn train(
    train_sents: &[Sentence],
    dev: Option<&[Sentence]>,
    vocab: &Vocab,
    pretrained: &PretrainedEmbeddings,
    config: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    if train_sents.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if config.dims.num_tags != IobTag::COUNT {
        return Err(TrainError::TagCount { model: config.dims.num_tags, expected: IobTag::COUNT });
    }
    if pretrained.dim() != config.dims.word_dim {
        return Err(TrainError::WordDim { found: pretrained.dim(), expected: config.dims.word_dim });
    }
    if !(0.0..1.0).contains(&config.input_dropout) {
        return Err(TrainError::BadDropout);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (word_table, word_rows) =
        build_word_table(vocab, pretrained, config.finetune_word_emb, &mut rng);
    let mut model = Model::init_with_rng(config, word_table, word_rows, &mut rng);

    let train_indexed = index_corpus(vocab, train_sents);
    let dev_indexed = dev.map(|d| index_corpus(vocab, d));

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Model)> = None;
    let mut order: Vec<usize> = (0..train_indexed.len()).collect();
    let input_dim = config.input_dim();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for (step, &idx) in order.iter().enumerate() {
            let (inputs, gold) = &train_indexed[idx];
            let masks = if config.input_dropout > 0.0 {
                let p = config.input_dropout;
                let keep = 1.0 / (1.0 - p);
                Some(
                    (0..inputs.len())
                        .map(|_| {
                            (0..input_dim)
                                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                                .collect::<Vec<f64>>()
                        })
                        .collect::<Vec<_>>(),
                )
            } else {
                None
            };
            let (loss, grads) = model.backward_impl(inputs, gold, masks.as_deref());
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, sentence: step + 1, loss });
            }
            sgd_step(&mut model, &grads, config.learning_rate, config.clip_norm)
                .map_err(|source| TrainError::Sgd { epoch, sentence: step + 1, source })?;
            total_loss += loss;
        }

        let mean_loss = total_loss / train_indexed.len() as f64;
        let train_acc = token_accuracy(&model, &train_indexed);
        let dev_f1 = dev_indexed.as_ref().map(|d| dev_overall_f1(&model, d));
        if let Some(f1) = dev_f1 {
            let improved = best.as_ref().is_none_or(|(b, _)| f1 > *b);
            if improved {
                best = Some((f1, model.clone()));
            }
        }
        history.push(EpochStats { mean_loss, train_accuracy: train_acc, dev_f1 });
    }

    let train_accuracy =
        history.last().map_or_else(|| token_accuracy(&model, &train_indexed), |s| s.train_accuracy);
    let model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok(TrainOutcome { model, history, train_accuracy })
}
