//! Builders shared by the integration tests: models over reduced
//! dimensions and flat parameter views for finite-difference probes.

#![allow(dead_code)]

use nertag_core::corpus::{CHAR_VOCAB_SIZE, PosTag};
use nertag_core::embeddings::{EmbeddingTable, TokenInput};
use nertag_core::heads;
use nertag_core::training::{Dims, Model, ModelConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dimensions small enough that a full central-difference sweep over every
/// parameter stays cheap.
pub fn tiny_dims(num_tags: usize) -> Dims {
    Dims {
        word_dim: 4,
        char_dim: 3,
        c2w_hidden: 2,
        pos_dim: 3,
        lstm_hidden: 3,
        fc_hidden: 4,
        num_tags,
    }
}

pub fn tiny_config(variant: Variant, num_tags: usize, seed: u64) -> ModelConfig {
    let mut config = ModelConfig::for_variant(variant);
    config.dims = tiny_dims(num_tags);
    config.seed = seed;
    config
}

/// A fully initialized model whose word table has `vocab_rows` rows mapped
/// one-to-one from vocabulary indices. Mirrors the real table-building
/// rule: the unknown row (row 0) always trains, the rest only under
/// fine-tuning.
pub fn tiny_model(config: &ModelConfig, vocab_rows: usize, seed: u64) -> Model {
    let mut r = rng(seed);
    let mut table = EmbeddingTable::init(vocab_rows, config.dims.word_dim, true, &mut r);
    table.trainable_rows = if config.finetune_word_emb { vocab_rows } else { 1 };
    let word_rows = (0..vocab_rows as u32).collect();
    Model::init_with_rng(config, table, word_rows, &mut r)
}

/// Random token inputs for a model with `vocab_rows` word rows; every word
/// gets one to four characters.
pub fn random_inputs(r: &mut ChaCha8Rng, len: usize, vocab_rows: usize) -> Vec<TokenInput> {
    (0..len)
        .map(|_| {
            let n_chars = r.random_range(1..=4usize);
            TokenInput {
                word: r.random_range(0..vocab_rows as u32),
                chars: (0..n_chars).map(|_| r.random_range(0..CHAR_VOCAB_SIZE)).collect(),
                pos: r.random_range(0..PosTag::COUNT),
            }
        })
        .collect()
}

pub fn random_gold(r: &mut ChaCha8Rng, len: usize, num_tags: usize) -> Vec<usize> {
    (0..len).map(|_| r.random_range(0..num_tags)).collect()
}

/// Loss through the lean forward path. The analytic gradients come from
/// the cached path, so finite differences taken against this value also
/// certify that the two forwards agree.
pub fn loss_at(model: &Model, inputs: &[TokenInput], gold: &[usize]) -> f64 {
    let e = model.forward_tokens(inputs);
    heads::loss(&e, model.config.head, gold, model.crf.as_ref())
}

pub fn flat_grads(grads: &nertag_core::training::Gradients) -> Vec<f64> {
    let mut flat = Vec::new();
    grads.visit(&mut |s| flat.extend_from_slice(s));
    flat
}

/// Adds `delta` to the trainable parameter at flat index `i`, counting
/// across blocks in visitor order.
pub fn perturb(model: &mut Model, i: usize, delta: f64) {
    let mut offset = 0usize;
    let mut hit = false;
    model.visit_trainable_mut(&mut |block| {
        if !hit && i < offset + block.len() {
            block[i - offset] += delta;
            hit = true;
        }
        offset += block.len();
    });
    assert!(hit, "flat index {i} out of range ({offset} trainable parameters)");
}
