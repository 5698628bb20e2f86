//! Bi-LSTM named-entity tagging over Indonesian-style IOB corpora.
//!
//! The model reads one vector per token, assembled from pretrained word
//! embeddings, a compositional character-to-word encoding (two character
//! LSTMs), and optionally a POS-tag embedding. A bidirectional sentence
//! LSTM and a fully connected tanh layer produce per-tag emission scores,
//! decoded either token-by-token (softmax) or jointly with a linear-chain
//! CRF. Training is per-sentence SGD with exact gradients and global norm
//! clipping, deterministic for a fixed seed.
//!
//! The crate is `no_std` (with `alloc`): parsing and evaluation work on
//! in-memory strings, leaving file handling to callers.
//!
//! - [`corpus`]: tagsets, tab-separated corpus parsing, IOB validation,
//!   span extraction, vocabulary.
//! - [`embeddings`]: word2vec text parsing, embedding tables, C2W
//!   composition, input assembly.
//! - [`lstm`]: the LSTM cell and unidirectional/bidirectional runners.
//! - [`heads`]: emission layer, softmax and CRF scoring, Viterbi.
//! - [`training`]: model assembly, backpropagation, SGD loop.
//! - [`eval`]: entity-level precision/recall/F1 and span diffs.

#![no_std]
#![forbid(unsafe_code)]
// The dynamic programs index several parallel arrays by time step and tag;
// the written-out recurrences stay closest to their definitions that way.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod heads;
mod init;
pub mod lstm;
mod math;
pub mod training;

pub use math::Mat;

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
