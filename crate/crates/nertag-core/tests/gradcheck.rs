//! Central-difference verification of every analytic gradient.
//!
//! Each trainable parameter of a small model is nudged by +/- 1e-5 and the
//! resulting loss slope is compared against the backward pass. The loss
//! for the nudged models is computed through the lean inference path while
//! the analytic gradients come from the cached training path, so a pass
//! also certifies that the two forward implementations compute the same
//! function.

mod common;

use nertag_core::training::Variant;
use rand::Rng;

const EPS: f64 = 1e-5;

/// Mixed tolerance: absolute for small gradients, relative for large ones.
fn within_tolerance(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * (analytic.abs() + numeric.abs()).max(1.0)
}

fn check_variant(variant: Variant, seed: u64) {
    let num_tags = 5;
    let mut config = common::tiny_config(variant, num_tags, seed);
    // Trainable word table so the sweep covers the word block too.
    config.finetune_word_emb = true;
    let mut model = common::tiny_model(&config, 4, seed.wrapping_add(1000));

    let mut r = common::rng(seed.wrapping_mul(31).wrapping_add(7));
    let len = r.random_range(2..=4usize);
    let inputs = common::random_inputs(&mut r, len, 4);
    let gold = common::random_gold(&mut r, len, num_tags);

    let (loss, grads) = model.backward(&inputs, &gold);
    let lean_loss = common::loss_at(&model, &inputs, &gold);
    assert!(
        (loss - lean_loss).abs() <= 1e-12 * loss.abs().max(1.0),
        "{variant:?}: cached loss {loss} vs lean loss {lean_loss}"
    );

    let flat = common::flat_grads(&grads);
    assert_eq!(flat.len(), model.num_trainable_params(), "{variant:?}: flat gradient size");

    for (i, &analytic) in flat.iter().enumerate() {
        common::perturb(&mut model, i, EPS);
        let up = common::loss_at(&model, &inputs, &gold);
        common::perturb(&mut model, i, -2.0 * EPS);
        let down = common::loss_at(&model, &inputs, &gold);
        common::perturb(&mut model, i, EPS);

        let numeric = (up - down) / (2.0 * EPS);
        assert!(
            within_tolerance(analytic, numeric),
            "{variant:?} parameter {i}: analytic {analytic} vs numeric {numeric}"
        );
    }
}

#[test]
fn gradients_crf() {
    check_variant(Variant::Crf, 101);
}

#[test]
fn gradients_crf_pos() {
    check_variant(Variant::CrfPos, 102);
}

#[test]
fn gradients_softmax() {
    check_variant(Variant::Softmax, 103);
}

#[test]
fn gradients_softmax_pos() {
    check_variant(Variant::SoftmaxPos, 104);
}

#[test]
fn single_token_sentences_check_too() {
    for (variant, seed) in [(Variant::Crf, 201u64), (Variant::SoftmaxPos, 202)] {
        let num_tags = 4;
        let mut config = common::tiny_config(variant, num_tags, seed);
        config.finetune_word_emb = true;
        let mut model = common::tiny_model(&config, 3, seed);
        let mut r = common::rng(seed ^ 0xabcd);
        let inputs = common::random_inputs(&mut r, 1, 3);
        let gold = common::random_gold(&mut r, 1, num_tags);

        let (_, grads) = model.backward(&inputs, &gold);
        let flat = common::flat_grads(&grads);
        for (i, &analytic) in flat.iter().enumerate() {
            common::perturb(&mut model, i, EPS);
            let up = common::loss_at(&model, &inputs, &gold);
            common::perturb(&mut model, i, -2.0 * EPS);
            let down = common::loss_at(&model, &inputs, &gold);
            common::perturb(&mut model, i, EPS);
            let numeric = (up - down) / (2.0 * EPS);
            assert!(
                within_tolerance(analytic, numeric),
                "{variant:?} parameter {i}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
}

/// Without fine-tuning only the unknown row (row 0) of the word table is
/// inside the gradient; finite differences over the trainable prefix must
/// still match exactly.
#[test]
fn default_word_table_gradient_covers_only_the_unknown_row() {
    let seed = 301;
    let mut default_cfg = common::tiny_config(Variant::Crf, 5, seed);
    default_cfg.finetune_word_emb = false;
    let mut model = common::tiny_model(&default_cfg, 4, seed);

    let mut tuned_cfg = default_cfg.clone();
    tuned_cfg.finetune_word_emb = true;
    let tuned = common::tiny_model(&tuned_cfg, 4, seed);

    let extra_rows = model.word_table.rows() - 1;
    let row_params = extra_rows * model.word_table.dim();
    assert_eq!(tuned.num_trainable_params(), model.num_trainable_params() + row_params);

    let mut r = common::rng(seed);
    // Token 0 forced onto the unknown row so its gradient is exercised.
    let mut inputs = common::random_inputs(&mut r, 3, 4);
    inputs[0].word = 0;
    let gold = common::random_gold(&mut r, 3, 5);

    let (_, grads) = model.backward(&inputs, &gold);
    let gw = grads.word.as_ref().expect("unknown row always trains");
    assert_eq!(gw.rows(), 1);
    assert!(gw.data().iter().any(|&v| v != 0.0));

    let flat = common::flat_grads(&grads);
    assert_eq!(flat.len(), model.num_trainable_params());
    for (i, &analytic) in flat.iter().enumerate() {
        common::perturb(&mut model, i, EPS);
        let up = common::loss_at(&model, &inputs, &gold);
        common::perturb(&mut model, i, -2.0 * EPS);
        let down = common::loss_at(&model, &inputs, &gold);
        common::perturb(&mut model, i, EPS);
        let numeric = (up - down) / (2.0 * EPS);
        assert!(
            within_tolerance(analytic, numeric),
            "parameter {i}: analytic {analytic} vs numeric {numeric}"
        );
    }
}