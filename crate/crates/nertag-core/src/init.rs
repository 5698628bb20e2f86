//! Seeded parameter initialization.

use rand::Rng;

use crate::math::{self, Mat};

/// Fills a matrix uniformly in `+-sqrt(6 / (rows + cols))`.
pub(crate) fn xavier_fill(m: &mut Mat, rng: &mut impl Rng) {
    let limit = math::sqrt(6.0 / (m.rows() + m.cols()) as f64);
    for v in m.data_mut() {
        *v = rng.random_range(-limit..limit);
    }
}
