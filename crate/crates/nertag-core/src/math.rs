//! Dense row-major matrices and the handful of float routines the rest of
//! the crate builds on. Everything is `f64`; float intrinsics come from
//! `libm` so the crate works without `std`.

use alloc::vec::Vec;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: alloc::vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds from row vectors. Panics if rows have unequal lengths.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: n, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec shape mismatch");
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            out.push(dot(self.row(r), x));
        }
        out
    }

    /// `out += self * x`.
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec shape mismatch");
        assert_eq!(out.len(), self.rows, "matvec output mismatch");
        for r in 0..self.rows {
            out[r] += dot(self.row(r), x);
        }
    }

    /// `out += self^T * y`.
    pub fn tmatvec_add(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows, "tmatvec shape mismatch");
        assert_eq!(out.len(), self.cols, "tmatvec output mismatch");
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += yr * w;
            }
        }
    }

    /// Rank-one update `self += y * x^T`.
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        assert_eq!(y.len(), self.rows, "outer shape mismatch");
        assert_eq!(x.len(), self.cols, "outer shape mismatch");
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += yr * xv;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot shape mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += s * v`.
pub fn add_scaled(out: &mut [f64], v: &[f64], s: f64) {
    assert_eq!(out.len(), v.len());
    for (o, x) in out.iter_mut().zip(v) {
        *o += s * x;
    }
}

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// `ln(sum_i exp(v_i))`, shifted by the maximum so large magnitudes cannot
/// overflow. Empty input yields negative infinity.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = v.iter().map(|&x| exp(x - m)).sum();
    m + ln(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_basic() {
        let a = Mat::from_rows(&[alloc::vec![1.0, 2.0], alloc::vec![3.0, 4.0]]);
        assert_eq!(a.matvec(&[1.0, 1.0]), alloc::vec![3.0, 7.0]);
    }

    #[test]
    fn tmatvec_matches_transpose() {
        let a = Mat::from_rows(&[alloc::vec![1.0, 2.0, 3.0], alloc::vec![4.0, 5.0, 6.0]]);
        let mut out = alloc::vec![0.0; 3];
        a.tmatvec_add(&[1.0, -1.0], &mut out);
        assert_eq!(out, alloc::vec![-3.0, -3.0, -3.0]);
    }

    #[test]
    fn logsumexp_shift_invariant() {
        let raw = logsumexp(&[0.1, -0.4, 0.9]);
        let shifted = logsumexp(&[1000.1, 999.6, 1000.9]);
        assert!((shifted - 1000.0 - raw).abs() < 1e-9);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        let v = logsumexp(&[1000.0, 0.0]);
        assert!(v.is_finite());
        assert!((v - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn logsumexp_uniform_is_ln_k() {
        // ln 8 for eight equal scores.
        let v = logsumexp(&[0.0; 8]);
        assert!((v - 2.0794415416798357).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_midpoint() {
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
