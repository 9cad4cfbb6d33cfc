//! Small dense-math helpers for the desk-scale decoder.
//!
//! Everything is plain `f64` over `Vec` storage; at these dimensions a
//! linear-algebra crate would buy nothing and would cost bit-level control
//! over evaluation order, which the determinism contract depends on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `x · M` for a row vector `x` of length `rows`, yielding length `cols`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, &w) in out.iter_mut().zip(row.iter()) {
                *o += xi * w;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// RMS normalization with elementwise gain.
pub fn rms_norm(x: &[f64], gain: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), gain.len());
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / (mean_sq + RMS_NORM_EPS).sqrt();
    x.iter().zip(gain.iter()).map(|(&v, &g)| v * inv * g).collect()
}

/// Architecture constant, pinned for cross-implementation reproducibility.
pub const RMS_NORM_EPS: f64 = 1e-6;

/// Tanh-approximation GELU (the variant is pinned in the format notes).
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Sinusoidal absolute positional encoding of dimension `dim` at `pos`.
pub fn positional_encoding(pos: usize, dim: usize) -> Vec<f64> {
    let mut pe = vec![0.0; dim];
    let pos = pos as f64;
    let mut i = 0;
    while i < dim {
        let exponent = i as f64 / dim as f64;
        let freq = 1.0 / 10_000f64.powf(exponent);
        pe[i] = (pos * freq).sin();
        if i + 1 < dim {
            pe[i + 1] = (pos * freq).cos();
        }
        i += 2;
    }
    pe
}

/// Elementwise `a + b`.
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_sums_to_one() {
        let w = softmax(&[0.3, -1.2, 4.0, 0.0]);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let w = softmax(&[2.0, 2.0, 2.0, 2.0]);
        for v in w {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn argmax_tie_takes_lowest() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[5.0]), 0);
        assert_eq!(argmax_lowest(&[2.0, 2.0, 2.0]), 0);
    }

    #[test]
    fn vec_mul_identity() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(m.vec_mul(&[3.0, -4.0]), vec![3.0, -4.0]);
    }

    #[test]
    fn vec_mul_rectangular() {
        // [1 2] · [[1 2 3], [4 5 6]] = [9 12 15]
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.vec_mul(&[1.0, 2.0]), vec![9.0, 12.0, 15.0]);
    }

    #[test]
    fn gelu_reference_points() {
        assert_abs_diff_eq!(gelu(0.0), 0.0, epsilon = 1e-15);
        // tanh-GELU at 1.0 is ~0.8412
        assert_abs_diff_eq!(gelu(1.0), 0.841_192, epsilon = 1e-5);
        assert!(gelu(-10.0).abs() < 1e-6);
    }

    #[test]
    fn positional_encoding_first_position_is_cos_pattern() {
        let pe = positional_encoding(0, 8);
        for i in (0..8).step_by(2) {
            assert_abs_diff_eq!(pe[i], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(pe[i + 1], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rms_norm_unit_gain_scale() {
        let x = vec![3.0, 4.0];
        let g = vec![1.0, 1.0];
        let y = rms_norm(&x, &g);
        // rms = sqrt((9+16)/2) = sqrt(12.5)
        let rms = 12.5f64.sqrt();
        assert_abs_diff_eq!(y[0], 3.0 / rms, epsilon = 1e-9);
        assert_abs_diff_eq!(y[1], 4.0 / rms, epsilon = 1e-9);
    }
}
