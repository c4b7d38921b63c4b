//! Dense row-major matrices, elementwise nonlinearities and the seeded
//! generator used throughout the crate.
//!
//! Everything is `f64`. Vectors are plain `Vec<f64>` / `&[f64]`.

use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};

pub type Vector = Vec<f64>;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MpnError::shape(
                "Matrix::from_vec",
                format!("{} values for {}x{}", rows * cols, rows, cols),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. `cols` is needed so that a
    /// zero-row matrix still carries its width.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(MpnError::shape(format!("row {i}"), cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// `self += a ⊗ b` (outer product), used for weight gradients.
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = self.row_mut(r);
            for (dst, &bc) in row.iter_mut().zip(b) {
                *dst += ar * bc;
            }
        }
    }

    /// `out += selfᵀ · v`.
    pub(crate) fn add_transposed_mul(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (dst, &w) in out.iter_mut().zip(self.row(r)) {
                *dst += w * vr;
            }
        }
    }
}

/// Logistic sigmoid, branching on the sign so `exp` never overflows.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &[f64]) -> Vector {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

pub fn tanh_vec(x: &[f64]) -> Vector {
    x.iter().map(|v| v.tanh()).collect()
}

/// `W·x + b`.
pub fn affine(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vector> {
    if w.cols != x.len() || w.rows != b.len() {
        return Err(MpnError::shape(
            "affine",
            format!("W {}x{}, x {}, b {}", w.rows, w.cols, w.cols, w.rows),
            format!("W {}x{}, x {}, b {}", w.rows, w.cols, x.len(), b.len()),
        ));
    }
    Ok((0..w.rows)
        .map(|r| {
            w.row(r)
                .iter()
                .zip(x)
                .fold(b[r], |acc, (wi, xi)| acc + wi * xi)
        })
        .collect())
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(MpnError::shape("hadamard", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 generator.
///
/// The k-th output (k = 1, 2, ...) is `mix64(seed + k·0x9E3779B97F4A7C15)`
/// with wrapping arithmetic, so a stream is a pure function of the seed and
/// can be reproduced in any language with 64-bit integers.
///
/// * uniform `[0,1)`: top 53 bits of one output times `2^-53`
/// * integer below `n`: high word of the 128-bit product `output · n`
/// * standard normal: Box-Muller on two uniforms `u1, u2`,
///   `sqrt(-2 ln(1-u1)) · cos(2π u2)`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 64-bit outputs drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(
            self.seed
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below requires n > 0");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Derives an independent sub-seed: `mix64(seed + tag·0x9E3779B97F4A7C15)`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed.wrapping_add(tag.wrapping_mul(GOLDEN_GAMMA)))
}

/// `n` draws uniform on `[lo, hi)`.
pub fn rng_uniform(rng: &mut Rng, lo: f64, hi: f64, n: usize) -> Result<Vector> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(MpnError::InvalidRange { lo, hi });
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        // Guard against rounding up to `hi` for tiny ranges.
        let v = rng.uniform(lo, hi);
        out.push(if v < hi { v } else { lo });
    }
    Ok(out)
}
