//! Minimal dense linear algebra: a row-major matrix, a register-blocked GEMM
//! used by the LSTM training loop, Cholesky factorization with triangular
//! solves for the GP, and a pivoted Gaussian solver for small least-squares
//! systems.
//!
//! On x86-64 with the `std` feature, GEMM dispatches at runtime to an
//! AVX2+FMA-compiled copy of the same loop nest when the CPU supports it.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::{vec, vec::Vec};

use crate::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer does not match dimensions");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn transposed(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Writes this matrix's transpose into `out` (shape `cols x rows`).
    pub fn transpose_into(&self, out: &mut Mat) {
        assert_eq!(out.rows, self.cols);
        assert_eq!(out.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }
}

const MR: usize = 4;
const NR: usize = 8;

/// The GEMM loop nest: `C += A * B` with A `m x k`, B `k x n`, C `m x n`,
/// all row-major. A 4x8 accumulator tile keeps the hot loop in registers.
#[inline(always)]
#[allow(clippy::needless_range_loop)]
fn gemm_body(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    let mut i = 0;
    while i + MR <= m {
        let mut j = 0;
        while j + NR <= n {
            let mut acc = [[0.0f64; NR]; MR];
            for p in 0..k {
                let bq = &b[p * n + j..p * n + j + NR];
                for r in 0..MR {
                    let av = a[(i + r) * k + p];
                    for q in 0..NR {
                        acc[r][q] += av * bq[q];
                    }
                }
            }
            for r in 0..MR {
                let crow = &mut c[(i + r) * n + j..(i + r) * n + j + NR];
                for q in 0..NR {
                    crow[q] += acc[r][q];
                }
            }
            j += NR;
        }
        if j < n {
            for r in 0..MR {
                let arow = &a[(i + r) * k..(i + r + 1) * k];
                let crow = &mut c[(i + r) * n..(i + r + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let brow = &b[p * n..(p + 1) * n];
                    for jj in j..n {
                        crow[jj] += av * brow[jj];
                    }
                }
            }
        }
        i += MR;
    }
    while i < m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
        i += 1;
    }
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
mod x86 {
    /// Same loop nest compiled with AVX2+FMA enabled so LLVM emits fused
    /// 4-wide f64 arithmetic.
    ///
    /// # Safety
    /// Caller must ensure the CPU supports AVX2 and FMA.
    #[target_feature(enable = "avx2", enable = "fma")]
    pub unsafe fn gemm_avx2(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
        super::gemm_body(c, a, b, m, k, n)
    }

    pub fn avx2_available() -> bool {
        use std::sync::OnceLock;
        static AVAILABLE: OnceLock<bool> = OnceLock::new();
        *AVAILABLE
            .get_or_init(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"))
    }
}

/// `C += A * B` with A `m x k`, B `k x n`, C `m x n`, all row-major slices.
pub fn gemm(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if x86::avx2_available() {
        // Safety: availability checked above.
        unsafe { x86::gemm_avx2(c, a, b, m, k, n) };
        return;
    }
    gemm_body(c, a, b, m, k, n);
}

/// `y += A * x` for a row-major `m x k` matrix.
pub fn gemv_add(y: &mut [f64], a: &[f64], x: &[f64], m: usize, k: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(x.len(), k);
    debug_assert_eq!(y.len(), m);
    for i in 0..m {
        let row = &a[i * k..(i + 1) * k];
        let mut s = 0.0;
        for (av, xv) in row.iter().zip(x) {
            s += av * xv;
        }
        y[i] += s;
    }
}

/// In-place lower Cholesky factor of a symmetric matrix.
///
/// Returns the lower-triangular `L` with `L * L^T = A`, or an error if a
/// pivot is not strictly positive.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    assert_eq!(a.rows, a.cols, "cholesky needs a square matrix");
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for p in 0..j {
                s -= l.get(i, p) * l.get(j, p);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::CholeskyFailure { jitter: 0.0 });
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn solve_lower(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    debug_assert_eq!(b.len(), n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l.get(i, j) * y[j];
        }
        y[i] = s / l.get(i, i);
    }
    y
}

/// Solves `L^T x = y` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &Mat, y: &[f64]) -> Vec<f64> {
    let n = l.rows;
    debug_assert_eq!(y.len(), n);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s -= l.get(j, i) * x[j];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Solves the square system `A x = b` by Gaussian elimination with partial
/// pivoting. Returns `SingularRegression` when a pivot collapses.
pub fn solve_gauss(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    debug_assert_eq!(b.len(), n);
    let mut aug = Mat::zeros(n, n + 1);
    for i in 0..n {
        aug.row_mut(i)[..n].copy_from_slice(a.row(i));
        aug.set(i, n, b[i]);
    }
    // scale reference for the singularity threshold
    let scale = a
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if aug.get(r, col).abs() > aug.get(piv, col).abs() {
                piv = r;
            }
        }
        if aug.get(piv, col).abs() < scale * 1e-12 {
            return Err(Error::SingularRegression);
        }
        if piv != col {
            for j in 0..=n {
                let tmp = aug.get(col, j);
                aug.set(col, j, aug.get(piv, j));
                aug.set(piv, j, tmp);
            }
        }
        let d = aug.get(col, col);
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug.get(r, col) / d;
            if f == 0.0 {
                continue;
            }
            for j in col..=n {
                let v = aug.get(r, j) - f * aug.get(col, j);
                aug.set(r, j, v);
            }
        }
    }
    Ok((0..n).map(|i| aug.get(i, n) / aug.get(i, i)).collect())
}

/// Explicit inverse of a symmetric positive-definite matrix, used by tests as
/// an independent route against the Cholesky solves.
pub fn invert_gauss(a: &Mat) -> Result<Mat> {
    let n = a.rows;
    let mut inv = Mat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_gauss(a, &e)?;
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    Ok(inv)
}
