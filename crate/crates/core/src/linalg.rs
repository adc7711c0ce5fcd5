//! Dense square matrices and the blocked Cholesky factorization used for
//! exact Gaussian sampling.

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative pivot floor: a pivot below `PIVOT_FLOOR * max diagonal` triggers jitter.
pub const PIVOT_FLOOR: f64 = 1e-12;
/// Jitter added to the whole diagonal on retry, relative to the max diagonal.
pub const JITTER: f64 = 1e-12;

const BLOCK: usize = 64;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of factorizations attempted on the current thread.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(Cell::get)
}

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::domain("matrix rows must form a square"));
        }
        Ok(Self { dim, data: rows.concat() })
    }

    /// Fills `m[i][j] = f(i, j)` for `j <= i` and mirrors, so the result is
    /// symmetric bit for bit.
    pub fn symmetric_from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self * selfᵀ`.
    pub fn gram(&self) -> Matrix {
        let n = self.dim;
        Matrix::symmetric_from_fn(n, |i, j| dot(self.row(i), self.row(j)))
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        Matrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    /// FNV-1a over the IEEE bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.data {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Largest eigenvalue of a symmetric PSD-ish matrix by power iteration.
    pub fn spectral_radius_estimate(&self, iterations: usize) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        let mut v = vec![1.0 / (self.dim as f64).sqrt(); self.dim];
        let mut lambda = 0.0;
        for _ in 0..iterations {
            let w = self.mat_vec(&v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
/// The summation order depends only on the slice length.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Lower-triangular `L` with `L Lᵀ` equal to the source matrix (plus jitter, if any).
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Matrix,
    source_fingerprint: u64,
    jitter: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FactorInfo {
    pub dim: usize,
    pub source_fingerprint: u64,
    pub jitter: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.dim
    }

    pub fn source_fingerprint(&self) -> u64 {
        self.source_fingerprint
    }

    /// Diagonal shift applied before the successful attempt (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn info(&self) -> FactorInfo {
        FactorInfo { dim: self.dim(), source_fingerprint: self.source_fingerprint, jitter: self.jitter }
    }

    /// Computes `L z` for a batch of `width` vectors stored index-major
    /// (`z[k * width + b]`), writing `out[i * width + b]`. Each output entry is
    /// accumulated over `k = 0..=i` in order, so results do not depend on `width`.
    pub fn apply_batch(&self, z: &[f64], width: usize, out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(z.len(), n * width);
        debug_assert_eq!(out.len(), n * width);
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &self.lower.row(i)[..=i];
            let acc = &mut out[i * width..(i + 1) * width];
            for (k, &l) in row.iter().enumerate() {
                let zk = &z[k * width..(k + 1) * width];
                for (a, &zv) in acc.iter_mut().zip(zk) {
                    *a += l * zv;
                }
            }
        }
    }

    /// `‖L Lᵀ − A‖_F / ‖A‖_F`.
    pub fn reconstruction_error(&self, source: &Matrix) -> f64 {
        let diff = self.lower.gram().sub(source);
        let denom = source.frobenius();
        if denom == 0.0 {
            diff.frobenius()
        } else {
            diff.frobenius() / denom
        }
    }
}

/// Cholesky factorization with one jittered retry.
///
/// A pivot below `PIVOT_FLOOR * max diagonal` aborts the first attempt; the
/// diagonal is then shifted by `JITTER * max diagonal` and the factorization
/// retried once. A second failure reports the offending pivot index.
pub fn factorize(cov: &Matrix) -> Result<CholeskyFactor> {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
    let n = cov.dim();
    let scale = cov.max_diagonal();
    if n == 0 || !(scale > 0.0) {
        return Err(Error::NotPositiveDefinite { pivot: 0, value: scale });
    }
    let floor = PIVOT_FLOOR * scale;
    let mut work = cov.data.clone();
    match cholesky_in_place(&mut work, n, floor) {
        Ok(()) => Ok(finish(work, n, cov.fingerprint(), 0.0)),
        Err(_) => {
            let jitter = JITTER * scale;
            let mut work = cov.data.clone();
            for i in 0..n {
                work[i * n + i] += jitter;
            }
            cholesky_in_place(&mut work, n, floor)
                .map(|()| finish(work, n, cov.fingerprint(), jitter))
                .map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })
        }
    }
}

/// True when the smallest eigenvalue is at least `-rel_tol * λ_max`, decided by
/// factorizing `A + rel_tol λ_max I` without jitter.
pub fn is_psd_within(cov: &Matrix, rel_tol: f64) -> bool {
    let n = cov.dim();
    if n == 0 {
        return true;
    }
    let lambda_max = cov.spectral_radius_estimate(200).max(cov.max_diagonal());
    if lambda_max == 0.0 {
        return true;
    }
    let shift = rel_tol * lambda_max;
    let mut work = cov.data.clone();
    for i in 0..n {
        work[i * n + i] += shift;
    }
    cholesky_in_place(&mut work, n, 0.0).is_ok()
}

fn finish(mut work: Vec<f64>, n: usize, fingerprint: u64, jitter: f64) -> CholeskyFactor {
    for i in 0..n {
        for j in i + 1..n {
            work[i * n + j] = 0.0;
        }
    }
    CholeskyFactor { lower: Matrix { dim: n, data: work }, source_fingerprint: fingerprint, jitter }
}

/// Right-looking blocked Cholesky on the lower triangle of a row-major matrix.
/// Returns the failing pivot index and value when a pivot is `<= floor`.
fn cholesky_in_place(a: &mut [f64], n: usize, floor: f64) -> std::result::Result<(), (usize, f64)> {
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + BLOCK).min(n);

        // Diagonal block.
        for j in k0..k1 {
            let d = a[j * n + j] - {
                let r = &a[j * n + k0..j * n + j];
                dot(r, r)
            };
            if !(d > floor) {
                return Err((j, d));
            }
            let ljj = d.sqrt();
            a[j * n + j] = ljj;
            for i in j + 1..k1 {
                let s = dot(&a[i * n + k0..i * n + j], &a[j * n + k0..j * n + j]);
                a[i * n + j] = (a[i * n + j] - s) / ljj;
            }
        }

        // Panel below the diagonal block.
        for i in k1..n {
            for j in k0..k1 {
                let s = dot(&a[i * n + k0..i * n + j], &a[j * n + k0..j * n + j]);
                a[i * n + j] = (a[i * n + j] - s) / a[j * n + j];
            }
        }

        // Trailing lower triangle.
        for i in k1..n {
            for j in k1..=i {
                let s = dot(&a[i * n + k0..i * n + k1], &a[j * n + k0..j * n + k1]);
                a[i * n + j] -= s;
            }
        }
        k0 = k1;
    }
    Ok(())
}
