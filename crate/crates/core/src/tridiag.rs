//! Symmetric tridiagonal SPD matrices and their bidiagonal Cholesky factors.
//!
//! Every operation here is O(n) in time and memory. Matrices are always
//! precision-side objects (the prior precision `L`, the metric tensor `G(x)`);
//! inverses are never formed, only applied through [`CholBidiag::solve`].

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

/// Pivots at or below this value are treated as a loss of positive-definiteness.
pub const PIVOT_TOLERANCE: f64 = 1e-300;

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidArgument {
                field: "diag",
                reason: "dimension must be at least 1".into(),
            });
        }
        check_len(diag.len() - 1, off.len())?;
        Ok(Self { diag, off })
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        Self {
            diag: vec![1.0; n],
            off: vec![0.0; n - 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub(crate) fn diag_mut(&mut self) -> &mut [f64] {
        &mut self.diag
    }

    /// Lower-bidiagonal Cholesky factor `Λ` with `Λ·Λᵀ = self`.
    pub fn cholesky(&self) -> Result<CholBidiag> {
        let n = self.dim();
        let mut d = Vec::with_capacity(n);
        let mut e = Vec::with_capacity(n - 1);

        let mut pivot = self.diag[0];
        for i in 0..n {
            if !(pivot > PIVOT_TOLERANCE) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite { index: i, pivot });
            }
            let di = pivot.sqrt();
            d.push(di);
            if i + 1 < n {
                let ei = self.off[i] / di;
                e.push(ei);
                pivot = self.diag[i + 1] - ei * ei;
            }
        }
        Ok(CholBidiag { d, e })
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_len(n, v.len())?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * v[i + 1];
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `vᵀ·M·w`.
    pub fn quad_form(&self, v: &[f64], w: &[f64]) -> Result<f64> {
        let n = self.dim();
        check_len(n, v.len())?;
        check_len(n, w.len())?;
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.diag[i] * v[i] * w[i];
        }
        for i in 0..n - 1 {
            acc += self.off[i] * (v[i] * w[i + 1] + v[i + 1] * w[i]);
        }
        Ok(acc)
    }

    /// `vᵀ·(self − other)·v`, accumulated entry by entry so that the common
    /// part of the two matrices cancels exactly instead of in floating point.
    pub fn quad_form_diff(&self, other: &SymTridiag, v: &[f64]) -> Result<f64> {
        let n = self.dim();
        check_len(n, other.dim())?;
        check_len(n, v.len())?;
        let mut acc = 0.0;
        for ((a, b), vi) in self.diag.iter().zip(&other.diag).zip(v) {
            let dd = a - b;
            if dd != 0.0 {
                acc += dd * vi * vi;
            }
        }
        for i in 0..n - 1 {
            let de = self.off[i] - other.off[i];
            if de != 0.0 {
                acc += 2.0 * de * v[i] * v[i + 1];
            }
        }
        Ok(acc)
    }

    /// Expands to a dense row-major matrix. Intended for small `n` (tests, oracles).
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i + 1 < n {
                m[i][i + 1] = self.off[i];
                m[i + 1][i] = self.off[i];
            }
        }
        m
    }
}

/// Lower-bidiagonal factor `Λ` of a symmetric tridiagonal SPD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CholBidiag {
    d: Vec<f64>,
    e: Vec<f64>,
}

impl CholBidiag {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    /// Solves `Λ·Λᵀ·z = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), b.len())?;
        let mut z = b.to_vec();
        self.forward_in_place(&mut z);
        self.backward_in_place(&mut z);
        Ok(z)
    }

    // Λ·y = b
    fn forward_in_place(&self, y: &mut [f64]) {
        let n = self.dim();
        y[0] /= self.d[0];
        for i in 1..n {
            y[i] = (y[i] - self.e[i - 1] * y[i - 1]) / self.d[i];
        }
    }

    // Λᵀ·y = b
    fn backward_in_place(&self, y: &mut [f64]) {
        let n = self.dim();
        y[n - 1] /= self.d[n - 1];
        for i in (0..n - 1).rev() {
            y[i] = (y[i] - self.e[i] * y[i + 1]) / self.d[i];
        }
    }

    /// Maps standard normal variates `z` to `v` with `Λᵀ·v = z`, so that
    /// `Cov(v) = (Λ·Λᵀ)⁻¹`.
    pub fn sample_from_normals(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), z.len())?;
        let mut v = z.to_vec();
        self.backward_in_place(&mut v);
        Ok(v)
    }

    /// Draws from `𝒩(0, (Λ·Λᵀ)⁻¹)`.
    ///
    /// Standard normals come from `rand_distr::StandardNormal` (ziggurat
    /// transform of the uniform stream), so draws are reproducible for a
    /// given seeded generator.
    pub fn sample_zero_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = standard_normals(rng, self.dim());
        self.sample_from_normals(&z)
            .expect("noise length matches factor dimension")
    }

    /// `log|Λ·Λᵀ| = 2·Σ log dᵢ`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.d.iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Recovers `Λ·Λᵀ` as a [`SymTridiag`].
    pub fn reconstruct(&self) -> SymTridiag {
        let n = self.dim();
        let mut diag = Vec::with_capacity(n);
        let mut off = Vec::with_capacity(n - 1);
        for i in 0..n {
            let mut v = self.d[i] * self.d[i];
            if i > 0 {
                v += self.e[i - 1] * self.e[i - 1];
            }
            diag.push(v);
            if i + 1 < n {
                off.push(self.e[i] * self.d[i]);
            }
        }
        SymTridiag { diag, off }
    }
}

pub(crate) fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
