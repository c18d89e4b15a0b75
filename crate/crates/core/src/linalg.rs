//! Small dense linear algebra and Gaussian primitives.
//!
//! Everything here is sized for desk-scale problems (a few dozen dimensions at
//! most), so matrices are plain row-major `Vec<f64>` buffers.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entrywise tolerance used when checking symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Pivots at or below this value are reported as a factorization failure.
pub const PIVOT_FLOOR: f64 = 1e-300;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A symmetric `n × n` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, checking shape and symmetry.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
        }
        if data.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix entries must be finite".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (data[i * n + j] - data[j * n + i]).abs() > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(n, data)
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = s;
        }
        Self { n, data }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    /// `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let n = v.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = v[i] * v[j];
            }
        }
        Self { n, data }
    }

    /// Wraps row-major data that is symmetric up to rounding, averaging with
    /// the transpose so the result is exactly symmetric.
    pub fn symmetrized(n: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "symmetrized: buffer length");
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "add: dimension mismatch");
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "sub: dimension mismatch");
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self + s · other`, re-symmetrized.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "add_scaled: dimension mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        Self::symmetrized(self.n, data)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "mul_vec: dimension mismatch");
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Plain (not necessarily symmetric) product, returned row-major.
    pub fn matmul(&self, other: &Self) -> Vec<f64> {
        let n = self.n;
        assert_eq!(n, other.n, "matmul: dimension mismatch");
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Symmetric inverse through the Cholesky factor.
    pub fn inverse(&self) -> Result<Self> {
        Ok(factorize(self)?.inverse())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    n: usize,
    data: Vec<f64>,
}

impl LowerFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|j| self.data[i * n + j] * z[j]).sum())
            .collect()
    }

    /// Solves `L y = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.data[i * n + j] * y[j];
            }
            y[i] = acc / self.data[i * n + i];
        }
        y
    }

    /// Solves `Lᵀ x = y` by back substitution.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= self.data[j * n + i] * x[j];
            }
            x[i] = acc / self.data[i * n + i];
        }
        x
    }

    /// Solves `A x = b` for `A = L Lᵀ`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `bᵀ A⁻¹ b`.
    pub fn mahalanobis_sq(&self, b: &[f64]) -> f64 {
        self.solve_lower(b).iter().map(|v| v * v).sum()
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymMatrix { n, data }
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
        SymMatrix::symmetrized(n, data)
    }

    /// Multiplies every entry by `s > 0` (factor of `s² A`).
    pub fn scaled(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    /// `εI`, used for degenerate-spread tests.
    pub fn scaled_identity(n: usize, eps: f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = eps;
        }
        Self { n, data }
    }
}

/// Cholesky factorization. Fails when a pivot drops to [`PIVOT_FLOOR`] or below.
pub fn factorize(m: &SymMatrix) -> Result<LowerFactor> {
    let n = m.n;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > PIVOT_FLOOR) {
            return Err(Error::NotPositiveDefinite { pivot: d });
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(LowerFactor { n, data: l })
}

/// Extreme eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn eigen_bounds(m: &SymMatrix) -> (f64, f64) {
    let eig = symmetric_eigenvalues(m);
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// All eigenvalues (unordered) of a symmetric matrix.
pub fn symmetric_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let n = m.n;
    if n == 1 {
        return vec![m.data[0]];
    }
    if n == 2 {
        let (a, b, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 1));
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        return vec![mid - rad, mid + rad];
    }
    symmetric_eigen(m).0
}

/// Full eigendecomposition by cyclic Jacobi: eigenvalues and the matching
/// eigenvectors (column `k` of the row-major `vectors` buffer).
pub fn symmetric_eigen(m: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// Raises every eigenvalue below `floor` to `floor`. Returns the matrix and
/// whether anything changed.
pub fn clamp_eigenvalues(m: &SymMatrix, floor: f64) -> (SymMatrix, bool) {
    if eigen_bounds(m).0 >= floor {
        return (m.clone(), false);
    }
    let n = m.n;
    let (vals, vecs) = symmetric_eigen(m);
    let mut data = vec![0.0; n * n];
    for (k, lam) in vals.iter().enumerate() {
        let lam = lam.max(floor);
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] += lam * vecs[i * n + k] * vecs[j * n + k];
            }
        }
    }
    (SymMatrix::symmetrized(n, data), true)
}

/// Gaussian `𝒩(mean, L Lᵀ)` kept in factored form for sampling and densities.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredGaussian {
    mean: Vec<f64>,
    factor: LowerFactor,
    log_norm: f64,
}

impl FactoredGaussian {
    pub fn new(mean: Vec<f64>, cov: &SymMatrix) -> Result<Self> {
        let factor = factorize(cov)?;
        Self::from_factor(mean, factor)
    }

    pub fn from_factor(mean: Vec<f64>, factor: LowerFactor) -> Result<Self> {
        if mean.len() != factor.dim() {
            return Err(Error::DimensionMismatch { expected: factor.dim(), found: mean.len() });
        }
        if factor.diagonal().iter().any(|d| !(*d > 0.0)) {
            return Err(Error::NotPositiveDefinite {
                pivot: factor.diagonal().into_iter().fold(f64::INFINITY, f64::min),
            });
        }
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + factor.log_det());
        Ok(Self { mean, factor, log_norm })
    }

    pub fn standard(n: usize) -> Self {
        Self::from_factor(vec![0.0; n], LowerFactor::scaled_identity(n, 1.0))
            .expect("identity factor is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    pub fn covariance(&self) -> SymMatrix {
        self.factor.reconstruct()
    }

    /// `mean + L z` for a caller-supplied standard normal vector `z`.
    pub fn transform(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.factor.mul_vec(z);
        out.iter_mut().zip(&self.mean).for_each(|(o, m)| *o += m);
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = standard_normal_vec(rng, self.dim());
        self.transform(&z)
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "log_pdf: dimension mismatch");
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.log_norm - 0.5 * self.factor.mahalanobis_sq(&diff)
    }

    /// `∇ log 𝒩(x; mean, Σ) = −Σ⁻¹ (x − mean)`.
    pub fn grad_log_pdf(&self, x: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.factor.solve(&diff).into_iter().map(|v| -v).collect()
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `log Σ exp(v_i)`, stable for large magnitudes; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
