//! Small dense linear algebra: symmetric Cholesky factorization and
//! Householder QR least squares, generic over the scalar type.
//!
//! The matrices here are at most a few hundred rows (covariance matrices on
//! the evaluation grid, spline design matrices), so simple textbook
//! factorizations are plenty.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![T::zero(); nrows * ncols],
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Matrix::zeros(nrows, ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    /// `self * v` for a vector of length `ncols`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.ncols);
        (0..self.nrows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn max_diag(&self) -> T {
        (0..self.nrows.min(self.ncols))
            .map(|i| self[(i, i)])
            .fold(T::zero(), T::max)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.ncols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.ncols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    l: Matrix<T>,
}

impl<T: Scalar> CholeskyFactor<T> {
    /// `L * v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        let n = self.l.nrows();
        assert_eq!(v.len(), n);
        (0..n)
            .map(|i| {
                (0..=i).fold(T::zero(), |acc, j| acc + self.l[(i, j)] * v[j])
            })
            .collect()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.l
    }
}

/// Cholesky factorization for symmetric positive *semi*definite matrices.
///
/// A pivot that is zero up to `tol = n·ε·max_diag` is treated as an exactly
/// degenerate direction: its row of `L` is zeroed, which is the right answer
/// for rank-deficient covariance matrices (the zero matrix factors to zero,
/// so degenerate Gaussians collapse onto their mean). A pivot below `-tol`
/// means the matrix is indefinite and the factorization fails.
fn cholesky_psd<T: Scalar>(a: &Matrix<T>) -> Result<CholeskyFactor<T>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
    let tol = T::cast(n as f64) * T::epsilon() * a.max_diag().max(T::one());
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d >= -tol {
            // semidefinite direction: leave the column at zero
            l[(j, j)] = T::zero();
        } else {
            return Err(Error::CholeskyFailure);
        }
    }
    Ok(CholeskyFactor { l })
}

/// Cholesky with escalating diagonal jitter.
///
/// Squared-exponential covariance matrices on fine grids are numerically
/// near-singular. After a plain attempt, `η·scale` is added to the diagonal
/// with `η` escalating from 1e-10 to 1e-6 over five attempts, `scale` being
/// the largest diagonal entry. Failure after the last attempt is reported as
/// [`Error::CholeskyFailure`].
pub fn cholesky_with_jitter<T: Scalar>(a: &Matrix<T>) -> Result<CholeskyFactor<T>> {
    if let Ok(f) = cholesky_psd(a) {
        return Ok(f);
    }
    let scale = a.max_diag().max(T::epsilon());
    for exp in 0..5 {
        let eta = T::cast(1e-10) * T::cast(10f64.powi(exp));
        let mut jittered = a.clone();
        for i in 0..a.nrows() {
            jittered[(i, i)] = jittered[(i, i)] + eta * scale;
        }
        if let Ok(f) = cholesky_psd(&jittered) {
            if exp > 0 {
                log::debug!("cholesky required jitter eta={eta}");
            }
            return Ok(f);
        }
    }
    Err(Error::CholeskyFailure)
}

/// Householder QR factorization of a tall matrix, kept around so that many
/// right-hand sides can be solved against the same design matrix.
#[derive(Debug, Clone)]
pub struct QrFactor<T> {
    /// Upper triangle holds R; the strict lower triangle holds the
    /// essential parts of the Householder vectors (v[j] = 1 implied).
    qr: Matrix<T>,
    /// Scaling factor of each reflector.
    beta: Vec<T>,
}

impl<T: Scalar> QrFactor<T> {
    pub fn new(a: Matrix<T>) -> Result<Self> {
        let (m, n) = (a.nrows(), a.ncols());
        if m < n {
            return Err(Error::invalid(format!(
                "least squares needs at least as many rows ({m}) as columns ({n})"
            )));
        }
        let mut qr = a;
        let mut beta = vec![T::zero(); n];
        for j in 0..n {
            // Householder vector for column j, rows j..m
            let mut norm2 = T::zero();
            for i in j..m {
                norm2 = norm2 + qr[(i, j)] * qr[(i, j)];
            }
            let norm = norm2.sqrt();
            if norm == T::zero() {
                beta[j] = T::zero();
                continue;
            }
            let alpha = if qr[(j, j)] >= T::zero() { -norm } else { norm };
            let v0 = qr[(j, j)] - alpha;
            qr[(j, j)] = alpha;
            for i in (j + 1)..m {
                qr[(i, j)] = qr[(i, j)] / v0;
            }
            beta[j] = -v0 / alpha;
            // apply reflector to the remaining columns
            for c in (j + 1)..n {
                let mut dot = qr[(j, c)];
                for i in (j + 1)..m {
                    dot = dot + qr[(i, j)] * qr[(i, c)];
                }
                let s = beta[j] * dot;
                qr[(j, c)] = qr[(j, c)] - s;
                for i in (j + 1)..m {
                    let vij = qr[(i, j)];
                    qr[(i, c)] = qr[(i, c)] - s * vij;
                }
            }
        }
        Ok(QrFactor { qr, beta })
    }

    /// Minimum-norm least-squares solve; returns the coefficient vector and
    /// the residual 2-norm.
    pub fn solve(&self, rhs: &[T]) -> Result<(Vec<T>, T)> {
        let (m, n) = (self.qr.nrows(), self.qr.ncols());
        if rhs.len() != m {
            return Err(Error::LengthMismatch {
                what: "least-squares right-hand side",
                expected: m,
                actual: rhs.len(),
            });
        }
        let mut y = rhs.to_vec();
        // y <- Qᵀ y
        for j in 0..n {
            if self.beta[j] == T::zero() {
                continue;
            }
            let mut dot = y[j];
            for i in (j + 1)..m {
                dot = dot + self.qr[(i, j)] * y[i];
            }
            let s = self.beta[j] * dot;
            y[j] = y[j] - s;
            for i in (j + 1)..m {
                let vij = self.qr[(i, j)];
                y[i] = y[i] - s * vij;
            }
        }
        // back substitution on R
        let rmax = (0..n)
            .map(|i| self.qr[(i, i)].abs())
            .fold(T::zero(), T::max);
        let tol = T::cast(m as f64) * T::epsilon() * rmax;
        let mut x = vec![T::zero(); n];
        for j in (0..n).rev() {
            let rjj = self.qr[(j, j)];
            if rjj.abs() <= tol {
                return Err(Error::RankDeficient("QR pivot below tolerance"));
            }
            let mut s = y[j];
            for c in (j + 1)..n {
                s = s - self.qr[(j, c)] * x[c];
            }
            x[j] = s / rjj;
        }
        let residual = y[n..m]
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt();
        Ok((x, residual))
    }
}

/// Solve the symmetric positive-definite system `A x = b` via Cholesky.
pub fn solve_spd<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let f = cholesky_psd(a)?;
    let n = a.nrows();
    let l = &f.l;
    // forward: L z = b
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * z[k];
        }
        let d = l[(i, i)];
        if d == T::zero() {
            return Err(Error::RankDeficient("singular normal matrix"));
        }
        z[i] = s / d;
    }
    // backward: Lᵀ x = z
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}
