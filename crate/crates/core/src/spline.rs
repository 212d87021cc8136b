//! B-spline bases, least-squares fitting of grid-sampled functions, and
//! de Boor evaluation — the continuous approximation layer for latent
//! functions, kernel density estimates, and regression coefficients.

use std::sync::Arc;

use crate::grid::GridSpec;
use crate::linalg::{Matrix, QrFactor};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Clamped B-spline basis with uniformly spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T> {
    order: usize,
    n_basis: usize,
    /// Full knot vector of length `n_basis + order`, endpoints repeated
    /// `order` times.
    knots: Vec<T>,
}

/// Build a clamped basis of `n_basis` functions of the given order
/// (order = degree + 1; 4 is cubic) on `range`.
pub fn build_basis<T: Scalar>(range: (T, T), n_basis: usize, order: usize) -> Result<SplineBasis<T>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::invalid(format!(
            "degenerate spline range [{lo}, {hi}]"
        )));
    }
    if order < 2 {
        return Err(Error::invalid(format!("spline order must be >= 2, got {order}")));
    }
    if n_basis < order {
        return Err(Error::invalid(format!(
            "need n_basis >= order, got {n_basis} < {order}"
        )));
    }
    let n_interior = n_basis - order;
    let mut knots = Vec::with_capacity(n_basis + order);
    for _ in 0..order {
        knots.push(lo);
    }
    let denom = T::cast((n_interior + 1) as f64);
    for j in 1..=n_interior {
        knots.push(lo + (hi - lo) * (T::cast(j as f64) / denom));
    }
    for _ in 0..order {
        knots.push(hi);
    }
    Ok(SplineBasis {
        order,
        n_basis,
        knots,
    })
}

impl<T: Scalar> SplineBasis<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn x_low(&self) -> T {
        self.knots[0]
    }

    pub fn x_high(&self) -> T {
        *self.knots.last().unwrap()
    }

    pub fn interior_knots(&self) -> &[T] {
        &self.knots[self.order..self.n_basis]
    }

    /// The `order` basis functions that are nonzero at `x`, together with
    /// the index of the first one (Cox–de Boor recursion on the knot span).
    pub fn nonzero_at(&self, x: T) -> Result<(usize, Vec<T>)> {
        if !(x >= self.x_low() && x <= self.x_high()) {
            return Err(Error::OutOfRange(
                x.to_f64().unwrap_or(f64::NAN),
                self.x_low().to_f64().unwrap_or(f64::NAN),
                self.x_high().to_f64().unwrap_or(f64::NAN),
            ));
        }
        let p = self.order - 1;
        // knot span: largest i with knots[i] <= x < knots[i+1], clamped so
        // that x == x_high lands in the last real span
        let mut span = match self
            .knots
            .partition_point(|&k| k <= x)
        {
            0 => p,
            s => s - 1,
        };
        span = span.min(self.n_basis - 1).max(p);

        // iterative Cox-de Boor: values[j] = B_{span-p+j, order}(x)
        let mut values = vec![T::zero(); self.order];
        let mut left = vec![T::zero(); self.order];
        let mut right = vec![T::zero(); self.order];
        values[0] = T::one();
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = values[r] / denom;
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Ok((span - p, values))
    }
}

/// Spline-basis representation of a function on the grid range.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedCurve<T> {
    basis: Arc<SplineBasis<T>>,
    coefficients: Vec<T>,
}

impl<T: Scalar> FittedCurve<T> {
    pub fn new(basis: Arc<SplineBasis<T>>, coefficients: Vec<T>) -> Result<Self> {
        if coefficients.len() != basis.n_basis() {
            return Err(Error::LengthMismatch {
                what: "spline coefficients",
                expected: basis.n_basis(),
                actual: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spline coefficients"));
        }
        Ok(FittedCurve {
            basis,
            coefficients,
        })
    }

    pub fn basis(&self) -> &SplineBasis<T> {
        &self.basis
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// de Boor evaluation at `x` in `[x_low, x_high]`.
    pub fn evaluate(&self, x: T) -> Result<T> {
        let (first, vals) = self.basis.nonzero_at(x)?;
        Ok(vals
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (j, &b)| {
                acc + b * self.coefficients[first + j]
            }))
    }

    /// Evaluate on every point of a grid.
    pub fn evaluate_on<I: IntoIterator<Item = T>>(&self, xs: I) -> Result<Vec<T>> {
        xs.into_iter().map(|x| self.evaluate(x)).collect()
    }
}

/// Least-squares spline fitter with the design-matrix QR factorization
/// computed once per (grid, basis) pair and reused for every fit.
#[derive(Debug, Clone)]
pub struct SplineFitter<T> {
    basis: Arc<SplineBasis<T>>,
    grid: Vec<T>,
    qr: QrFactor<T>,
}

impl<T: Scalar> SplineFitter<T> {
    pub fn new(grid: &GridSpec<T>, basis: SplineBasis<T>) -> Result<Self> {
        if grid.len() < basis.n_basis() {
            return Err(Error::invalid(format!(
                "least squares needs k >= n_basis, got k = {} < {}",
                grid.len(),
                basis.n_basis()
            )));
        }
        let basis = Arc::new(basis);
        let mut design = Matrix::zeros(grid.len(), basis.n_basis());
        for (i, &x) in grid.points().iter().enumerate() {
            let (first, vals) = basis.nonzero_at(x)?;
            for (j, &v) in vals.iter().enumerate() {
                design[(i, first + j)] = v;
            }
        }
        let qr = QrFactor::new(design)?;
        Ok(SplineFitter {
            basis,
            grid: grid.points().to_vec(),
            qr,
        })
    }

    pub fn basis(&self) -> &Arc<SplineBasis<T>> {
        &self.basis
    }

    pub fn grid_points(&self) -> &[T] {
        &self.grid
    }

    /// Fit grid-sampled values, returning the curve and the residual 2-norm
    /// at the grid points.
    pub fn fit_with_residual(&self, values: &[T]) -> Result<(FittedCurve<T>, T)> {
        if values.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                what: "values to fit",
                expected: self.grid.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("values to fit"));
        }
        let (coefficients, residual) = self.qr.solve(values)?;
        Ok((
            FittedCurve {
                basis: Arc::clone(&self.basis),
                coefficients,
            },
            residual,
        ))
    }

    pub fn fit(&self, values: &[T]) -> Result<FittedCurve<T>> {
        self.fit_with_residual(values).map(|(c, _)| c)
    }
}

/// One-off least-squares fit of grid values in the given basis.
pub fn fit_least_squares<T: Scalar>(
    grid: &GridSpec<T>,
    values: &[T],
    basis: SplineBasis<T>,
) -> Result<FittedCurve<T>> {
    SplineFitter::new(grid, basis)?.fit(values)
}
