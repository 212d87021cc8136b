//! Kernel density summary statistics, the observed-vs-synthetic divergence,
//! and Epanechnikov acceptance weights.

use crate::grid::{std_normal_pdf, GridSpec};
use crate::scalar::Scalar;
use crate::spline::{FittedCurve, SplineFitter};
use crate::{Error, Result};

/// Floor applied to kernel density values before taking logs, keeping the
/// log-scale summaries finite where the estimate vanishes.
pub const KDE_LOG_FLOOR: f64 = 1e-12;

/// Normal-reference bandwidth `h = s * (4 / (3n))^(1/5)` with `s` the
/// sample standard deviation (n-1 denominator).
pub fn bandwidth<T: Scalar>(data: &[T]) -> Result<T> {
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "bandwidth needs at least 2 observations, got {n}"
        )));
    }
    let nf = T::cast(n as f64);
    let mean = data.iter().copied().sum::<T>() / nf;
    let ss = data
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .sum::<T>();
    let sd = (ss / (nf - T::one())).sqrt();
    if sd <= T::zero() || !sd.is_finite() {
        return Err(Error::invalid(
            "bandwidth undefined for zero-variance data",
        ));
    }
    let exponent = T::cast(0.2);
    Ok(sd * (T::cast(4.0) / (T::cast(3.0) * nf)).powf(exponent))
}

/// Pipeline bandwidth policy: where the normal-reference rule is undefined
/// (fewer than two points or zero variance) fall back to a fixed fraction of
/// the grid range instead of failing mid-run.
pub fn bandwidth_or_floor<T: Scalar>(data: &[T], grid: &GridSpec<T>) -> T {
    bandwidth(data)
        .unwrap_or_else(|_| T::cast(1e-3) * (grid.x_high() - grid.x_low()))
}

/// Gaussian kernel density estimate evaluated at every grid point:
/// `K(psi_j) = (1/(n h)) sum_m phi((psi_j - x_m) / h)`.
pub fn kde_on_grid<T: Scalar>(data: &[T], h: T, grid: &GridSpec<T>) -> Result<Vec<T>> {
    if data.is_empty() {
        return Err(Error::EmptyInput("kde data"));
    }
    if !(h > T::zero() && h.is_finite()) {
        return Err(Error::invalid(format!("kde bandwidth must be positive, got {h}")));
    }
    let scale = T::one() / (T::cast(data.len() as f64) * h);
    Ok(grid
        .points()
        .iter()
        .map(|&psi| {
            let s = data
                .iter()
                .map(|&x| std_normal_pdf((psi - x) / h))
                .sum::<T>();
            s * scale
        })
        .collect())
}

/// Per-group kernel density summary: bandwidth, grid values, the fitted
/// curve, and floored log grid values.
#[derive(Debug, Clone)]
pub struct KdeSummary<T> {
    bandwidth: T,
    values: Vec<T>,
    curve: FittedCurve<T>,
    log_values: Vec<T>,
}

impl<T: Scalar> KdeSummary<T> {
    /// Summarize one group of observations on the shared grid, using the
    /// pipeline bandwidth policy.
    pub fn from_data(data: &[T], grid: &GridSpec<T>, fitter: &SplineFitter<T>) -> Result<Self> {
        let h = bandwidth_or_floor(data, grid);
        let values = kde_on_grid(data, h, grid)?;
        Self::from_grid_values(h, values, fitter)
    }

    /// Build a summary from precomputed grid values.
    pub fn from_grid_values(
        bandwidth: T,
        values: Vec<T>,
        fitter: &SplineFitter<T>,
    ) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::NonFinite("kde grid values"));
        }
        let curve = fitter.fit(&values)?;
        let floor = T::cast(KDE_LOG_FLOOR);
        let log_values = values.iter().map(|&v| v.max(floor).ln()).collect();
        Ok(KdeSummary {
            bandwidth,
            values,
            curve,
            log_values,
        })
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn curve(&self) -> &FittedCurve<T> {
        &self.curve
    }

    /// `ln(max(K(psi_j), floor))`.
    pub fn log_values(&self) -> &[T] {
        &self.log_values
    }
}

/// Weighted absolute log-difference between observed and simulated group
/// summaries, summed over groups and grid points:
/// `D = sum_i sum_j |log K_i_obs(psi_j) - log K_i_sim(psi_j)| K_i_obs(psi_j)`
/// with all kernel values floored before the logs and the weight.
pub fn divergence<T: Scalar>(
    obs: &[KdeSummary<T>],
    sim: &[KdeSummary<T>],
    grid: &GridSpec<T>,
) -> Result<T> {
    if obs.len() != sim.len() {
        return Err(Error::LengthMismatch {
            what: "divergence group count",
            expected: obs.len(),
            actual: sim.len(),
        });
    }
    let k = grid.len();
    let floor = T::cast(KDE_LOG_FLOOR);
    let mut d = T::zero();
    for (o, s) in obs.iter().zip(sim) {
        if o.values.len() != k || s.values.len() != k {
            return Err(Error::LengthMismatch {
                what: "divergence grid length",
                expected: k,
                actual: o.values.len().min(s.values.len()),
            });
        }
        for j in 0..k {
            let w = o.values[j].max(floor);
            d += (o.log_values[j] - s.log_values[j]).abs() * w;
        }
    }
    Ok(d)
}

/// Epanechnikov acceptance weight `1 - (D/delta)^2` for `D <= delta`, else 0.
pub fn epanechnikov_weight<T: Scalar>(d: T, delta: T) -> Result<T> {
    if !(delta > T::zero()) {
        return Err(Error::invalid(format!(
            "Epanechnikov threshold must be positive, got {delta}"
        )));
    }
    if d < T::zero() {
        return Err(Error::invalid(format!("divergence must be >= 0, got {d}")));
    }
    if d <= delta {
        let r = d / delta;
        Ok(T::one() - r * r)
    } else {
        Ok(T::zero())
    }
}
