//! Base densities, the quantile-derived evaluation grid and trapezoid
//! quadrature shared by every other module.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Parametric base density anchoring the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseDensity<T> {
    Uniform { lower: T, upper: T },
    Normal { mean: T, variance: T },
}

impl<T: Scalar> BaseDensity<T> {
    pub fn uniform(lower: T, upper: T) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(Error::NonFinite("uniform base parameters"));
        }
        if lower >= upper {
            return Err(Error::invalid(format!(
                "uniform base needs lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(BaseDensity::Uniform { lower, upper })
    }

    pub fn normal(mean: T, variance: T) -> Result<Self> {
        if !(mean.is_finite() && variance.is_finite()) {
            return Err(Error::NonFinite("normal base parameters"));
        }
        if variance <= T::zero() {
            return Err(Error::invalid(format!(
                "normal base needs variance > 0, got {variance}"
            )));
        }
        Ok(BaseDensity::Normal { mean, variance })
    }

    pub fn pdf(&self, x: T) -> T {
        match *self {
            BaseDensity::Uniform { lower, upper } => {
                if x >= lower && x <= upper {
                    T::one() / (upper - lower)
                } else {
                    T::zero()
                }
            }
            BaseDensity::Normal { mean, variance } => {
                let z = (x - mean) * (x - mean) / (T::cast(2.0) * variance);
                (-z).exp() / (T::cast(2.0) * T::PI() * variance).sqrt()
            }
        }
    }

    pub fn cdf(&self, x: T) -> T {
        match *self {
            BaseDensity::Uniform { lower, upper } => {
                ((x - lower) / (upper - lower)).max(T::zero()).min(T::one())
            }
            BaseDensity::Normal { mean, variance } => {
                std_normal_cdf((x - mean) / variance.sqrt())
            }
        }
    }

    /// Inverse CDF. The uniform case is closed-form; the normal case bisects
    /// the CDF down to an interval of width 1e-12 on the standardized scale,
    /// which sidesteps the quirks of rational inverse-CDF approximations.
    pub fn quantile(&self, p: T) -> Result<T> {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::invalid(format!(
                "quantile probability must lie in (0, 1), got {p}"
            )));
        }
        match *self {
            BaseDensity::Uniform { lower, upper } => Ok(lower + p * (upper - lower)),
            BaseDensity::Normal { mean, variance } => {
                let sd = variance.sqrt();
                // expand the bracket until it encloses p
                let mut w = T::cast(8.0);
                while std_normal_cdf(-w) > p || std_normal_cdf(w) < p {
                    w = w * T::cast(2.0);
                    if !w.is_finite() {
                        return Err(Error::NonFinite("normal quantile bracket"));
                    }
                }
                let mut lo = -w;
                let mut hi = w;
                let tol = T::cast(1e-12);
                while hi - lo > tol {
                    let mid = (lo + hi) * T::cast(0.5);
                    if mid <= lo || mid >= hi {
                        break; // float resolution reached
                    }
                    if std_normal_cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(mean + sd * (lo + hi) * T::cast(0.5))
            }
        }
    }
}

/// Lower and upper beta-quantiles of the base density.
pub fn quantile_bounds<T: Scalar>(base: &BaseDensity<T>, beta: T) -> Result<(T, T)> {
    if !(beta > T::zero() && beta < T::cast(0.5)) {
        return Err(Error::invalid(format!(
            "beta must lie in (0, 0.5), got {beta}"
        )));
    }
    let lo = base.quantile(beta)?;
    let hi = base.quantile(T::one() - beta)?;
    Ok((lo, hi))
}

/// Regular evaluation grid over the beta-trimmed support of a base density.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    beta: T,
    points: Vec<T>,
}

/// Build the grid `psi_1 < … < psi_k` with equal spacing over
/// `[Quantile(beta), Quantile(1-beta)]`.
///
/// `beta = 0` is permitted for the uniform base only, where the support is
/// compact and the grid spans it exactly.
pub fn build_grid<T: Scalar>(base: &BaseDensity<T>, beta: T, k: usize) -> Result<GridSpec<T>> {
    if k < 2 {
        return Err(Error::invalid(format!("grid needs k >= 2, got {k}")));
    }
    let (x_low, x_high) = if beta == T::zero() {
        match *base {
            BaseDensity::Uniform { lower, upper } => (lower, upper),
            BaseDensity::Normal { .. } => {
                return Err(Error::invalid(
                    "beta = 0 is only valid for a compactly supported (uniform) base",
                ))
            }
        }
    } else {
        quantile_bounds(base, beta)?
    };
    let span = x_high - x_low;
    let denom = T::cast((k - 1) as f64);
    let mut points: Vec<T> = (0..k)
        .map(|j| x_low + span * (T::cast(j as f64) / denom))
        .collect();
    points[0] = x_low;
    points[k - 1] = x_high;
    Ok(GridSpec { beta, points })
}

impl<T: Scalar> GridSpec<T> {
    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn x_low(&self) -> T {
        self.points[0]
    }

    pub fn x_high(&self) -> T {
        *self.points.last().unwrap()
    }

    pub fn spacing(&self) -> T {
        (self.x_high() - self.x_low()) / T::cast((self.len() - 1) as f64)
    }

    /// Composite trapezoid integral of grid-sampled values over
    /// `[x_low, x_high]`.
    pub fn trapezoid(&self, values: &[T]) -> Result<T> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "trapezoid values",
                expected: self.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trapezoid values"));
        }
        Ok(trapezoid(&self.points, values))
    }

    /// Running trapezoid integral: entry `j` approximates the integral from
    /// `x_low` to `psi_j`. Used to turn density grids into CDFs.
    pub fn cumulative_trapezoid(&self, values: &[T]) -> Result<Vec<T>> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "trapezoid values",
                expected: self.len(),
                actual: values.len(),
            });
        }
        let half = T::cast(0.5);
        let mut acc = T::zero();
        let mut out = Vec::with_capacity(self.len());
        out.push(T::zero());
        for j in 1..self.len() {
            acc = acc + (self.points[j] - self.points[j - 1]) * half * (values[j] + values[j - 1]);
            out.push(acc);
        }
        Ok(out)
    }
}

/// Trapezoid rule on arbitrary sorted abscissae.
pub fn trapezoid<T: Scalar>(xs: &[T], ys: &[T]) -> T {
    debug_assert_eq!(xs.len(), ys.len());
    let half = T::cast(0.5);
    let mut acc = T::zero();
    for j in 1..xs.len() {
        acc = acc + (xs[j] - xs[j - 1]) * half * (ys[j] + ys[j - 1]);
    }
    acc
}

/// Standard normal CDF via the complementary error function,
/// `Phi(x) = erfc(-x / sqrt(2)) / 2`.
pub fn std_normal_cdf<T: Scalar>(x: T) -> T {
    let half = T::cast(0.5);
    half * erfc(-x / T::SQRT_2())
}

/// Standard normal density.
pub fn std_normal_pdf<T: Scalar>(x: T) -> T {
    (-(x * x) * T::cast(0.5)).exp() / (T::cast(2.0) * T::PI()).sqrt()
}

/// Complementary error function, accurate to scalar precision.
///
/// Maclaurin series of `erf` for small arguments, Lentz continued fraction
/// for the tail; both iterated until the running term falls below machine
/// epsilon.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        return T::cast(2.0) - erfc(-x);
    }
    if x < T::cast(2.0) {
        T::one() - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

fn erf_series<T: Scalar>(x: T) -> T {
    // erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut n = T::one();
    for _ in 0..200 {
        term = -term * x2 / n;
        let contrib = term / (T::cast(2.0) * n + T::one());
        sum = sum + contrib;
        if contrib.abs() <= sum.abs() * T::epsilon() {
            break;
        }
        n = n + T::one();
    }
    sum * T::cast(2.0) / T::PI().sqrt()
}

fn erfc_cf<T: Scalar>(x: T) -> T {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/(2x + 2/(x + 3/(2x + ...))))
    // evaluated with the modified Lentz algorithm
    let tiny = T::min_positive_value();
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    let two_x = x + x;
    let mut a = T::one();
    let mut odd = true;
    for _ in 0..300 {
        let b = if odd { two_x } else { x };
        d = b + a * d;
        if d == T::zero() {
            d = tiny;
        }
        c = b + a / c;
        if c == T::zero() {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() < T::epsilon() {
            break;
        }
        a = a + T::one();
        odd = !odd;
    }
    (-(x * x)).exp() / (T::PI().sqrt() * f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_uniform() -> BaseDensity<f64> {
        BaseDensity::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn uniform_quantile_bounds() {
        let (lo, hi) = quantile_bounds(&unit_uniform(), 0.25).unwrap();
        assert_eq!(lo, 0.25);
        assert_eq!(hi, 0.75);
    }

    #[test]
    fn quantile_bounds_rejects_boundary_beta() {
        assert!(quantile_bounds(&unit_uniform(), 0.0).is_err());
        assert!(quantile_bounds(&unit_uniform(), 0.5).is_err());
        assert!(quantile_bounds(&unit_uniform(), -0.1).is_err());
    }

    #[test]
    fn normal_bounds_symmetric_near_half() {
        let base = BaseDensity::<f64>::normal(0.0, 1.0).unwrap();
        let (lo, hi) = quantile_bounds(&base, 0.5 - 1e-6).unwrap();
        assert!((lo + hi).abs() < 1e-9);
        assert!(lo < 0.0 && hi > 0.0);
    }

    #[test]
    fn normal_bounds_match_bisection_oracle() {
        // frozen from an independent inverse-CDF evaluation of N(500, 5000)
        let base = BaseDensity::<f64>::normal(500.0, 5000.0).unwrap();
        let (lo, hi) = quantile_bounds(&base, 0.001).unwrap();
        assert!((lo - 281.4875780866996).abs() < 1e-7, "lo = {lo}");
        assert!((hi - 718.5124219133004).abs() < 1e-7, "hi = {hi}");
    }

    #[test]
    fn normal_quantile_matches_statrs() {
        use statrs::distribution::ContinuousCDF;
        let base = BaseDensity::<f64>::normal(0.0, 1.0).unwrap();
        let reference = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        for p in [1e-6, 0.001, 0.1, 0.5, 0.6914624612740131, 0.975, 0.9999] {
            let q = base.quantile(p).unwrap();
            assert!(
                (q - reference.inverse_cdf(p)).abs() < 1e-8,
                "p = {p}: {q} vs {}",
                reference.inverse_cdf(p)
            );
        }
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((std_normal_cdf(0.0f64) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.96f64) - 0.9750021048517795).abs() < 1e-13);
        assert!((std_normal_cdf(-3.0f64) - 0.0013498980316300933).abs() < 1e-15);
        assert!((std_normal_cdf(0.5f64) - 0.6914624612740131).abs() < 1e-14);
        for x in [-6.0f64, -2.5, -0.3, 0.0, 0.7, 3.3, 8.0] {
            let s: f64 = std_normal_cdf(x) + std_normal_cdf(-x);
            assert!((s - 1.0).abs() < 1e-14, "symmetry at {x}");
        }
    }

    #[test]
    fn grid_formula_and_endpoints() {
        let g = build_grid(&unit_uniform(), 0.0, 5).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);

        let g = build_grid(&unit_uniform(), 0.01, 100).unwrap();
        assert!((g.points()[1] - g.points()[0] - 0.98 / 99.0).abs() < 1e-15);
        assert_eq!(g.x_low(), 0.01);
        assert_eq!(g.x_high(), 0.99);
    }

    #[test]
    fn grid_two_points_is_endpoints() {
        let base = BaseDensity::normal(2.0, 4.0).unwrap();
        let g = build_grid(&base, 0.1, 2).unwrap();
        let (lo, hi) = quantile_bounds(&base, 0.1).unwrap();
        assert_eq!(g.points(), &[lo, hi]);
    }

    #[test]
    fn grid_rejects_k_below_two() {
        assert!(build_grid(&unit_uniform(), 0.1, 1).is_err());
    }

    #[test]
    fn grid_rejects_beta_zero_for_normal() {
        let base = BaseDensity::<f64>::normal(0.0, 1.0).unwrap();
        assert!(build_grid(&base, 0.0, 10).is_err());
    }

    #[test]
    fn grid_refinement_preserves_shared_points() {
        let base = BaseDensity::normal(3.0, 2.0).unwrap();
        let coarse = build_grid(&base, 0.05, 11).unwrap();
        let fine = build_grid(&base, 0.05, 41).unwrap(); // 4x the intervals
        for (j, &p) in coarse.points().iter().enumerate() {
            assert_eq!(p, fine.points()[4 * j], "shared point {j}");
        }
    }

    #[test]
    fn trapezoid_exact_on_linear() {
        let g = build_grid(&unit_uniform(), 0.0, 7).unwrap();
        let ones = vec![1.0; 7];
        assert!((g.trapezoid(&ones).unwrap() - 1.0).abs() < 1e-15);
        let identity: Vec<f64> = g.points().to_vec();
        assert!((g.trapezoid(&identity).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_quadratic_error() {
        let g = build_grid(&unit_uniform(), 0.0, 101).unwrap();
        let sq: Vec<f64> = g.points().iter().map(|x| x * x).collect();
        let i = g.trapezoid(&sq).unwrap();
        // composite trapezoid on x^2 inflates the integral by h^2/6
        assert!((i - 1.0 / 3.0).abs() < 1e-4);
        assert!((i - (1.0 / 3.0 + 0.01f64.powi(2) / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_rejects_bad_values() {
        let g = build_grid(&unit_uniform(), 0.0, 4).unwrap();
        assert!(g.trapezoid(&[1.0, 2.0]).is_err());
        assert!(g.trapezoid(&[1.0, f64::NAN, 0.0, 1.0]).is_err());
    }

    #[test]
    fn trapezoid_is_linear_in_values() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let g = build_grid(&unit_uniform(), 0.0, 33).unwrap();
        for _ in 0..20 {
            let u: Vec<f64> = (0..33).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..33).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = g.trapezoid(&mix).unwrap();
            let rhs = a * g.trapezoid(&u).unwrap() + b * g.trapezoid(&v).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn base_pdf_mass_on_trimmed_support() {
        // integral of the pdf over its beta-trimmed support is 1 - 2 beta
        let beta = 0.001;
        for base in [
            unit_uniform(),
            BaseDensity::normal(0.0, 1.0).unwrap(),
            BaseDensity::normal(500.0, 5000.0).unwrap(),
        ] {
            let g = build_grid(&base, beta, 400).unwrap();
            let pdf: Vec<f64> = g.points().iter().map(|&x| base.pdf(x)).collect();
            let mass = g.trapezoid(&pdf).unwrap();
            assert!(
                (mass - (1.0 - 2.0 * beta)).abs() < 1e-3,
                "mass {mass} for {base:?}"
            );
        }
    }

    #[test]
    fn cumulative_trapezoid_consistent() {
        let g = build_grid(&unit_uniform(), 0.0, 51).unwrap();
        let vals: Vec<f64> = g.points().iter().map(|x| x * x).collect();
        let cum = g.cumulative_trapezoid(&vals).unwrap();
        assert_eq!(cum[0], 0.0);
        assert!((cum[50] - g.trapezoid(&vals).unwrap()).abs() < 1e-15);
        assert!(cum.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn base_density_validation() {
        assert!(BaseDensity::uniform(1.0, 1.0).is_err());
        assert!(BaseDensity::uniform(2.0, 1.0).is_err());
        assert!(BaseDensity::normal(0.0, 0.0).is_err());
        assert!(BaseDensity::normal(0.0, -1.0).is_err());
        assert!(BaseDensity::normal(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let base = BaseDensity::<f32>::uniform(0.0, 1.0).unwrap();
        let g = build_grid(&base, 0.0f32, 9).unwrap();
        assert!((g.trapezoid(&vec![1.0f32; 9]).unwrap() - 1.0).abs() < 1e-6);
        assert!((std_normal_cdf(0.0f32) - 0.5).abs() < 1e-6);
    }
}
