//! Hierarchical Gaussian-process density estimation for grouped data.
//!
//! Given samples from `g` related univariate densities, this crate estimates
//! every density jointly by placing a hierarchically structured Gaussian
//! process prior on logistic-transformed latent functions and drawing
//! approximate posterior samples with a rejection-ABC scheme. Kernel density
//! estimates of each group serve as the ABC summary statistics, and a
//! functional regression adjustment moves the accepted latent curves toward
//! what they would have been at an acceptance threshold of zero.
//!
//! The crate is generic over the scalar type (`f32`/`f64`) via [`Scalar`];
//! the aliases at the crate root fix `f64`, which is what the CLI and the
//! test suites use.

pub mod abc;
pub mod grid;
pub mod linalg;
pub mod posterior;
pub mod prior;
pub mod regression;
pub mod scalar;
pub mod spline;
pub mod summary;

mod error;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Scalar;

/// Double-precision instantiations of the core types.
pub type BaseDensity = grid::BaseDensity<f64>;
pub type GridSpec = grid::GridSpec<f64>;
pub type CovParams = prior::CovParams<f64>;
pub type HyperPrior = prior::HyperPrior<f64>;
pub type HierarchySpec = prior::HierarchySpec<f64>;
pub type PriorDraw = prior::PriorDraw<f64>;
pub type SplineBasis = spline::SplineBasis<f64>;
pub type FittedCurve = spline::FittedCurve<f64>;
pub type KdeSummary = summary::KdeSummary<f64>;
pub type AbcConfig = abc::AbcConfig<f64>;
pub type SimulationRecord = abc::SimulationRecord<f64>;
pub type AcceptedSet = abc::AcceptedSet<f64>;
// pub type PosteriorEnsemble = posterior::PosteriorEnsemble<f64>;
// pub type DensitySummary = posterior::DensitySummary<f64>;
// pub type RankDistribution = posterior::RankDistribution<f64>;
