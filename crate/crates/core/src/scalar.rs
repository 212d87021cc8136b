//! The scalar abstraction the whole crate is generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::distr::uniform::SampleUniform;
use rand::distr::{Distribution, StandardUniform};
use rand::Rng;
use rand_distr::{Exp1, Gamma, Open01, StandardNormal};

/// Draws from the standard distributions, exposed as plain methods so that
/// generic code does not have to carry `rand_distr`'s bounds around.
pub trait SampleScalar: Sized {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from Gamma(shape, rate). Parameters must already be
    /// validated as strictly positive and finite.
    fn gamma<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Self;

    /// Uniform draw on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl<T> SampleScalar for T
where
    T: Float,
    StandardNormal: Distribution<T>,
    StandardUniform: Distribution<T>,
    Exp1: Distribution<T>,
    Open01: Distribution<T>,
{
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> T {
        rng.sample(StandardNormal)
    }

    fn gamma<R: Rng + ?Sized>(shape: T, rate: T, rng: &mut R) -> T {
        Gamma::new(shape, rate.recip())
            .expect("gamma parameters validated by caller")
            .sample(rng)
    }

    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> T {
        rng.sample(StandardUniform)
    }
}

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + SampleUniform
    + SampleScalar
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Shorthand for `T::from_f64(c).unwrap()`, for literals known to fit.
    fn cast(c: f64) -> Self {
        Self::from_f64(c).expect("constant representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
