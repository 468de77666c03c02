//! Floating-point abstraction for the geometry and training math.
//!
//! The binary scan formats are f32 on disk, so the CLI pipeline runs on f32;
//! the numeric test oracles (finite differences, quadrature-style sums)
//! instantiate the same code at f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};
use rand::distr::uniform::SampleUniform;

/// Scalar type all coordinate and parameter math is generic over.
pub trait Scalar:
    Float + NumAssign + SampleUniform + Sum + Default + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + NumAssign + SampleUniform + Sum + Default + Debug + Display + Send + Sync + 'static
{
}

/// Converts an f64 constant into the working scalar.
#[inline]
pub fn sc<S: Scalar>(v: f64) -> S {
    S::from(v).expect("f64 is convertible into any Scalar")
}
