//! Scalar abstraction. Every solver in the crate is generic over [`Real`];
//! `f64` is the working precision, `f32` is supported for the cheap paths.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in target precision")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in target precision")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Standard normal distribution function.
    #[inline]
    fn norm_cdf(self) -> Self {
        Self::lit(0.5) * (-self / Self::SQRT_2()).erfc()
    }

    /// Standard normal density.
    #[inline]
    fn norm_pdf(self) -> Self {
        (-self * self / Self::lit(2.0)).exp() / (Self::lit(2.0) * Self::PI()).sqrt()
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}
