use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the tabular algorithms and the analysis operators are generic over.
///
/// Implemented for `f32` and `f64`. Sampling and bookkeeping happen in `f64`
/// and are converted through [`Scalar::of`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Absolute tolerance used when checking that probability vectors sum to one.
    fn stochastic_tol() -> Self {
        Self::of(1e-12).max(Self::epsilon() * Self::of(64.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stochastic_tolerance_tracks_precision() {
        assert_eq!(f64::stochastic_tol(), 1e-12);
        assert!(f32::stochastic_tol() > 1e-6);
    }
}
