//! Floating-point scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the Markov, allocation and estimation code: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Two allocation values closer than this are treated as tied.
    const TIE_TOLERANCE: Self;
    /// Allowed deviation of a stochastic-matrix row sum from one.
    const ROW_SUM_TOLERANCE: Self;

    /// Converts an `f64` constant; never fails for the supported types.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    /// Converts a count to the scalar type.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const TIE_TOLERANCE: Self = 1e-5;
    const ROW_SUM_TOLERANCE: Self = 1e-5;
}

impl Scalar for f64 {
    const TIE_TOLERANCE: Self = 1e-12;
    const ROW_SUM_TOLERANCE: Self = 1e-12;
}
