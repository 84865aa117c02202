//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
///
/// Everything numeric (advantages, KL, objective, toy policy) is generic
/// over this trait; the crate root pins `f64` aliases for the binaries.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for config values entering generic code.
    fn from_config(v: f64) -> Self {
        Self::from_f64(v).expect("finite config value")
    }
}

impl Real for f32 {}
impl Real for f64 {}
