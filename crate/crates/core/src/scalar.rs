//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar the math core is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; constants in the algorithms are written as `f64`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Real")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    /// Short tag used in checkpoints.
    const TAG: &'static str;
}

impl Real for f32 {
    const TAG: &'static str = "f32";
}

impl Real for f64 {
    const TAG: &'static str = "f64";
}
