//! Element types the numeric core is generic over.

use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssign};

/// A real floating-point element usable in every matrix, model and training routine.
pub trait Scalar: Float + NumAssign + Debug + Display + Default + Send + Sync + 'static {
    /// Stored width in bytes; drives all memory accounting.
    const BYTES: usize;

    fn from_f64(x: f64) -> Self;

    fn to_f64(self) -> f64;

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }
}

macro_rules! impl_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            const BYTES: usize = std::mem::size_of::<$t>();

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    )*};
}

impl_scalar!(f32, f64);
