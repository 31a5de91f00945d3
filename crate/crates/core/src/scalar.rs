use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Scalar type the model dynamics are written against.
///
/// Blanket-implemented for every IEEE float that `num-traits` knows about,
/// so `f32` and `f64` both work out of the box.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal is representable")
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {}
