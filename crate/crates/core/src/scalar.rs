use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the reward, learning and actuator math.
///
/// `Display`/`FromStr` must round-trip exactly; snapshots rely on it.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Display + FromStr + Debug + Default + Send + Sync + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits the scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
