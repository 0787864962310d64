//! Scalar abstraction: the numerical core is generic over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, Neg, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar used for model parameters, gradients, and codec math.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Neg<Output = Self>
    + Sum<Self>
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from config-level `f64` values.
    fn from_config(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    /// Draw one standard-normal sample from `rng`.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// The wire form of an unquantized value: IEEE-754 binary32 bits.
    fn to_wire_f32_bits(self) -> u32 {
        (self.to_f64().unwrap_or(0.0) as f32).to_bits()
    }

    /// Number of representable values between `self` and `other` (same sign,
    /// both finite). Used by tests asserting "within N ulps" properties.
    fn ulp_distance(self, other: Self) -> u64;
}

impl Scalar for f32 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn ulp_distance(self, other: Self) -> u64 {
        ulp_distance_bits(self.to_bits() as u64, other.to_bits() as u64, 31)
    }
}

impl Scalar for f64 {
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn ulp_distance(self, other: Self) -> u64 {
        ulp_distance_bits(self.to_bits(), other.to_bits(), 63)
    }
}

fn ulp_distance_bits(a: u64, b: u64, sign_bit: u32) -> u64 {
    // Map the sign-magnitude float encoding onto a monotone integer line.
    let remap = |x: u64| -> i128 {
        if x >> sign_bit == 0 {
            x as i128
        } else {
            -((x & !(1 << sign_bit)) as i128)
        }
    };
    (remap(a) - remap(b)).unsigned_abs() as u64
}
