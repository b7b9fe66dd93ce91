//! Floating-point abstraction: `f32` for training, `f64` for gradient
//! verification.

use rand::Rng;
use rand_distr::StandardNormal;

pub trait Scalar: ndarray::NdFloat {
    /// One standard-normal draw.
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self;

    #[inline]
    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable")
    }

    #[inline]
    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("representable")
    }
}

impl Scalar for f32 {
    #[inline]
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for f64 {
    #[inline]
    fn randn<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}
