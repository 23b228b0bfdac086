use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Concrete scalar used by the statistical drivers and the CLI.
pub type Real = f64;

/// Floating-point scalar the geometric core is generic over: `f32` or `f64`.
///
/// Bundles the `num-traits` arithmetic surface with the three elementary
/// random draws the samplers need, so generic code never has to spell out
/// `rand_distr` bounds.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Uniform draw on the open interval (0, 1).
    fn draw_open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard normal draw.
    fn draw_std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard exponential (rate 1) draw.
    fn draw_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn from_real(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts to Scalar")
    }

    fn to_real(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    fn draw_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }

    fn draw_std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn draw_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
}

impl Scalar for f64 {
    fn draw_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }

    fn draw_std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn draw_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }
}
