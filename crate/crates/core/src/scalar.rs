//! Scalar abstraction shared by the numerical modules.
//!
//! Everything that touches amplitudes, parameters or estimates is generic over
//! [`Real`], implemented for `f32` and `f64`. Complex quantities use
//! `num_complex::Complex<T>`. Geometry (atom positions, distances) is always
//! `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar the engine can run on.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Sum
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over a [`Real`].
pub type Cplx<T> = Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

#[inline]
pub fn creal<T: Real>(re: T) -> Cplx<T> {
    Complex::new(re, T::zero())
}

/// Convert a complex value between precisions.
#[inline]
pub fn cast_cplx<S: Real, T: Real>(z: Cplx<S>) -> Cplx<T> {
    Complex::new(T::lit(z.re.as_f64()), T::lit(z.im.as_f64()))
}

#[inline]
pub fn is_finite_cplx<T: Real>(z: Cplx<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// `log(sum(exp(x_i)))` over real values, stable against overflow.
pub fn log_sum_exp<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let v: Vec<T> = values.into_iter().collect();
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = v.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = log_sum_exp([1000.0_f64, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = log_sum_exp([-1e4_f32, 0.0]);
        assert!(w.abs() < 1e-6);
    }

    #[test]
    fn cast_roundtrip() {
        let z = cplx(0.25_f64, -1.5);
        let w: Cplx<f32> = cast_cplx(z);
        let back: Cplx<f64> = cast_cplx(w);
        assert_eq!(z, back);
    }
}
