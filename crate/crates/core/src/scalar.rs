//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + LowerExp
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every `Real` can represent (a rounding of) any f64.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Position or vector in up to three dimensions; unused axes stay zero.
pub type Vec3<T> = [T; 3];

#[inline]
pub fn zero3<T: Real>() -> Vec3<T> {
    [T::zero(); 3]
}

#[inline]
pub fn add3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// `a + s * b`
#[inline]
pub fn axpy3<T: Real>(a: &Vec3<T>, s: T, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn dot3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Real>(a: &Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

#[inline]
pub fn cross3<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn is_finite3<T: Real>(a: &Vec3<T>) -> bool {
    a.iter().all(|c| c.is_finite())
}

/// Zeroes the components on inactive axes.
#[inline]
pub fn masked<T: Real>(mut v: Vec3<T>, dim: usize) -> Vec3<T> {
    v.iter_mut().skip(dim).for_each(|c| *c = T::zero());
    v
}

/// Copies the first `dim` entries of a slice into a padded vector.
pub fn vec3_from_slice<T: Real>(xs: &[T]) -> Vec3<T> {
    let mut out = zero3();
    for (o, x) in out.iter_mut().zip(xs) {
        *o = *x;
    }
    out
}

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn wrap_angle<T: Real>(phi: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut w = phi - two_pi * (phi / two_pi).round();
    if w <= -T::PI() {
        w = w + two_pi;
    } else if w > T::PI() {
        w = w - two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_is_right_handed() {
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        assert_eq!(cross3(&e1, &e2), [0.0, 0.0, 1.0]);
        assert_eq!(cross3(&[-1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        for k in -20..20 {
            let phi = 0.3 + f64::from(k) * std::f64::consts::PI;
            let w = wrap_angle(phi);
            assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            let turns = (phi - w) / std::f64::consts::TAU;
            assert!((turns - turns.round()).abs() < 1e-12);
        }
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
    }
}
