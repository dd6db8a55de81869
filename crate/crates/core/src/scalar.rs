//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! Numerical code is written against [`Scalar`], a thin extension of
//! [`num_traits::Float`]. Model coefficient functions are written against the
//! smaller [`Real`] trait so the same source can be evaluated on plain floats
//! and on truncated Taylor series ([`Jet`]). `Real` is not a supertrait of
//! `Scalar` since both name `sin`, `sqrt`, ... and method calls would become
//! ambiguous.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the estimation machinery (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Cube root of machine epsilon, the usual central-difference step scale.
    #[inline]
    fn fd_step() -> Self {
        Float::cbrt(<Self as Float>::epsilon())
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + Sum
        + Default
        + Debug
        + Display
        + LowerExp
        + FromStr
        + Send
        + Sync
        + 'static
{
}

/// Arithmetic needed to write a drift or diffusion coefficient.
///
/// Implemented for `f32`, `f64` and for [`Jet`] over either of them.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn lit(v: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, k: i32) -> Self;
}

macro_rules! real_float {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn sin(self) -> Self {
                <$t>::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                <$t>::cos(self)
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn powi(self, k: i32) -> Self {
                <$t>::powi(self, k)
            }
        }
    };
}

real_float!(f32);
real_float!(f64);

/// Maximum number of Taylor coefficients carried by a [`Jet`].
pub const JET_CAPACITY: usize = 8;

/// Truncated power series `c[0] + c[1] t + ... + c[len-1] t^(len-1)`.
///
/// Arithmetic follows the usual Taylor-mode recurrences, so evaluating a
/// smooth function on a jet yields the exact Taylor coefficients of the
/// composition up to the truncation order (modulo roundoff).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T> {
    c: [T; JET_CAPACITY],
    len: usize,
}

impl<T: Scalar> Jet<T> {
    pub fn constant(v: T, len: usize) -> Self {
        assert!((1..=JET_CAPACITY).contains(&len), "jet length out of range");
        let mut c = [T::zero(); JET_CAPACITY];
        c[0] = v;
        Self { c, len }
    }

    pub fn from_coefficients(coeffs: &[T]) -> Self {
        let len = coeffs.len();
        assert!((1..=JET_CAPACITY).contains(&len), "jet length out of range");
        let mut c = [T::zero(); JET_CAPACITY];
        c[..len].copy_from_slice(coeffs);
        Self { c, len }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn coeff(&self, k: usize) -> T {
        if k < self.len {
            self.c[k]
        } else {
            T::zero()
        }
    }

    pub fn coefficients(&self) -> &[T] {
        &self.c[..self.len]
    }

    #[inline]
    fn blank(len: usize) -> Self {
        Self {
            c: [T::zero(); JET_CAPACITY],
            len,
        }
    }

    #[inline]
    fn joint_len(&self, other: &Self) -> usize {
        self.len.max(other.len)
    }

    /// Returns `(sin, cos)` of the series in one pass.
    pub fn sin_cos(self) -> (Self, Self) {
        let n = self.len;
        let mut s = Self::blank(n);
        let mut c = Self::blank(n);
        s.c[0] = Float::sin(self.c[0]);
        c.c[0] = Float::cos(self.c[0]);
        for k in 1..n {
            let mut ds = T::zero();
            let mut dc = T::zero();
            for j in 1..=k {
                let w = T::from_usize_lossy(j) * self.c[j];
                ds += w * c.c[k - j];
                dc += w * s.c[k - j];
            }
            let kk = T::from_usize_lossy(k);
            s.c[k] = ds / kk;
            c.c[k] = -dc / kk;
        }
        (s, c)
    }
}

impl<T: Scalar> Add for Jet<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut out = Self::blank(self.joint_len(&rhs));
        for k in 0..out.len {
            out.c[k] = self.c[k] + rhs.c[k];
        }
        out
    }
}

impl<T: Scalar> Sub for Jet<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut out = Self::blank(self.joint_len(&rhs));
        for k in 0..out.len {
            out.c[k] = self.c[k] - rhs.c[k];
        }
        out
    }
}

impl<T: Scalar> Neg for Jet<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut out = self;
        for k in 0..out.len {
            out.c[k] = -out.c[k];
        }
        out
    }
}

impl<T: Scalar> Mul for Jet<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let n = self.joint_len(&rhs);
        let mut out = Self::blank(n);
        for k in 0..n {
            let mut acc = T::zero();
            for j in 0..=k {
                acc += self.c[j] * rhs.c[k - j];
            }
            out.c[k] = acc;
        }
        out
    }
}

impl<T: Scalar> Div for Jet<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let n = self.joint_len(&rhs);
        let mut out = Self::blank(n);
        let d0 = rhs.c[0];
        for k in 0..n {
            let mut acc = self.c[k];
            for j in 1..=k {
                acc -= rhs.c[j] * out.c[k - j];
            }
            out.c[k] = acc / d0;
        }
        out
    }
}

impl<T: Scalar> Real for Jet<T> {
    fn lit(v: f64) -> Self {
        Self::constant(T::c(v), 1)
    }

    fn sin(self) -> Self {
        self.sin_cos().0
    }

    fn cos(self) -> Self {
        self.sin_cos().1
    }

    fn exp(self) -> Self {
        let n = self.len;
        let mut out = Self::blank(n);
        out.c[0] = Float::exp(self.c[0]);
        for k in 1..n {
            let mut acc = T::zero();
            for j in 1..=k {
                acc += T::from_usize_lossy(j) * self.c[j] * out.c[k - j];
            }
            out.c[k] = acc / T::from_usize_lossy(k);
        }
        out
    }

    fn ln(self) -> Self {
        let n = self.len;
        let mut out = Self::blank(n);
        out.c[0] = Float::ln(self.c[0]);
        for k in 1..n {
            let mut acc = T::from_usize_lossy(k) * self.c[k];
            for j in 1..k {
                acc -= T::from_usize_lossy(j) * out.c[j] * self.c[k - j];
            }
            out.c[k] = acc / (T::from_usize_lossy(k) * self.c[0]);
        }
        out
    }

    fn sqrt(self) -> Self {
        let n = self.len;
        let mut out = Self::blank(n);
        out.c[0] = Float::sqrt(self.c[0]);
        let two = T::c(2.0);
        for k in 1..n {
            let mut acc = self.c[k];
            for j in 1..k {
                acc -= out.c[j] * out.c[k - j];
            }
            out.c[k] = acc / (two * out.c[0]);
        }
        out
    }

    fn powi(self, k: i32) -> Self {
        if k == 0 {
            return Self::constant(T::one(), self.len);
        }
        let mut base = if k < 0 {
            Self::constant(T::one(), self.len) / self
        } else {
            self
        };
        let mut e = k.unsigned_abs();
        let mut acc = Self::constant(T::one(), self.len);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}
