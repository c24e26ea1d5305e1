//! Numeric abstraction shared by every model in the crate.
//!
//! All times, prices, balances and shares are expressed in a generic
//! [`Scalar`]. Binary floats (`f32`, `f64`) are the fast path used by the
//! command-line runner; [`BigRational`] gives exact arithmetic, which the
//! test suites use wherever a property must hold with zero tolerance.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// A real-valued quantity: `f32`, `f64` or an exact rational.
pub trait Scalar:
    Num + Signed + Clone + PartialOrd + Debug + Display + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Largest integer not greater than `self`.
    fn floor(&self) -> Self;

    /// Smallest integer not less than `self`.
    fn ceil(&self) -> Self;

    /// False for NaN and infinities.
    fn is_finite(&self) -> bool;

    /// Whether arithmetic on this type is exact.
    const EXACT: bool;

    /// Relative rounding unit; zero for exact types.
    const EPSILON: f64;

    /// Converts an `f64`. Exact types take the exact binary value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits scalar")
    }

    /// Lossy conversion used for reporting.
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Euclidean remainder; the result lies in `[0, modulus)`.
    fn rem_euclid(&self, modulus: &Self) -> Self {
        let q = (self.clone() / modulus.clone()).floor();
        self.clone() - q * modulus.clone()
    }

    /// Whether two sums of the same money are equal, allowing the rounding
    /// that `ops` additions of magnitude `scale` can introduce. Exact types
    /// require equality.
    fn conserved(before: &Self, after: &Self, scale: &Self, ops: usize) -> bool {
        if Self::EXACT {
            return before == after;
        }
        (before.clone() - after.clone()).abs() <= Self::rounding_bound(scale, ops)
    }

    /// `value <= limit`, allowing the same rounding slack as [`Scalar::conserved`].
    fn at_most(value: &Self, limit: &Self, scale: &Self, ops: usize) -> bool {
        if Self::EXACT {
            return value <= limit;
        }
        value.clone() - limit.clone() <= Self::rounding_bound(scale, ops)
    }

    /// Worst-case error of `ops` additions of magnitude about `scale`.
    fn rounding_bound(scale: &Self, ops: usize) -> Self {
        let eps = Self::lit(Self::EPSILON) * Self::from_count(ops.max(1) * 4);
        eps * (scale.abs() + Self::one())
    }
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            const EXACT: bool = false;
            const EPSILON: f64 = <$t>::EPSILON as f64;
            fn floor(&self) -> Self {
                <$t>::floor(*self)
            }
            fn ceil(&self) -> Self {
                <$t>::ceil(*self)
            }
            fn is_finite(&self) -> bool {
                <$t>::is_finite(*self)
            }
        }
    )*};
}

impl_float_scalar!(f32, f64);

impl Scalar for BigRational {
    const EXACT: bool = true;
    const EPSILON: f64 = 0.0;
    fn floor(&self) -> Self {
        BigRational::floor(self)
    }
    fn ceil(&self) -> Self {
        BigRational::ceil(self)
    }
    fn is_finite(&self) -> bool {
        true
    }
}

/// Builds an exact rational `num / den`.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn smin<T: Scalar>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

pub fn smax<T: Scalar>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

/// Sum of an iterator of scalars, starting from zero.
pub fn sum<T: Scalar, I: IntoIterator<Item = T>>(items: I) -> T {
    items.into_iter().fold(T::zero(), |acc, x| acc + x)
}

/// Converts a nonnegative integral scalar to a count, saturating.
pub fn to_count<T: Scalar>(x: &T) -> usize {
    if x.is_zero() || *x < T::zero() {
        return 0;
    }
    x.floor().to_usize().unwrap_or(usize::MAX)
}
