//! Scalar abstraction and exact-rational helpers.
//!
//! The series and linear-algebra kernels are generic over [`Scalar`], so they
//! run unchanged over `f32`, `f64` or the exact [`Rational`] type. Everything
//! above those kernels (the vertex algebra, kernels, recursions) is exact and
//! uses [`Rational`] directly.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Zero};

/// Arbitrary-precision rational number, always in lowest terms with a
/// positive denominator.
pub type Rational = BigRational;

/// Numeric type usable as a series or matrix coefficient.
pub trait Scalar:
    Clone + PartialEq + Debug + Display + Num + std::ops::Neg<Output = Self> + Send + Sync + 'static
{
    /// Embeds a machine integer.
    fn from_int(n: i64) -> Self;

    /// Embeds the fraction `n / d` (`d != 0`).
    fn from_frac(n: i64, d: i64) -> Self {
        Self::from_int(n) / Self::from_int(d)
    }

    /// Whether the coefficient should be treated as zero when pruning.
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

impl Scalar for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }
}

impl Scalar for f32 {
    fn from_int(n: i64) -> Self {
        n as f32
    }
}

impl Scalar for Rational {
    fn from_int(n: i64) -> Self {
        Rational::from_integer(BigInt::from(n))
    }

    fn from_frac(n: i64, d: i64) -> Self {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }
}

/// Integer `n` as a rational.
pub fn q(n: i64) -> Rational {
    Rational::from_int(n)
}

/// The fraction `n / d` as a rational.
pub fn qf(n: i64, d: i64) -> Rational {
    Rational::from_frac(n, d)
}

/// `n!` as a rational.
pub fn factorial(n: u64) -> Rational {
    let mut acc = BigInt::one();
    for i in 2..=n {
        acc *= BigInt::from(i);
    }
    Rational::from_integer(acc)
}

/// Generalized binomial coefficient `C(n, k)` for any integer `n` and `k >= 0`
/// (zero for `k < 0`).
pub fn binomial(n: i64, k: i64) -> Rational {
    if k < 0 {
        return Rational::zero();
    }
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    Rational::new(num, den)
}

/// Integer power `x^e` for `e >= 0`, or of the inverse for `e < 0`.
pub fn pow_i(x: &Rational, e: i64) -> Rational {
    let base = if e < 0 { x.recip() } else { x.clone() };
    let mut acc = Rational::one();
    for _ in 0..e.unsigned_abs() {
        acc *= &base;
    }
    acc
}

/// `(-1)^e`.
pub fn sign(e: i64) -> Rational {
    if e.rem_euclid(2) == 0 {
        Rational::one()
    } else {
        -Rational::one()
    }
}

/// Canonical string form of a rational: `"n"` for integers, `"n/d"` otherwise.
pub fn rat_str(x: &Rational) -> String {
    x.to_string()
}

/// Parses `"n"` or `"n/d"` (optionally signed) into a rational.
pub fn parse_rat(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::parse_bytes(n.trim().as_bytes(), 10)?;
        let d = BigInt::parse_bytes(d.trim().as_bytes(), 10)?;
        if d.is_zero() {
            return None;
        }
        Some(Rational::new(n, d))
    } else {
        let n = BigInt::parse_bytes(s.as_bytes(), 10)?;
        Some(Rational::from_integer(n))
    }
}

/// Floating-point approximation, used only for `--approx` display.
pub fn to_f64(x: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Sum of `d^k` over the positive divisors `d` of `n`.
pub fn sigma(k: u32, n: u64) -> BigInt {
    let mut acc = BigInt::zero();
    let mut d = 1u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            acc += BigInt::from(d).pow(k);
            let e = n / d;
            if e != d {
                acc += BigInt::from(e).pow(k);
            }
        }
        d += 1;
    }
    acc
}
