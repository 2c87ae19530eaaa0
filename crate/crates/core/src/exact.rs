//! Small exact-arithmetic helpers shared by the distribution code.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(v: i64) -> Rational {
    BigRational::from_integer(BigInt::from(v))
}

pub fn pow2(e: usize) -> BigUint {
    BigUint::one() << e
}

pub fn dyadic(num: u64, log2_den: usize) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(pow2(log2_den)))
}

/// `C(n, k)` as an arbitrary-precision integer.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Row `n` of Pascal's triangle.
pub fn binomial_row(n: usize) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 0..n {
        c = c * BigUint::from(n - k) / BigUint::from(k + 1);
        row.push(c.clone());
    }
    row
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exponent `e` with `r = k / 2^e` in lowest terms, if the denominator is a power of two.
pub fn dyadic_exponent(r: &Rational) -> Option<usize> {
    let den = r.denom().magnitude();
    if den.is_zero() {
        return None;
    }
    let tz = den.trailing_zeros().unwrap_or(0) as usize;
    if (den >> tz) == BigUint::one() {
        Some(tz)
    } else {
        None
    }
}

pub fn lcm_all<'a, I: IntoIterator<Item = &'a BigUint>>(items: I) -> BigUint {
    items
        .into_iter()
        .fold(BigUint::one(), |acc, d| if d.is_zero() { acc } else { acc.lcm(d) })
}

/// Parses `"3/8"`, `"-1/4"`, `"5"` or a JSON number into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad rational numerator in {s:?}")))?;
        let den: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad rational denominator in {s:?}")))?;
        if den.is_zero() {
            return Err(Error::Format(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(num, den));
    }
    if let Ok(v) = s.parse::<BigInt>() {
        return Ok(BigRational::from_integer(v));
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {s:?} as a rational")))?;
    BigRational::from_float(v).ok_or_else(|| Error::Format(format!("non-finite value {s:?}")))
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Reads a rational from JSON: either a string (`"3/8"`) or a plain number.
pub fn rational_from_json(v: &serde_json::Value) -> Result<Rational> {
    match v {
        serde_json::Value::String(s) => parse_rational(s),
        serde_json::Value::Number(n) => parse_rational(&n.to_string()),
        other => Err(Error::Format(format!("expected a rational, found {other}"))),
    }
}

pub fn abs(r: &Rational) -> Rational {
    r.abs()
}

/// Nearest integer to `r`, ties resolved toward the smaller integer.
pub fn round_half_down(r: &Rational) -> BigInt {
    let floor = r.floor().to_integer();
    let frac = r - BigRational::from_integer(floor.clone());
    if frac > rat(1, 2) {
        floor + 1
    } else {
        floor
    }
}
