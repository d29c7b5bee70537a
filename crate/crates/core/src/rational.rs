//! Exact rational scalars.
//!
//! Every probability, constraint coefficient and LP entry in this crate is a
//! [`Rational`] — an arbitrary-precision fraction kept in lowest terms with a
//! positive denominator. No binary floating point is ever produced or
//! consumed; text input is converted digit-by-digit.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::Error;

/// Arbitrary-precision rational number (lowest terms, positive denominator).
pub type Rational = num_rational::BigRational;

/// Shorthand for a rational from machine-integer numerator and denominator.
///
/// Panics on a zero denominator; intended for literal values in code.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Rational from a machine integer.
pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

/// Renders a rational as `num/den`, always including the denominator
/// (`0/1`, `1/2`, `-3/4`). This is the canonical interchange form used in
/// JSON reports and the system file format.
pub fn to_frac_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses an exact rational from text.
///
/// Accepted forms:
/// * `num/den` with optional leading sign (`1/10`, `-3/4`);
/// * a decimal string (`0.1`, `23.`, `-0.05`), expanded exactly as
///   digits over a power of ten;
/// * a plain integer (`2`, `-7`).
///
/// A decimal string never passes through binary floating point, so `0.1`
/// is exactly 1/10.
pub fn parse_rational(text: &str) -> Result<Rational, Error> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational literal".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad numerator in `{s}`")))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad denominator in `{s}`")))?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        return Ok(Rational::new(n, d));
    }
    // Decimal or integer literal.
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Parse(format!("`{s}` is not a number")));
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return Err(Error::Parse(format!("`{s}` is not a decimal or num/den literal")));
    }
    let mut numer = if int_part.is_empty() {
        BigInt::zero()
    } else {
        int_part
            .parse::<BigInt>()
            .map_err(|_| Error::Parse(format!("bad integer part in `{s}`")))?
    };
    let mut denom = BigInt::one();
    for c in frac_part.chars() {
        numer = numer * 10 + (c as u8 - b'0');
        denom *= 10;
    }
    Ok(Rational::new(numer * sign, denom))
}
