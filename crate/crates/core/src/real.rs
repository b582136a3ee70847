//! Scalar abstraction shared by the exact-arithmetic layers (series, recursion, trees).
//!
//! `f64` is the default; [`BigFloat`] carries 40 significant decimal digits.

use std::fmt::{Debug, Display};

pub use num_bigfloat::BigFloat;
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

pub type C<R> = Complex<R>;

pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Label used in reports.
    const NAME: &'static str;

    /// Parses a plain decimal literal (`-12.5e-3`) or the token `pi` / `-pi`
    /// at the full precision of the type.
    fn parse_decimal(text: &str) -> Option<Self>;

    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const NAME: &'static str = "double";

    fn parse_decimal(text: &str) -> Option<Self> {
        match text.trim() {
            "pi" => Some(std::f64::consts::PI),
            "-pi" => Some(-std::f64::consts::PI),
            t => t.parse().ok().filter(|v: &f64| v.is_finite()),
        }
    }
}

impl Real for BigFloat {
    const NAME: &'static str = "extended";

    fn parse_decimal(text: &str) -> Option<Self> {
        match text.trim() {
            "pi" => Some(<BigFloat as FloatConst>::PI()),
            "-pi" => Some(-<BigFloat as FloatConst>::PI()),
            t => parse_decimal_digits(t),
        }
    }
}

/// Splits a decimal literal into sign, digit string and base-10 exponent, then
/// accumulates in chunks of at most 15 digits so every partial product is exact
/// before the final scaling.
fn parse_decimal_digits<R: Real>(text: &str) -> Option<R> {
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits: String = int_part.chars().chain(frac_part.chars()).collect();
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = digits.trim_start_matches('0');
    let scale = exponent - frac_part.len() as i32;
    let ten = R::from_f64_lossy(10.0);
    let mut acc = R::zero();
    for chunk in digits.as_bytes().chunks(15) {
        let chunk_str = std::str::from_utf8(chunk).ok()?;
        let chunk_value: u64 = chunk_str.parse().ok()?;
        acc = acc * ten.powi(chunk.len() as i32) + R::from_u64(chunk_value)?;
    }
    let value = if scale >= 0 {
        acc * ten.powi(scale)
    } else {
        acc / ten.powi(-scale)
    };
    Some(if negative { -value } else { value })
}

pub fn c<R: Real>(re: R, im: R) -> C<R> {
    Complex::new(re, im)
}

pub fn czero<R: Real>() -> C<R> {
    Complex::new(R::zero(), R::zero())
}

pub fn cabs<R: Real>(z: C<R>) -> R {
    z.re.hypot(z.im)
}

/// `i * value`
pub fn times_i<R: Real>(z: C<R>) -> C<R> {
    Complex::new(-z.im, z.re)
}

/// `e^{i angle}`
pub fn cis<R: Real>(angle: R) -> C<R> {
    Complex::new(angle.cos(), angle.sin())
}

pub fn to_c64<R: Real>(z: C<R>) -> Complex<f64> {
    Complex::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())
}

pub fn factorial<R: Real>(n: usize) -> R {
    (1..=n).fold(R::one(), |acc, k| acc * R::from_usize(k).expect("small integer"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_parse_matches_std() {
        assert_eq!(f64::parse_decimal("0.38"), Some(0.38));
        assert_eq!(f64::parse_decimal("-1e-3"), Some(-1e-3));
        assert_eq!(f64::parse_decimal("pi"), Some(std::f64::consts::PI));
        assert_eq!(f64::parse_decimal("abc"), None);
    }

    #[test]
    fn extended_parse_keeps_all_digits() {
        let text = "0.6180339887498948482045868343656381177203";
        let parsed = BigFloat::parse_decimal(text).unwrap();
        let one = BigFloat::from_f64_lossy(1.0);
        // σ² + σ - 1 = 0
        let defect = (parsed * parsed + parsed - one).abs();
        assert!(defect < BigFloat::from_f64_lossy(1e-38), "defect {}", defect);
        let rounded = BigFloat::from_f64_lossy(parsed.to_f64_lossy());
        assert!((parsed - rounded).abs() > BigFloat::from_f64_lossy(1e-20));
    }

    #[test]
    fn extended_parse_handles_signs_and_exponents() {
        let v = BigFloat::parse_decimal("-12.5e-2").unwrap();
        assert_eq!(v.to_f64_lossy(), -0.125);
        assert_eq!(BigFloat::parse_decimal("3").unwrap().to_f64_lossy(), 3.0);
        assert!(BigFloat::parse_decimal(".").is_none());
        assert!(BigFloat::parse_decimal("1.2.3").is_none());
    }

    #[test]
    fn cis_and_times_i() {
        let z = cis(std::f64::consts::FRAC_PI_2);
        assert!((z.re).abs() < 1e-16 && (z.im - 1.0).abs() < 1e-16);
        let w = times_i(Complex::new(1.0, 2.0));
        assert_eq!(w, Complex::new(-2.0, 1.0));
        assert_eq!(factorial::<f64>(5), 120.0);
    }
}
