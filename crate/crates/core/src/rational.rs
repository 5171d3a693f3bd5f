//! Exact rational arithmetic helpers and the extended value domain.
//!
//! Everything money- or quantity-valued in this crate is a [`Rat`]
//! (arbitrary-precision rational). Utilities can be minus infinity when a
//! payment exceeds an agent's budget, which [`ExtValue`] represents as a
//! dedicated sentinel rather than a large negative number so comparisons
//! stay exact.

use alloc::string::{String, ToString};
use core::cmp::Ordering;
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// `num / den` as an exact rational. Panics on a zero denominator.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// An integer as an exact rational.
pub fn int(num: i64) -> Rat {
    Rat::from_integer(BigInt::from(num))
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// A draw in `[0, 1)` with 64 bits of resolution, kept exact as `u / 2^64`.
pub fn unit_fraction(u: u64) -> Rat {
    Rat::new(BigInt::from(u), BigInt::one() << 64u8)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseRatError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid integer part in rational literal: {0}")]
    BadInteger(String),
    #[error("zero denominator in rational literal")]
    ZeroDenominator,
}

/// Parses the canonical text forms: an integer (`"17"`, `"-3"`) or a
/// fraction (`"num/den"`).
pub fn parse_rat(s: &str) -> Result<Rat, ParseRatError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(ParseRatError::Empty);
    }
    let parse_int = |t: &str| -> Result<BigInt, ParseRatError> {
        t.parse::<BigInt>()
            .map_err(|_| ParseRatError::BadInteger(t.to_string()))
    };
    match s.split_once('/') {
        None => Ok(Rat::from_integer(parse_int(s)?)),
        Some((n, d)) => {
            let num = parse_int(n)?;
            let den = parse_int(d)?;
            if den.is_zero() {
                return Err(ParseRatError::ZeroDenominator);
            }
            Ok(Rat::new(num, den))
        }
    }
}

/// Canonical text form: lowest terms, `"n"` for integers, `"n/d"` otherwise.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        let mut s = r.numer().to_string();
        s.push('/');
        s.push_str(&r.denom().to_string());
        s
    }
}

/// Renders `r` as a plain decimal with at most `sig` significant digits
/// (round half away from zero, trailing fractional zeros stripped).
pub fn decimal_sig(r: &Rat, sig: u32) -> String {
    assert!(sig >= 1);
    if r.is_zero() {
        return "0".to_string();
    }
    let neg = r.is_negative();
    let num = r.numer().abs();
    let den = r.denom().clone();

    // Decimal exponent e with 10^e <= |r| < 10^(e+1).
    let ten = BigInt::from(10);
    let mut e: i64 = 0;
    let mut scaled_num = num.clone();
    let mut scaled_den = den.clone();
    while scaled_num < scaled_den {
        scaled_num *= &ten;
        e -= 1;
    }
    while scaled_num >= &scaled_den * &ten {
        scaled_den *= &ten;
        e += 1;
    }

    // Round |r| * 10^(sig-1-e) to an integer of exactly `sig` digits
    // (or sig+1 when rounding carries past a power of ten).
    let shift = sig as i64 - 1 - e;
    let (n, d) = if shift >= 0 {
        (num * ten.pow(shift as u32), den)
    } else {
        (num, den * ten.pow((-shift) as u32))
    };
    let (q, rem) = num_integer::Integer::div_rem(&n, &d);
    let mut digits = if &rem * 2 >= d { q + 1 } else { q }.to_string();

    // Position of the decimal point relative to the digit string.
    let point = digits.len() as i64 - shift;
    // Trim trailing zeros that fall after the decimal point.
    while point < digits.len() as i64 && digits.ends_with('0') {
        digits.pop();
    }

    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        for _ in 0..(-point) {
            out.push('0');
        }
        out.push_str(&digits);
    } else if (point as usize) >= digits.len() {
        out.push_str(&digits);
        for _ in 0..(point as usize - digits.len()) {
            out.push('0');
        }
    } else {
        let (a, b) = digits.split_at(point as usize);
        out.push_str(a);
        out.push('.');
        out.push_str(b);
    }
    out
}

/// A utility value: finite rational or minus infinity (budget exceeded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtValue {
    NegInf,
    Finite(Rat),
}

impl ExtValue {
    pub fn finite(&self) -> Option<&Rat> {
        match self {
            ExtValue::Finite(r) => Some(r),
            ExtValue::NegInf => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExtValue::NegInf => f64::NEG_INFINITY,
            ExtValue::Finite(r) => to_f64(r),
        }
    }
}

impl PartialOrd for ExtValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtValue::NegInf, ExtValue::NegInf) => Ordering::Equal,
            (ExtValue::NegInf, ExtValue::Finite(_)) => Ordering::Less,
            (ExtValue::Finite(_), ExtValue::NegInf) => Ordering::Greater,
            (ExtValue::Finite(a), ExtValue::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for ExtValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtValue::NegInf => write!(f, "-inf"),
            ExtValue::Finite(r) => write!(f, "{}", format_rat(r)),
        }
    }
}

/// Sums exact squares alongside values, for later variance estimates.
#[derive(Debug, Clone, Default)]
pub struct MomentSums {
    pub count: u64,
    pub sum: Rat,
    pub sum_sq: Rat,
}

impl MomentSums {
    pub fn push(&mut self, x: &Rat) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> Option<Rat> {
        if self.count == 0 {
            None
        } else {
            Some(&self.sum / int(self.count as i64))
        }
    }

    /// Unbiased sample variance; zero for fewer than two observations.
    pub fn variance(&self) -> Rat {
        if self.count < 2 {
            return Rat::zero();
        }
        let n = int(self.count as i64);
        let num = &self.sum_sq - &self.sum * &self.sum / &n;
        let var = num / (n - Rat::one());
        if var.is_negative() {
            Rat::zero() // guard against cancellation at exactly-zero variance
        } else {
            var
        }
    }
}

/// Two-sided 99% normal half-width for a mean of `count` observations.
pub fn half_width_99(m: &MomentSums) -> f64 {
    const Z_99: f64 = 2.5758293035489004;
    if m.count < 2 {
        return 0.0;
    }
    let se2 = m.variance() / int(m.count as i64);
    Z_99 * libm::sqrt(to_f64(&se2))
}
