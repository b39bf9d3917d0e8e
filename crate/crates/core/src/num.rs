//! Scalar coefficients that stay exact while inputs are rational.
//!
//! A [`Num`] is either an exact rational with `i128` parts or an `f64`.
//! Arithmetic between two exact values is checked; on overflow, or as soon
//! as a float participates, the result degrades to `Float` and never
//! returns to `Exact`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, ToPrimitive, Zero};

pub type Rational = Ratio<i128>;

#[derive(Clone, Copy, Debug)]
pub enum Num {
    Exact(Rational),
    Float(f64),
}

impl Num {
    pub const ZERO: Num = Num::Exact(Ratio::new_raw(0, 1));
    pub const ONE: Num = Num::Exact(Ratio::new_raw(1, 1));

    pub fn int(v: i64) -> Self {
        Num::Exact(Rational::from_integer(v as i128))
    }

    /// `p / q` as an exact rational. Panics on `q == 0`.
    pub fn ratio(p: i64, q: i64) -> Self {
        Num::Exact(Rational::new(p as i128, q as i128))
    }

    pub fn float(v: f64) -> Self {
        Num::Float(v)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Num::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Exact(r) => r.is_zero(),
            Num::Float(f) => *f == 0.0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Exact(r) => r.to_f64().unwrap_or_else(|| {
                *r.numer() as f64 / *r.denom() as f64
            }),
            Num::Float(f) => *f,
        }
    }

    pub fn abs(&self) -> Num {
        match self {
            Num::Exact(r) => {
                if *r.numer() < 0 {
                    Num::Exact(-*r)
                } else {
                    *self
                }
            }
            Num::Float(f) => Num::Float(f.abs()),
        }
    }

    /// Integer power; exact when the base is exact and no overflow occurs.
    pub fn powi(&self, exp: u32) -> Num {
        let mut acc = Num::ONE;
        for _ in 0..exp {
            acc = acc * *self;
        }
        acc
    }

    pub fn recip(&self) -> Option<Num> {
        if self.is_zero() {
            return None;
        }
        Some(Num::ONE / *self)
    }

    fn combine(
        self,
        rhs: Num,
        exact: impl Fn(&Rational, &Rational) -> Option<Rational>,
        float: impl Fn(f64, f64) -> f64,
    ) -> Num {
        match (self, rhs) {
            (Num::Exact(a), Num::Exact(b)) => match exact(&a, &b) {
                Some(r) => Num::Exact(r),
                None => Num::Float(float(self.to_f64(), rhs.to_f64())),
            },
            _ => Num::Float(float(self.to_f64(), rhs.to_f64())),
        }
    }

    /// Parse a decimal or `p/q` literal exactly (`"1.3"` becomes `13/10`).
    pub fn parse_literal(text: &str) -> Option<Num> {
        let text = text.trim();
        if let Some((p, q)) = text.split_once('/') {
            let p: i128 = p.trim().parse().ok()?;
            let q: i128 = q.trim().parse().ok()?;
            if q == 0 {
                return None;
            }
            return Some(Num::Exact(Rational::new(p, q)));
        }
        let (mantissa, exponent) = match text.find(['e', 'E']) {
            Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
            None => (text, 0),
        };
        let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let scale = frac_part.len() as i32 - exponent;
        let numer: Option<i128> = digits.parse().ok();
        match numer {
            Some(n) if scale.abs() <= 30 => {
                let pow = 10i128.checked_pow(scale.unsigned_abs())?;
                Some(if scale >= 0 {
                    Num::Exact(Rational::new(n, pow))
                } else {
                    Num::Exact(Rational::from_integer(n.checked_mul(pow)?))
                })
            }
            _ => text.parse::<f64>().ok().map(Num::Float),
        }
    }
}

impl Default for Num {
    fn default() -> Self {
        Num::ZERO
    }
}

impl From<i64> for Num {
    fn from(v: i64) -> Self {
        Num::int(v)
    }
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num::Float(v)
    }
}

impl Add for Num {
    type Output = Num;
    fn add(self, rhs: Num) -> Num {
        self.combine(rhs, |a, b| a.checked_add(b), |a, b| a + b)
    }
}

impl Sub for Num {
    type Output = Num;
    fn sub(self, rhs: Num) -> Num {
        self.combine(rhs, |a, b| a.checked_sub(b), |a, b| a - b)
    }
}

impl Mul for Num {
    type Output = Num;
    fn mul(self, rhs: Num) -> Num {
        if self.is_zero() || rhs.is_zero() {
            return Num::ZERO;
        }
        self.combine(rhs, |a, b| a.checked_mul(b), |a, b| a * b)
    }
}

impl Div for Num {
    type Output = Num;
    fn div(self, rhs: Num) -> Num {
        self.combine(rhs, |a, b| a.checked_div(b), |a, b| a / b)
    }
}

impl Neg for Num {
    type Output = Num;
    fn neg(self) -> Num {
        match self {
            Num::Exact(r) => Num::Exact(-r),
            Num::Float(f) => Num::Float(-f),
        }
    }
}

impl PartialEq for Num {
    fn eq(&self, other: &Num) -> bool {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

impl PartialOrd for Num {
    fn partial_cmp(&self, other: &Num) -> Option<Ordering> {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => Some(a.cmp(b)),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num::Exact(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Num::Exact(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Num::Float(v) => {
                if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v:?}")
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_arithmetic_stays_exact() {
        let a = Num::ratio(1, 3);
        let b = Num::ratio(1, 6);
        assert_eq!(a + b, Num::ratio(1, 2));
        assert!((a * b).is_exact());
        assert_eq!(a / b, Num::int(2));
    }

    #[test]
    fn float_contaminates() {
        let a = Num::ratio(1, 2) + Num::float(0.25);
        assert!(!a.is_exact());
        assert_eq!(a.to_f64(), 0.75);
    }

    #[test]
    fn overflow_degrades_to_float() {
        let big = Num::Exact(Rational::from_integer(i128::MAX / 2));
        let r = big * Num::int(4);
        assert!(!r.is_exact());
        assert!(r.to_f64() > 1e38);
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(Num::parse_literal("1.3"), Some(Num::ratio(13, 10)));
        assert_eq!(Num::parse_literal("3/4"), Some(Num::ratio(3, 4)));
        assert_eq!(Num::parse_literal("2"), Some(Num::int(2)));
        assert_eq!(Num::parse_literal("0.189"), Some(Num::ratio(189, 1000)));
        assert_eq!(Num::parse_literal("5e-1"), Some(Num::ratio(1, 2)));
        assert_eq!(Num::parse_literal("x"), None);
    }

    #[test]
    fn display_forms() {
        assert_eq!(Num::ratio(-3, 4).to_string(), "-3/4");
        assert_eq!(Num::int(7).to_string(), "7");
        assert_eq!(Num::float(0.5).to_string(), "0.5");
    }
}
