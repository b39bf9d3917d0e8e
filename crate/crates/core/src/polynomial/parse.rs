//! Parser for scalar polynomial literals such as `"s^3 - s^2 + 2"`.
//!
//! Grammar: sums and differences of products of powers; atoms are numbers
//! (`2`, `1.3`, `3/4` written as a division), `s`, `t` (θ), `pi`, and
//! parenthesized expressions. Multiplication may be implicit (`2s`, `3(s-1)`).

use crate::num::Num;

use super::{PolyError, PolyMatrix, Var};

pub fn parse_poly(input: &str) -> Result<PolyMatrix, PolyError> {
    let mut p = Parser { input, chars: input.char_indices().collect(), pos: 0 };
    let out = p.expr()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error(&format!("unexpected {:?}", p.chars[p.pos].1)));
    }
    Ok(out)
}

struct Parser<'a> {
    input: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, reason: &str) -> PolyError {
        PolyError::Parse { input: self.input.to_string(), reason: reason.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn expr(&mut self) -> Result<PolyMatrix, PolyError> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?)?;
                }
                '-' => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<PolyMatrix, PolyError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.unary()?)?;
                }
                Some('/') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    if rhs.degree() > 0 || rhs.has_decision_vars() {
                        return Err(self.error("division by a non-constant"));
                    }
                    let d = rhs.eval_exact(&Default::default())?[0];
                    let inv = d.recip().ok_or_else(|| self.error("division by zero"))?;
                    acc = acc.scale(inv);
                }
                Some(c) if c == '(' || c.is_ascii_alphanumeric() || c == '.' => {
                    acc = acc.mul(&self.power()?)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<PolyMatrix, PolyError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<PolyMatrix, PolyError> {
        let base = self.atom()?;
        if self.peek() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_ascii_digit() {
            self.pos += 1;
        }
        let digits: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        let exp: u32 = digits
            .parse()
            .map_err(|_| self.error("exponent must be a nonnegative integer"))?;
        let mut acc = PolyMatrix::scalar(Num::ONE);
        for _ in 0..exp {
            acc = acc.mul(&base)?;
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<PolyMatrix, PolyError> {
        let Some(c) = self.peek() else {
            return Err(self.error("unexpected end of input"));
        };
        if c == '(' {
            self.pos += 1;
            let inner = self.expr()?;
            if self.peek() != Some(')') {
                return Err(self.error("missing ')'"));
            }
            self.pos += 1;
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == '.' {
            let start = self.pos;
            while self.pos < self.chars.len() {
                let ch = self.chars[self.pos].1;
                let exp_sign = (ch == '-' || ch == '+')
                    && self.pos > start
                    && matches!(self.chars[self.pos - 1].1, 'e' | 'E');
                let exp_mark = (ch == 'e' || ch == 'E')
                    && self.chars.get(self.pos + 1).is_some_and(|n| {
                        n.1.is_ascii_digit() || n.1 == '-' || n.1 == '+'
                    });
                if ch.is_ascii_digit() || ch == '.' || exp_sign || exp_mark {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let text: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
            let value =
                Num::parse_literal(&text).ok_or_else(|| self.error(&format!("bad number {text:?}")))?;
            return Ok(PolyMatrix::scalar(value));
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].1.is_ascii_alphabetic() {
                self.pos += 1;
            }
            let word: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
            return match word.as_str() {
                "s" => Ok(PolyMatrix::var(Var::S)),
                "t" | "theta" => Ok(PolyMatrix::var(Var::Theta)),
                "pi" => Ok(PolyMatrix::scalar(Num::Float(std::f64::consts::PI))),
                _ => Err(self.error(&format!("unknown symbol {word:?}"))),
            };
        }
        Err(self.error(&format!("unexpected {c:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::{Monomial, Point};

    fn coeff(p: &PolyMatrix, s: u16, t: u16) -> Num {
        p.coeff(Monomial::new(s, t), 0, 0).constant_part()
    }

    #[test]
    fn cubic() {
        let p = parse_poly("s^3 - s^2 + 2").unwrap();
        assert_eq!(coeff(&p, 3, 0), Num::ONE);
        assert_eq!(coeff(&p, 2, 0), -Num::ONE);
        assert_eq!(coeff(&p, 0, 0), Num::int(2));
        assert!(p.is_exact());
    }

    #[test]
    fn decimals_stay_exact() {
        let p = parse_poly("-0.5s^3 + 1.3 s^2 - 1.5*s + 3.03").unwrap();
        assert_eq!(coeff(&p, 3, 0), Num::ratio(-1, 2));
        assert_eq!(coeff(&p, 2, 0), Num::ratio(13, 10));
        assert_eq!(coeff(&p, 0, 0), Num::ratio(303, 100));
        assert!(p.is_exact());
    }

    #[test]
    fn theta_parentheses_and_division() {
        let p = parse_poly("t(s - 1)").unwrap();
        assert_eq!(coeff(&p, 1, 1), Num::ONE);
        assert_eq!(coeff(&p, 0, 1), -Num::ONE);
        let q = parse_poly("3/4 s").unwrap();
        assert_eq!(coeff(&q, 1, 0), Num::ratio(3, 4));
        let r = parse_poly("0.5*pi^2").unwrap();
        let v = r.eval_exact(&Point::new()).unwrap()[0].to_f64();
        assert!((v - 0.5 * std::f64::consts::PI.powi(2)).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        assert!(parse_poly("s +").is_err());
        assert!(parse_poly("x^2").is_err());
        assert!(parse_poly("(s").is_err());
        assert!(parse_poly("1/s").is_err());
        assert!(parse_poly("s^-1").is_err());
    }
}
