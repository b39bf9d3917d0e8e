use std::collections::BTreeMap;
use std::fmt;

use crate::num::Num;

use super::PolyError;

/// Identifier of a scalar decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct DecVar(pub u32);

impl fmt::Display for DecVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Values for decision variables.
pub type Assignment = BTreeMap<DecVar, f64>;

/// `constant + sum_i coeff_i * var_i`.
///
/// Terms are sorted by variable, unique, and never carry a zero coefficient.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarAffine {
    constant: Num,
    terms: Vec<(DecVar, Num)>,
}

impl ScalarAffine {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Num) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn var(v: DecVar) -> Self {
        Self { constant: Num::ZERO, terms: vec![(v, Num::ONE)] }
    }

    /// Build from unsorted, possibly duplicated terms.
    pub fn from_terms(constant: Num, mut terms: Vec<(DecVar, Num)>) -> Self {
        terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(DecVar, Num)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 = last.1 + c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|t| !t.1.is_zero());
        Self { constant, terms: merged }
    }

    pub fn constant_part(&self) -> Num {
        self.constant
    }

    pub fn terms(&self) -> &[(DecVar, Num)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, rhs: &ScalarAffine) -> ScalarAffine {
        let mut out = Vec::with_capacity(self.terms.len() + rhs.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() && j < rhs.terms.len() {
            let (a, b) = (self.terms[i], rhs.terms[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let c = a.1 + b.1;
                    if !c.is_zero() {
                        out.push((a.0, c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.terms[i..]);
        out.extend_from_slice(&rhs.terms[j..]);
        ScalarAffine { constant: self.constant + rhs.constant, terms: out }
    }

    pub fn neg(&self) -> ScalarAffine {
        self.scale(-Num::ONE)
    }

    pub fn sub(&self, rhs: &ScalarAffine) -> ScalarAffine {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, c: Num) -> ScalarAffine {
        if c.is_zero() {
            return ScalarAffine::zero();
        }
        ScalarAffine {
            constant: self.constant * c,
            terms: self
                .terms
                .iter()
                .map(|&(v, k)| (v, k * c))
                .filter(|t| !t.1.is_zero())
                .collect(),
        }
    }

    /// Product of two affine expressions; at most one may carry variables.
    pub fn mul(&self, rhs: &ScalarAffine) -> Result<ScalarAffine, PolyError> {
        match (self.is_constant(), rhs.is_constant()) {
            (true, _) => Ok(rhs.scale(self.constant)),
            (_, true) => Ok(self.scale(rhs.constant)),
            _ => Err(PolyError::BilinearProduct),
        }
    }

    /// Evaluate with every variable assigned.
    pub fn eval(&self, assignment: &Assignment) -> Result<f64, PolyError> {
        let mut acc = self.constant.to_f64();
        for (v, c) in &self.terms {
            let x = assignment
                .get(v)
                .ok_or_else(|| PolyError::UnassignedSymbol(v.to_string()))?;
            acc += c.to_f64() * x;
        }
        Ok(acc)
    }

    /// Substitute the assigned variables, leaving the rest symbolic.
    pub fn substitute(&self, assignment: &Assignment) -> ScalarAffine {
        let mut constant = self.constant;
        let mut terms = Vec::new();
        for &(v, c) in &self.terms {
            match assignment.get(&v) {
                Some(x) => constant = constant + c * Num::Float(*x),
                None => terms.push((v, c)),
            }
        }
        ScalarAffine { constant, terms }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.1.to_f64().abs())
            .fold(self.constant.to_f64().abs(), f64::max)
    }
}

impl From<Num> for ScalarAffine {
    fn from(c: Num) -> Self {
        ScalarAffine::constant(c)
    }
}

impl fmt::Display for ScalarAffine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "{}", self.constant);
        }
        let mut first = true;
        if !self.constant.is_zero() {
            write!(f, "{}", self.constant)?;
            first = false;
        }
        for (v, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            if *c == Num::ONE {
                write!(f, "{v}")?;
            } else {
                write!(f, "{c}*{v}")?;
            }
            first = false;
        }
        Ok(())
    }
}

/// Collects contributions to one affine coefficient before canonicalizing.
#[derive(Clone, Debug, Default)]
pub(crate) struct AffineAcc {
    constant: Num,
    raw: Vec<(DecVar, Num)>,
}

impl AffineAcc {
    pub(crate) fn add_scaled(&mut self, value: &ScalarAffine, c: Num) {
        if c.is_zero() {
            return;
        }
        self.constant = self.constant + value.constant * c;
        self.raw.extend(value.terms.iter().map(|&(v, k)| (v, k * c)));
    }

    pub(crate) fn finish(self) -> ScalarAffine {
        ScalarAffine::from_terms(self.constant, self.raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_terms_are_pruned() {
        let a = ScalarAffine::var(DecVar(1));
        let z = a.sub(&a);
        assert!(z.is_zero());
        assert!(z.terms().is_empty());
    }

    #[test]
    fn from_terms_merges_duplicates() {
        let a = ScalarAffine::from_terms(
            Num::int(1),
            vec![(DecVar(2), Num::int(1)), (DecVar(0), Num::int(3)), (DecVar(2), Num::int(-1))],
        );
        assert_eq!(a.terms(), &[(DecVar(0), Num::int(3))]);
    }

    #[test]
    fn bilinear_product_rejected() {
        let a = ScalarAffine::var(DecVar(0));
        assert_eq!(a.mul(&a), Err(PolyError::BilinearProduct));
        let two = ScalarAffine::constant(Num::int(2));
        assert_eq!(a.mul(&two).unwrap().terms(), &[(DecVar(0), Num::int(2))]);
    }

    #[test]
    fn eval_requires_assignment() {
        let a = ScalarAffine::var(DecVar(3));
        assert!(matches!(a.eval(&Assignment::new()), Err(PolyError::UnassignedSymbol(_))));
    }
}
