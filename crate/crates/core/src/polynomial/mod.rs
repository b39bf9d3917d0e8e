//! Matrix-valued polynomials in the spatial variables `s`, `θ` (and an
//! internal dummy `η` used while composing kernels), with coefficients that
//! are affine in scalar decision variables.

mod affine;
mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::num::Num;

pub(crate) use affine::AffineAcc;
pub use affine::{Assignment, DecVar, ScalarAffine};
pub use parse::parse_poly;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("product of two operands that both carry decision variables")]
    BilinearProduct,
    #[error("integration bound {0} is not one of a, b, s, θ or coincides with the integration variable")]
    UnknownBound(String),
    #[error("unassigned symbol {0}")]
    UnassignedSymbol(String),
    #[error("cannot parse polynomial {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

/// Spatial variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    S,
    Theta,
    Eta,
}

impl Var {
    const ALL: [Var; 3] = [Var::S, Var::Theta, Var::Eta];

    fn index(self) -> usize {
        self as usize
    }

    fn name(self) -> &'static str {
        match self {
            Var::S => "s",
            Var::Theta => "t",
            Var::Eta => "e",
        }
    }
}

/// Exponents of `(s, θ, η)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(pub [u16; 3]);

impl Monomial {
    pub const ONE: Monomial = Monomial([0, 0, 0]);

    pub fn new(s: u16, theta: u16) -> Self {
        Monomial([s, theta, 0])
    }

    pub fn of(var: Var, exp: u16) -> Self {
        let mut e = [0; 3];
        e[var.index()] = exp;
        Monomial(e)
    }

    pub fn exp(&self, var: Var) -> u16 {
        self.0[var.index()]
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    fn times(self, rhs: Monomial) -> Monomial {
        Monomial([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1], self.0[2] + rhs.0[2]])
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for v in Var::ALL {
            let e = self.exp(v);
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "{}", v.name())?;
            } else {
                write!(f, "{}^{}", v.name(), e)?;
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

/// Integration limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    Const(Num),
    Var(Var),
}

/// Values of the spatial variables; unset ones stay symbolic.
#[derive(Clone, Copy, Debug, Default)]
pub struct Point {
    values: [Option<Num>; 3],
}

impl Point {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: impl Into<Num>) -> Self {
        self.values[var.index()] = Some(value.into());
        self
    }

    pub fn s(self, value: impl Into<Num>) -> Self {
        self.with(Var::S, value)
    }

    pub fn theta(self, value: impl Into<Num>) -> Self {
        self.with(Var::Theta, value)
    }
}

/// Matrix-valued polynomial, stored as monomial -> row-major coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    terms: BTreeMap<Monomial, Vec<ScalarAffine>>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, terms: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![Num::ONE; n])
    }

    pub fn diagonal(values: &[Num]) -> Self {
        let n = values.len();
        let mut data = vec![ScalarAffine::zero(); n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = ScalarAffine::constant(*v);
        }
        Self::from_terms(n, n, [(Monomial::ONE, data)])
    }

    /// Constant matrix from row-major values.
    pub fn from_constants(rows: usize, cols: usize, values: &[Num]) -> Self {
        assert_eq!(values.len(), rows * cols, "value count must match shape");
        let data = values.iter().map(|&v| ScalarAffine::constant(v)).collect();
        Self::from_terms(rows, cols, [(Monomial::ONE, data)])
    }

    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let vals: Vec<Num> = rows.iter().flatten().map(|&v| Num::Float(v)).collect();
        Self::from_constants(r, c, &vals)
    }

    /// 1x1 polynomial `c * monomial`.
    pub fn scalar_term(c: Num, mono: Monomial) -> Self {
        Self::from_terms(1, 1, [(mono, vec![ScalarAffine::constant(c)])])
    }

    pub fn scalar(c: impl Into<ScalarAffine>) -> Self {
        Self::from_terms(1, 1, [(Monomial::ONE, vec![c.into()])])
    }

    /// The variable `var` as a 1x1 polynomial.
    pub fn var(var: Var) -> Self {
        Self::scalar_term(Num::ONE, Monomial::of(var, 1))
    }

    pub fn from_terms(
        rows: usize,
        cols: usize,
        terms: impl IntoIterator<Item = (Monomial, Vec<ScalarAffine>)>,
    ) -> Self {
        let mut map: BTreeMap<Monomial, Vec<ScalarAffine>> = BTreeMap::new();
        for (m, data) in terms {
            assert_eq!(data.len(), rows * cols, "coefficient matrix has wrong size");
            match map.get_mut(&m) {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(&data) {
                        *e = e.add(d);
                    }
                }
                None => {
                    map.insert(m, data);
                }
            }
        }
        let mut p = Self { rows, cols, terms: map };
        p.prune();
        p
    }

    fn prune(&mut self) {
        self.terms.retain(|_, data| data.iter().any(|c| !c.is_zero()));
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &[ScalarAffine])> {
        self.terms.iter().map(|(m, d)| (m, d.as_slice()))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Coefficient of `mono` at entry `(i, j)`.
    pub fn coeff(&self, mono: Monomial, i: usize, j: usize) -> ScalarAffine {
        self.terms
            .get(&mono)
            .map(|d| d[i * self.cols + j].clone())
            .unwrap_or_default()
    }

    /// Maximum total degree; zero for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn degree_in(&self, var: Var) -> u32 {
        self.terms.keys().map(|m| m.exp(var) as u32).max().unwrap_or(0)
    }

    /// Spatial variables that actually occur.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut vars = BTreeSet::new();
        for m in self.terms.keys() {
            for v in Var::ALL {
                if m.exp(v) > 0 {
                    vars.insert(v);
                }
            }
        }
        vars
    }

    pub fn has_decision_vars(&self) -> bool {
        self.terms.values().flatten().any(|c| !c.is_constant())
    }

    pub fn decision_vars(&self) -> BTreeSet<DecVar> {
        self.terms
            .values()
            .flatten()
            .flat_map(|c| c.terms().iter().map(|t| t.0))
            .collect()
    }

    pub fn is_exact(&self) -> bool {
        self.terms.values().flatten().all(|c| {
            c.constant_part().is_exact() && c.terms().iter().all(|t| t.1.is_exact())
        })
    }

    fn check_same_shape(&self, rhs: &PolyMatrix, op: &str) -> Result<(), PolyError> {
        if self.shape() != rhs.shape() {
            return Err(PolyError::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.check_same_shape(rhs, "add")?;
        let mut out = self.terms.clone();
        for (m, data) in &rhs.terms {
            match out.get_mut(m) {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(data) {
                        *e = e.add(d);
                    }
                }
                None => {
                    out.insert(*m, data.clone());
                }
            }
        }
        let mut p = PolyMatrix { rows: self.rows, cols: self.cols, terms: out };
        p.prune();
        Ok(p)
    }

    pub fn sub(&self, rhs: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> PolyMatrix {
        self.scale(-Num::ONE)
    }

    pub fn scale(&self, c: Num) -> PolyMatrix {
        let mut p = PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            terms: self
                .terms
                .iter()
                .map(|(m, d)| (*m, d.iter().map(|x| x.scale(c)).collect()))
                .collect(),
        };
        p.prune();
        p
    }

    /// Multiply every coefficient by an affine scalar.
    pub fn scale_affine(&self, c: &ScalarAffine) -> Result<PolyMatrix, PolyError> {
        if c.is_constant() {
            return Ok(self.scale(c.constant_part()));
        }
        let mut terms = BTreeMap::new();
        for (m, d) in &self.terms {
            let data = d.iter().map(|x| x.mul(c)).collect::<Result<Vec<_>, _>>()?;
            terms.insert(*m, data);
        }
        let mut p = PolyMatrix { rows: self.rows, cols: self.cols, terms };
        p.prune();
        Ok(p)
    }

    /// Matrix product. At most one operand may carry decision variables.
    pub fn mul(&self, rhs: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        if self.cols != rhs.rows {
            return Err(PolyError::ShapeMismatch(format!(
                "mul: {:?} x {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let lhs_affine = self.has_decision_vars();
        let rhs_affine = rhs.has_decision_vars();
        if lhs_affine && rhs_affine {
            return Err(PolyError::BilinearProduct);
        }
        let (r, k, c) = (self.rows, self.cols, rhs.cols);
        let mut acc: HashMap<Monomial, Vec<AffineAcc>> = HashMap::new();
        for (ml, dl) in &self.terms {
            for (mr, dr) in &rhs.terms {
                let slot = acc
                    .entry(ml.times(*mr))
                    .or_insert_with(|| vec![AffineAcc::default(); r * c]);
                for i in 0..r {
                    for kk in 0..k {
                        let a = &dl[i * k + kk];
                        if a.is_zero() {
                            continue;
                        }
                        for j in 0..c {
                            let b = &dr[kk * c + j];
                            if b.is_zero() {
                                continue;
                            }
                            if rhs_affine {
                                slot[i * c + j].add_scaled(b, a.constant_part());
                            } else {
                                slot[i * c + j].add_scaled(a, b.constant_part());
                            }
                        }
                    }
                }
            }
        }
        let terms = acc
            .into_iter()
            .map(|(m, data)| (m, data.into_iter().map(AffineAcc::finish).collect::<Vec<_>>()));
        let mut p = PolyMatrix { rows: r, cols: c, terms: terms.collect() };
        p.prune();
        Ok(p)
    }

    pub fn transpose(&self) -> PolyMatrix {
        let (r, c) = (self.rows, self.cols);
        let terms = self
            .terms
            .iter()
            .map(|(m, d)| {
                let mut t = vec![ScalarAffine::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        t[j * r + i] = d[i * c + j].clone();
                    }
                }
                (*m, t)
            })
            .collect();
        PolyMatrix { rows: c, cols: r, terms }
    }

    /// Rename variables: every occurrence of `v` becomes `map(v)`.
    /// Variables mapped onto the same target multiply.
    pub fn rename(&self, map: impl Fn(Var) -> Var) -> PolyMatrix {
        let mut out: BTreeMap<Monomial, Vec<ScalarAffine>> = BTreeMap::new();
        for (m, d) in &self.terms {
            let mut e = [0u16; 3];
            for v in Var::ALL {
                e[map(v).index()] += m.exp(v);
            }
            match out.get_mut(&Monomial(e)) {
                Some(existing) => {
                    for (x, y) in existing.iter_mut().zip(d) {
                        *x = x.add(y);
                    }
                }
                None => {
                    out.insert(Monomial(e), d.clone());
                }
            }
        }
        let mut p = PolyMatrix { rows: self.rows, cols: self.cols, terms: out };
        p.prune();
        p
    }

    /// Swap `s` and `θ`.
    pub fn swap_s_theta(&self) -> PolyMatrix {
        self.rename(|v| match v {
            Var::S => Var::Theta,
            Var::Theta => Var::S,
            Var::Eta => Var::Eta,
        })
    }

    /// Definite integral in `var` between two limits.
    pub fn integrate(&self, var: Var, lower: Bound, upper: Bound) -> Result<PolyMatrix, PolyError> {
        for b in [lower, upper] {
            if let Bound::Var(v) = b {
                if v == var {
                    return Err(PolyError::UnknownBound(v.name().to_string()));
                }
            }
        }
        let n = self.rows * self.cols;
        let mut acc: HashMap<Monomial, Vec<AffineAcc>> = HashMap::new();
        for (m, d) in &self.terms {
            let k = m.exp(var);
            let mut base = *m;
            base.0[var.index()] = 0;
            let inv = Num::ratio(1, k as i64 + 1);
            for (bound, sign) in [(upper, Num::ONE), (lower, -Num::ONE)] {
                let (mono, factor) = match bound {
                    Bound::Const(c) => (base, c.powi(k as u32 + 1)),
                    Bound::Var(v) => {
                        let mut e = base;
                        e.0[v.index()] += k + 1;
                        (e, Num::ONE)
                    }
                };
                let c = factor * inv * sign;
                if c.is_zero() {
                    continue;
                }
                let slot = acc.entry(mono).or_insert_with(|| vec![AffineAcc::default(); n]);
                for (s, x) in slot.iter_mut().zip(d) {
                    s.add_scaled(x, c);
                }
            }
        }
        let terms = acc
            .into_iter()
            .map(|(m, data)| (m, data.into_iter().map(AffineAcc::finish).collect::<Vec<_>>()));
        let mut p = PolyMatrix { rows: self.rows, cols: self.cols, terms: terms.collect() };
        p.prune();
        Ok(p)
    }

    /// Substitute values for some spatial variables.
    pub fn substitute(&self, point: &Point) -> PolyMatrix {
        let n = self.rows * self.cols;
        let mut acc: BTreeMap<Monomial, Vec<AffineAcc>> = BTreeMap::new();
        for (m, d) in &self.terms {
            let mut mono = *m;
            let mut factor = Num::ONE;
            for v in Var::ALL {
                if let Some(x) = point.values[v.index()] {
                    factor = factor * x.powi(m.exp(v) as u32);
                    mono.0[v.index()] = 0;
                }
            }
            let slot = acc.entry(mono).or_insert_with(|| vec![AffineAcc::default(); n]);
            for (s, x) in slot.iter_mut().zip(d) {
                s.add_scaled(x, factor);
            }
        }
        let terms = acc
            .into_iter()
            .map(|(m, data)| (m, data.into_iter().map(AffineAcc::finish).collect::<Vec<_>>()));
        let mut p = PolyMatrix { rows: self.rows, cols: self.cols, terms: terms.collect() };
        p.prune();
        p
    }

    /// Substitute decision-variable values, leaving unassigned ones symbolic.
    pub fn assign(&self, assignment: &Assignment) -> PolyMatrix {
        let mut p = PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            terms: self
                .terms
                .iter()
                .map(|(m, d)| (*m, d.iter().map(|c| c.substitute(assignment)).collect()))
                .collect(),
        };
        p.prune();
        p
    }

    /// Exact evaluation of a decision-free polynomial; row-major values.
    pub fn eval_exact(&self, point: &Point) -> Result<Vec<Num>, PolyError> {
        let p = self.substitute(point);
        let mut out = vec![Num::ZERO; self.rows * self.cols];
        for (m, d) in &p.terms {
            if *m != Monomial::ONE {
                let missing = Var::ALL.iter().find(|v| m.exp(**v) > 0).map_or("?", |v| v.name());
                return Err(PolyError::UnassignedSymbol(missing.to_string()));
            }
            for (o, c) in out.iter_mut().zip(d) {
                if let Some((v, _)) = c.terms().first() {
                    return Err(PolyError::UnassignedSymbol(v.to_string()));
                }
                *o = c.constant_part();
            }
        }
        Ok(out)
    }

    /// Numeric evaluation with all spatial symbols in `point` and all
    /// decision variables in `assignment`.
    pub fn eval(&self, point: &Point, assignment: &Assignment) -> Result<DMatrix<f64>, PolyError> {
        let p = self.assign(assignment);
        let vals = p.eval_exact(point)?;
        Ok(DMatrix::from_row_iterator(
            self.rows,
            self.cols,
            vals.iter().map(|v| v.to_f64()),
        ))
    }

    /// Pre-converted form for fast repeated evaluation.
    pub fn to_numeric(&self, assignment: &Assignment) -> Result<NumericPoly, PolyError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, d) in &self.terms {
            let vals = d.iter().map(|c| c.eval(assignment)).collect::<Result<Vec<_>, _>>()?;
            terms.push((*m, DMatrix::from_row_slice(self.rows, self.cols, &vals)));
        }
        Ok(NumericPoly { rows: self.rows, cols: self.cols, terms })
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .flatten()
            .map(|c| c.max_abs_coeff())
            .fold(0.0, f64::max)
    }

    pub fn submatrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> PolyMatrix {
        let (nr, nc) = (rows.len(), cols.len());
        let terms = self.terms.iter().map(|(m, d)| {
            let mut t = Vec::with_capacity(nr * nc);
            for i in rows.clone() {
                for j in cols.clone() {
                    t.push(d[i * self.cols + j].clone());
                }
            }
            (*m, t)
        });
        let mut p = PolyMatrix { rows: nr, cols: nc, terms: terms.collect() };
        p.prune();
        p
    }

    /// Place `self` inside a larger zero matrix at offset `(r0, c0)`.
    pub fn embed(&self, rows: usize, cols: usize, r0: usize, c0: usize) -> PolyMatrix {
        assert!(r0 + self.rows <= rows && c0 + self.cols <= cols, "embed out of range");
        let terms = self.terms.iter().map(|(m, d)| {
            let mut t = vec![ScalarAffine::zero(); rows * cols];
            for i in 0..self.rows {
                for j in 0..self.cols {
                    t[(r0 + i) * cols + c0 + j] = d[i * self.cols + j].clone();
                }
            }
            (*m, t)
        });
        PolyMatrix { rows, cols, terms: terms.collect() }
    }

    /// Block matrix from a grid of parts; row heights and column widths must agree.
    pub fn block(grid: &[Vec<&PolyMatrix>]) -> Result<PolyMatrix, PolyError> {
        let heights: Vec<usize> = grid.iter().map(|row| row.first().map_or(0, |p| p.rows)).collect();
        let widths: Vec<usize> = grid.first().map_or(vec![], |row| row.iter().map(|p| p.cols).collect());
        for (i, row) in grid.iter().enumerate() {
            if row.len() != widths.len() {
                return Err(PolyError::ShapeMismatch("ragged block grid".into()));
            }
            for (j, p) in row.iter().enumerate() {
                if p.rows != heights[i] || p.cols != widths[j] {
                    return Err(PolyError::ShapeMismatch(format!(
                        "block ({i},{j}) is {:?}, expected ({}, {})",
                        p.shape(),
                        heights[i],
                        widths[j]
                    )));
                }
            }
        }
        let rows: usize = heights.iter().sum();
        let cols: usize = widths.iter().sum();
        let mut out = PolyMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, p) in row.iter().enumerate() {
                if !p.is_zero() {
                    out = out.add(&p.embed(rows, cols, r0, c0))?;
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Ok(out)
    }

    pub fn hcat(parts: &[&PolyMatrix]) -> Result<PolyMatrix, PolyError> {
        Self::block(&[parts.to_vec()])
    }

    pub fn vcat(parts: &[&PolyMatrix]) -> Result<PolyMatrix, PolyError> {
        let grid: Vec<Vec<&PolyMatrix>> = parts.iter().map(|p| vec![*p]).collect();
        if grid.is_empty() {
            return Ok(PolyMatrix::zeros(0, 0));
        }
        Self::block(&grid)
    }

    pub fn blkdiag(parts: &[&PolyMatrix]) -> PolyMatrix {
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut terms: BTreeMap<Monomial, Vec<ScalarAffine>> = BTreeMap::new();
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            for (m, d) in &p.terms {
                let slot = terms
                    .entry(*m)
                    .or_insert_with(|| vec![ScalarAffine::zero(); rows * cols]);
                for i in 0..p.rows {
                    for j in 0..p.cols {
                        slot[(r0 + i) * cols + c0 + j] = d[i * p.cols + j].clone();
                    }
                }
            }
            r0 += p.rows;
            c0 += p.cols;
        }
        PolyMatrix { rows, cols, terms }
    }

    /// `self ⊗ I_n`.
    pub fn kron_identity(&self, n: usize) -> PolyMatrix {
        let (r, c) = (self.rows * n, self.cols * n);
        let terms = self.terms.iter().map(|(m, d)| {
            let mut t = vec![ScalarAffine::zero(); r * c];
            for i in 0..self.rows {
                for j in 0..self.cols {
                    for k in 0..n {
                        t[(i * n + k) * c + j * n + k] = d[i * self.cols + j].clone();
                    }
                }
            }
            (*m, t)
        });
        PolyMatrix { rows: r, cols: c, terms: terms.collect() }
    }

    /// Entry `(i, j)` rendered as a polynomial string.
    pub fn entry_string(&self, i: usize, j: usize) -> String {
        let mut parts: Vec<String> = Vec::new();
        for (m, d) in &self.terms {
            let c = &d[i * self.cols + j];
            if c.is_zero() {
                continue;
            }
            let coeff = if c.is_constant() {
                c.constant_part().to_string()
            } else {
                format!("({c})")
            };
            parts.push(if *m == Monomial::ONE {
                coeff
            } else if c.is_constant() && c.constant_part() == Num::ONE {
                m.to_string()
            } else if c.is_constant() && c.constant_part() == -Num::ONE {
                format!("-{m}")
            } else {
                format!("{coeff}*{m}")
            });
        }
        if parts.is_empty() {
            return "0".to_string();
        }
        let mut out = parts[0].clone();
        for p in &parts[1..] {
            match p.strip_prefix('-') {
                Some(rest) => {
                    out.push_str(" - ");
                    out.push_str(rest);
                }
                None => {
                    out.push_str(" + ");
                    out.push_str(p);
                }
            }
        }
        out
    }
}

impl fmt::Display for PolyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.entry_string(i, j))?;
            }
        }
        write!(f, "]")
    }
}

/// Decision-free polynomial with `f64` coefficient matrices.
#[derive(Clone, Debug)]
pub struct NumericPoly {
    rows: usize,
    cols: usize,
    terms: Vec<(Monomial, DMatrix<f64>)>,
}

impl NumericPoly {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, s: f64, theta: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (m, c) in &self.terms {
            let w = s.powi(m.0[0] as i32) * theta.powi(m.0[1] as i32);
            out += c * w;
        }
        out
    }

    /// Evaluate entry `(i, j)` only.
    pub fn eval_entry(&self, i: usize, j: usize, s: f64, theta: f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c[(i, j)] * s.powi(m.0[0] as i32) * theta.powi(m.0[1] as i32))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s() -> PolyMatrix {
        PolyMatrix::var(Var::S)
    }
    fn t() -> PolyMatrix {
        PolyMatrix::var(Var::Theta)
    }

    #[test]
    fn disjoint_monomials_add() {
        let lhs = s().kron_identity(2);
        let rhs = t().kron_identity(2);
        let sum = lhs.add(&rhs).unwrap();
        assert_eq!(sum.num_terms(), 2);
        assert_eq!(sum.entry_string(0, 0), "t + s");
        assert_eq!(sum.entry_string(0, 1), "0");
    }

    #[test]
    fn square_of_s() {
        let sq = s().mul(&s()).unwrap();
        assert_eq!(sq, PolyMatrix::scalar_term(Num::ONE, Monomial::new(2, 0)));
    }

    #[test]
    fn affine_times_constant() {
        // (2 + x1 s) * (3 s) = 6 s + 3 x1 s^2
        let x1 = DecVar(1);
        let lhs = PolyMatrix::scalar(Num::int(2))
            .add(&s().scale_affine(&ScalarAffine::var(x1)).unwrap())
            .unwrap();
        let rhs = s().scale(Num::int(3));
        let prod = lhs.mul(&rhs).unwrap();
        assert_eq!(prod.coeff(Monomial::new(1, 0), 0, 0), ScalarAffine::constant(Num::int(6)));
        assert_eq!(
            prod.coeff(Monomial::new(2, 0), 0, 0),
            ScalarAffine::from_terms(Num::ZERO, vec![(x1, Num::int(3))])
        );
        assert_eq!(prod.num_terms(), 2);
        assert_eq!(prod.degree(), 2);
        assert_eq!(lhs.mul(&lhs), Err(PolyError::BilinearProduct));
    }

    #[test]
    fn shape_mismatch_reported() {
        let a = PolyMatrix::identity(2);
        let b = PolyMatrix::identity(3);
        assert!(matches!(a.add(&b), Err(PolyError::ShapeMismatch(_))));
        assert!(matches!(a.mul(&b), Err(PolyError::ShapeMismatch(_))));
    }

    #[test]
    fn integrals() {
        let one = PolyMatrix::scalar(Num::ONE);
        let r = one
            .integrate(Var::Theta, Bound::Const(Num::ZERO), Bound::Var(Var::S))
            .unwrap();
        assert_eq!(r, s());
        let r = t()
            .integrate(Var::Theta, Bound::Const(Num::ZERO), Bound::Const(Num::ONE))
            .unwrap();
        assert_eq!(r, PolyMatrix::scalar(Num::ratio(1, 2)));
        // ∫_θ^s (s - η) dη = s²/2 - sθ + θ²/2
        let integrand = s().sub(&PolyMatrix::var(Var::Eta)).unwrap();
        let r = integrand
            .integrate(Var::Eta, Bound::Var(Var::Theta), Bound::Var(Var::S))
            .unwrap();
        assert_eq!(r.coeff(Monomial::new(2, 0), 0, 0).constant_part(), Num::ratio(1, 2));
        assert_eq!(r.coeff(Monomial::new(1, 1), 0, 0).constant_part(), Num::int(-1));
        assert_eq!(r.coeff(Monomial::new(0, 2), 0, 0).constant_part(), Num::ratio(1, 2));
        assert_eq!(r.num_terms(), 3);
        for &(sv, tv) in &[(0.3, 0.7), (1.5, -2.0), (0.0, 4.0)] {
            let v = r.eval(&Point::new().s(sv).theta(tv), &Assignment::new()).unwrap()[(0, 0)];
            assert!((v - (sv - tv) * (sv - tv) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn integration_bound_must_differ_from_variable() {
        let r = s().integrate(Var::S, Bound::Var(Var::S), Bound::Const(Num::ONE));
        assert!(matches!(r, Err(PolyError::UnknownBound(_))));
    }

    #[test]
    fn evaluation() {
        let sq = s().mul(&s()).unwrap();
        assert_eq!(sq.eval_exact(&Point::new().s(3)).unwrap(), vec![Num::int(9)]);
        let x1 = DecVar(1);
        let p = s()
            .scale(Num::int(6))
            .add(&sq.scale_affine(&ScalarAffine::var(x1).scale(Num::int(3))).unwrap())
            .unwrap();
        let mut a = Assignment::new();
        a.insert(x1, 2.0);
        assert_eq!(p.eval(&Point::new().s(1), &a).unwrap()[(0, 0)], 12.0);
        let z = PolyMatrix::zeros(2, 3);
        assert_eq!(z.eval(&Point::new(), &a).unwrap(), DMatrix::zeros(2, 3));
        assert!(matches!(sq.eval_exact(&Point::new()), Err(PolyError::UnassignedSymbol(_))));
        assert!(matches!(p.eval(&Point::new().s(1), &Assignment::new()), Err(PolyError::UnassignedSymbol(_))));
    }

    #[test]
    fn block_helpers() {
        let a = PolyMatrix::scalar(Num::int(1));
        let b = s();
        let d = PolyMatrix::blkdiag(&[&a, &b]);
        assert_eq!(d.shape(), (2, 2));
        assert_eq!(d.entry_string(1, 1), "s");
        let h = PolyMatrix::hcat(&[&a, &b]).unwrap();
        assert_eq!(h.to_string(), "[1, s]");
        let v = PolyMatrix::vcat(&[&a, &b]).unwrap();
        assert_eq!(v.transpose(), h);
        assert_eq!(d.submatrix(1..2, 1..2), b);
    }
}
