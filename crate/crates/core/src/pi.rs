//! 4-PI operators on `ℝ^{n1} × L2^{n2}[a, b]` and their *-algebra.
//!
//! An operator with blocks `{P, Q1, Q2, R0, R1, R2}` acts as
//!
//! ```text
//! y      = P x + ∫_a^b Q1(s) X(s) ds
//! Y(s)   = Q2(s) x + R0(s) X(s) + ∫_a^s R1(s,θ) X(θ) dθ + ∫_s^b R2(s,θ) X(θ) dθ
//! ```
//!
//! Concatenated operators always list all finite components first and all
//! distributed components second.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Num;
use crate::polynomial::{Assignment, Bound, PolyError, PolyMatrix, ScalarAffine, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PiError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("operators live on different domains")]
    DomainMismatch,
    #[error("product of two operands that both carry decision variables")]
    BilinearProduct,
    #[error("block {block} depends on a variable it may not contain")]
    InvalidKernel { block: &'static str },
    #[error("invalid domain [{0}, {1}]")]
    InvalidDomain(String, String),
    #[error(transparent)]
    Poly(PolyError),
}

impl From<PolyError> for PiError {
    fn from(e: PolyError) -> Self {
        match e {
            PolyError::BilinearProduct => PiError::BilinearProduct,
            PolyError::ShapeMismatch(m) => PiError::ShapeMismatch(m),
            other => PiError::Poly(other),
        }
    }
}

/// Number of finite and distributed components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PiDims {
    pub finite: usize,
    pub distributed: usize,
}

impl PiDims {
    pub const fn new(finite: usize, distributed: usize) -> Self {
        Self { finite, distributed }
    }

    pub fn is_empty(&self) -> bool {
        self.finite == 0 && self.distributed == 0
    }

    pub fn sum(parts: impl IntoIterator<Item = PiDims>) -> PiDims {
        parts.into_iter().fold(PiDims::new(0, 0), |acc, d| {
            PiDims::new(acc.finite + d.finite, acc.distributed + d.distributed)
        })
    }
}

impl std::ops::Mul<usize> for PiDims {
    type Output = PiDims;
    fn mul(self, k: usize) -> PiDims {
        PiDims::new(self.finite * k, self.distributed * k)
    }
}

impl std::ops::Add for PiDims {
    type Output = PiDims;
    fn add(self, rhs: PiDims) -> PiDims {
        PiDims::new(self.finite + rhs.finite, self.distributed + rhs.distributed)
    }
}

impl fmt::Display for PiDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.finite, self.distributed)
    }
}

/// Spatial interval `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub a: Num,
    pub b: Num,
}

impl Domain {
    pub fn new(a: Num, b: Num) -> Result<Self, PiError> {
        if !(a < b) {
            return Err(PiError::InvalidDomain(a.to_string(), b.to_string()));
        }
        Ok(Self { a, b })
    }

    pub fn unit() -> Self {
        Self { a: Num::ZERO, b: Num::ONE }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).to_f64()
    }

    fn lower(&self) -> Bound {
        Bound::Const(self.a)
    }

    fn upper(&self) -> Bound {
        Bound::Const(self.b)
    }
}

/// The six kernel blocks of a 4-PI operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PiBlocks {
    pub p: PolyMatrix,
    pub q1: PolyMatrix,
    pub q2: PolyMatrix,
    pub r0: PolyMatrix,
    pub r1: PolyMatrix,
    pub r2: PolyMatrix,
}

impl PiBlocks {
    /// All-zero blocks shaped for `out × in`.
    pub fn zeros(out: PiDims, inp: PiDims) -> Self {
        Self {
            p: PolyMatrix::zeros(out.finite, inp.finite),
            q1: PolyMatrix::zeros(out.finite, inp.distributed),
            q2: PolyMatrix::zeros(out.distributed, inp.finite),
            r0: PolyMatrix::zeros(out.distributed, inp.distributed),
            r1: PolyMatrix::zeros(out.distributed, inp.distributed),
            r2: PolyMatrix::zeros(out.distributed, inp.distributed),
        }
    }

    fn all(&self) -> [(&'static str, &PolyMatrix); 6] {
        [
            ("P", &self.p),
            ("Q1", &self.q1),
            ("Q2", &self.q2),
            ("R0", &self.r0),
            ("R1", &self.r1),
            ("R2", &self.r2),
        ]
    }

    fn map(&self, f: impl Fn(&PolyMatrix) -> PolyMatrix) -> PiBlocks {
        PiBlocks {
            p: f(&self.p),
            q1: f(&self.q1),
            q2: f(&self.q2),
            r0: f(&self.r0),
            r1: f(&self.r1),
            r2: f(&self.r2),
        }
    }

    fn try_map(&self, f: impl Fn(&PolyMatrix) -> Result<PolyMatrix, PolyError>) -> Result<PiBlocks, PolyError> {
        Ok(PiBlocks {
            p: f(&self.p)?,
            q1: f(&self.q1)?,
            q2: f(&self.q2)?,
            r0: f(&self.r0)?,
            r1: f(&self.r1)?,
            r2: f(&self.r2)?,
        })
    }
}

/// Matrix-valued polynomial input `(x, X(s))` for symbolic application.
#[derive(Clone, Debug, PartialEq)]
pub struct PiVector {
    pub finite: PolyMatrix,
    pub distributed: PolyMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiOperator {
    out_dims: PiDims,
    in_dims: PiDims,
    domain: Domain,
    blocks: PiBlocks,
}

impl PiOperator {
    /// Validate shapes and variable usage of every block.
    pub fn new(out_dims: PiDims, in_dims: PiDims, domain: Domain, blocks: PiBlocks) -> Result<Self, PiError> {
        let expected = PiBlocks::zeros(out_dims, in_dims);
        for ((name, got), (_, want)) in blocks.all().into_iter().zip(expected.all()) {
            if got.shape() != want.shape() {
                return Err(PiError::ShapeMismatch(format!(
                    "block {name} is {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
            let vars = got.variables();
            let allowed: &[Var] = match name {
                "P" => &[],
                "Q1" | "Q2" | "R0" => &[Var::S],
                _ => &[Var::S, Var::Theta],
            };
            if vars.iter().any(|v| !allowed.contains(v)) {
                return Err(PiError::InvalidKernel { block: name });
            }
        }
        Ok(Self { out_dims, in_dims, domain, blocks })
    }

    pub fn zero(out_dims: PiDims, in_dims: PiDims, domain: Domain) -> Self {
        Self { out_dims, in_dims, domain, blocks: PiBlocks::zeros(out_dims, in_dims) }
    }

    pub fn identity(dims: PiDims, domain: Domain) -> Self {
        let mut blocks = PiBlocks::zeros(dims, dims);
        blocks.p = PolyMatrix::identity(dims.finite);
        blocks.r0 = PolyMatrix::identity(dims.distributed);
        Self { out_dims: dims, in_dims: dims, domain, blocks }
    }

    /// Pure multiplication by `r0(s)` on `L2^n`.
    pub fn multiplier(r0: PolyMatrix, domain: Domain) -> Result<Self, PiError> {
        let out = PiDims::new(0, r0.rows());
        let inp = PiDims::new(0, r0.cols());
        let mut blocks = PiBlocks::zeros(out, inp);
        blocks.r0 = r0;
        Self::new(out, inp, domain, blocks)
    }

    /// Pure integral operator with lower kernel `r1` and upper kernel `r2`.
    pub fn integral(r1: PolyMatrix, r2: PolyMatrix, domain: Domain) -> Result<Self, PiError> {
        let out = PiDims::new(0, r1.rows());
        let inp = PiDims::new(0, r1.cols());
        let mut blocks = PiBlocks::zeros(out, inp);
        blocks.r1 = r1;
        blocks.r2 = r2;
        Self::new(out, inp, domain, blocks)
    }

    /// Constant matrix acting on finite components only.
    pub fn matrix(p: PolyMatrix, domain: Domain) -> Result<Self, PiError> {
        let out = PiDims::new(p.rows(), 0);
        let inp = PiDims::new(p.cols(), 0);
        let mut blocks = PiBlocks::zeros(out, inp);
        blocks.p = p;
        Self::new(out, inp, domain, blocks)
    }

    pub fn out_dims(&self) -> PiDims {
        self.out_dims
    }

    pub fn in_dims(&self) -> PiDims {
        self.in_dims
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn blocks(&self) -> &PiBlocks {
        &self.blocks
    }

    pub fn p(&self) -> &PolyMatrix {
        &self.blocks.p
    }
    pub fn q1(&self) -> &PolyMatrix {
        &self.blocks.q1
    }
    pub fn q2(&self) -> &PolyMatrix {
        &self.blocks.q2
    }
    pub fn r0(&self) -> &PolyMatrix {
        &self.blocks.r0
    }
    pub fn r1(&self) -> &PolyMatrix {
        &self.blocks.r1
    }
    pub fn r2(&self) -> &PolyMatrix {
        &self.blocks.r2
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.all().iter().all(|(_, b)| b.is_zero())
    }

    pub fn has_decision_vars(&self) -> bool {
        self.blocks.all().iter().any(|(_, b)| b.has_decision_vars())
    }

    pub fn decision_vars(&self) -> std::collections::BTreeSet<crate::polynomial::DecVar> {
        self.blocks.all().iter().flat_map(|(_, b)| b.decision_vars()).collect()
    }

    /// Largest total degree over the kernels.
    pub fn degree(&self) -> u32 {
        self.blocks.all().iter().map(|(_, b)| b.degree()).max().unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.blocks.all().iter().map(|(_, b)| b.max_abs_coeff()).fold(0.0, f64::max)
    }

    fn check_same(&self, rhs: &PiOperator) -> Result<(), PiError> {
        if self.domain != rhs.domain {
            return Err(PiError::DomainMismatch);
        }
        if self.out_dims != rhs.out_dims || self.in_dims != rhs.in_dims {
            return Err(PiError::ShapeMismatch(format!(
                "{}→{} vs {}→{}",
                self.in_dims, self.out_dims, rhs.in_dims, rhs.out_dims
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &PiOperator) -> Result<PiOperator, PiError> {
        self.check_same(rhs)?;
        let b = &rhs.blocks;
        Ok(PiOperator {
            blocks: PiBlocks {
                p: self.blocks.p.add(&b.p)?,
                q1: self.blocks.q1.add(&b.q1)?,
                q2: self.blocks.q2.add(&b.q2)?,
                r0: self.blocks.r0.add(&b.r0)?,
                r1: self.blocks.r1.add(&b.r1)?,
                r2: self.blocks.r2.add(&b.r2)?,
            },
            ..self.clone()
        })
    }

    pub fn sub(&self, rhs: &PiOperator) -> Result<PiOperator, PiError> {
        self.add(&rhs.neg())
    }

    pub fn neg(&self) -> PiOperator {
        self.scale(-Num::ONE)
    }

    pub fn scale(&self, c: Num) -> PiOperator {
        PiOperator { blocks: self.blocks.map(|b| b.scale(c)), ..self.clone() }
    }

    /// Scale by an affine scalar; fails if both carry decision variables.
    pub fn scale_affine(&self, c: &ScalarAffine) -> Result<PiOperator, PiError> {
        Ok(PiOperator { blocks: self.blocks.try_map(|b| b.scale_affine(c))?, ..self.clone() })
    }

    /// Substitute decision-variable values.
    pub fn assign(&self, assignment: &Assignment) -> PiOperator {
        PiOperator { blocks: self.blocks.map(|b| b.assign(assignment)), ..self.clone() }
    }

    /// Composition `self ∘ rhs`.
    pub fn compose(&self, rhs: &PiOperator) -> Result<PiOperator, PiError> {
        if self.domain != rhs.domain {
            return Err(PiError::DomainMismatch);
        }
        if self.in_dims != rhs.out_dims {
            return Err(PiError::ShapeMismatch(format!(
                "compose: lhs input {} vs rhs output {}",
                self.in_dims, rhs.out_dims
            )));
        }
        if self.has_decision_vars() && rhs.has_decision_vars() {
            return Err(PiError::BilinearProduct);
        }
        let (lo, hi) = (self.domain.lower(), self.domain.upper());
        let s = Bound::Var(Var::S);
        let th = Bound::Var(Var::Theta);
        let a = &self.blocks;
        let b = &rhs.blocks;

        // f(s) -> f(η)
        let s_to_eta = |p: &PolyMatrix| p.rename(|v| if v == Var::S { Var::Eta } else { v });
        // k(s,θ) -> k(s,η)
        let theta_to_eta = |p: &PolyMatrix| p.rename(|v| if v == Var::Theta { Var::Eta } else { v });
        // k(s,θ) -> k(η,s)
        let to_eta_s = |p: &PolyMatrix| {
            p.rename(|v| match v {
                Var::S => Var::Eta,
                Var::Theta => Var::S,
                Var::Eta => Var::Eta,
            })
        };
        // f(s) -> f(θ)
        let s_to_theta = |p: &PolyMatrix| p.rename(|v| if v == Var::S { Var::Theta } else { v });
        let int_eta = |p: PolyMatrix, l: Bound, u: Bound| p.integrate(Var::Eta, l, u);
        let sum = |parts: Vec<PolyMatrix>| -> Result<PolyMatrix, PolyError> {
            let mut it = parts.into_iter();
            let mut acc = it.next().expect("at least one term");
            for p in it {
                acc = acc.add(&p)?;
            }
            Ok(acc)
        };

        let q1a_eta = s_to_eta(&a.q1);
        let q2b_eta = s_to_eta(&b.q2);
        let r1a_s_eta = theta_to_eta(&a.r1);
        let r2a_s_eta = theta_to_eta(&a.r2);
        let r1b_eta_theta = s_to_eta(&b.r1);
        let r2b_eta_theta = s_to_eta(&b.r2);
        let r1b_eta_s = to_eta_s(&b.r1);
        let r2b_eta_s = to_eta_s(&b.r2);
        let q1b_theta = s_to_theta(&b.q1);

        let p = sum(vec![a.p.mul(&b.p)?, int_eta(q1a_eta.mul(&q2b_eta)?, lo, hi)?])?;

        let q1 = sum(vec![
            a.p.mul(&b.q1)?,
            a.q1.mul(&b.r0)?,
            int_eta(q1a_eta.mul(&r1b_eta_s)?, s, hi)?,
            int_eta(q1a_eta.mul(&r2b_eta_s)?, lo, s)?,
        ])?;

        let q2 = sum(vec![
            a.q2.mul(&b.p)?,
            a.r0.mul(&b.q2)?,
            int_eta(r1a_s_eta.mul(&q2b_eta)?, lo, s)?,
            int_eta(r2a_s_eta.mul(&q2b_eta)?, s, hi)?,
        ])?;

        let r0 = a.r0.mul(&b.r0)?;

        let q2a_q1b = a.q2.mul(&q1b_theta)?;
        let r0b_theta = s_to_theta(&b.r0);
        let r1a_r1b = r1a_s_eta.mul(&r1b_eta_theta)?;
        let r1a_r2b = r1a_s_eta.mul(&r2b_eta_theta)?;
        let r2a_r1b = r2a_s_eta.mul(&r1b_eta_theta)?;
        let r2a_r2b = r2a_s_eta.mul(&r2b_eta_theta)?;

        let r1 = sum(vec![
            q2a_q1b.clone(),
            a.r0.mul(&b.r1)?,
            a.r1.mul(&r0b_theta)?,
            int_eta(r1a_r1b, th, s)?,
            int_eta(r1a_r2b.clone(), lo, th)?,
            int_eta(r2a_r1b.clone(), s, hi)?,
        ])?;

        let r2 = sum(vec![
            q2a_q1b,
            a.r0.mul(&b.r2)?,
            a.r2.mul(&r0b_theta)?,
            int_eta(r1a_r2b, lo, s)?,
            int_eta(r2a_r1b, th, hi)?,
            int_eta(r2a_r2b, s, th)?,
        ])?;

        Ok(PiOperator {
            out_dims: self.out_dims,
            in_dims: rhs.in_dims,
            domain: self.domain,
            blocks: PiBlocks { p, q1, q2, r0, r1, r2 },
        })
    }

    /// Adjoint with respect to `⟨(u,U),(v,V)⟩ = uᵀv + ∫ Uᵀ V`.
    pub fn adjoint(&self) -> PiOperator {
        let b = &self.blocks;
        PiOperator {
            out_dims: self.in_dims,
            in_dims: self.out_dims,
            domain: self.domain,
            blocks: PiBlocks {
                p: b.p.transpose(),
                q1: b.q2.transpose(),
                q2: b.q1.transpose(),
                r0: b.r0.transpose(),
                r1: b.r2.swap_s_theta().transpose(),
                r2: b.r1.swap_s_theta().transpose(),
            },
        }
    }

    /// Exact coefficient-level self-adjointness.
    pub fn is_self_adjoint(&self) -> bool {
        self.out_dims == self.in_dims && *self == self.adjoint()
    }

    /// Block operator from a grid; every row shares output dims, every
    /// column shares input dims.
    pub fn block(grid: &[Vec<&PiOperator>]) -> Result<PiOperator, PiError> {
        let first = grid
            .first()
            .and_then(|r| r.first())
            .ok_or_else(|| PiError::ShapeMismatch("empty block grid".into()))?;
        let domain = first.domain;
        let ncols = grid[0].len();
        for (i, row) in grid.iter().enumerate() {
            if row.len() != ncols {
                return Err(PiError::ShapeMismatch("ragged block grid".into()));
            }
            for (j, op) in row.iter().enumerate() {
                if op.domain != domain {
                    return Err(PiError::DomainMismatch);
                }
                if op.out_dims != row[0].out_dims || op.in_dims != grid[0][j].in_dims {
                    return Err(PiError::ShapeMismatch(format!(
                        "block ({i},{j}) maps {}→{}, expected {}→{}",
                        op.in_dims, op.out_dims, grid[0][j].in_dims, row[0].out_dims
                    )));
                }
            }
        }
        let out_dims = PiDims::sum(grid.iter().map(|r| r[0].out_dims));
        let in_dims = PiDims::sum(grid[0].iter().map(|op| op.in_dims));
        let assemble = |pick: fn(&PiBlocks) -> &PolyMatrix| -> Result<PolyMatrix, PolyError> {
            let g: Vec<Vec<&PolyMatrix>> =
                grid.iter().map(|r| r.iter().map(|op| pick(&op.blocks)).collect()).collect();
            PolyMatrix::block(&g)
        };
        let blocks = PiBlocks {
            p: assemble(|b| &b.p)?,
            q1: assemble(|b| &b.q1)?,
            q2: assemble(|b| &b.q2)?,
            r0: assemble(|b| &b.r0)?,
            r1: assemble(|b| &b.r1)?,
            r2: assemble(|b| &b.r2)?,
        };
        Ok(PiOperator { out_dims, in_dims, domain, blocks })
    }

    pub fn hcat(parts: &[&PiOperator]) -> Result<PiOperator, PiError> {
        Self::block(&[parts.to_vec()])
    }

    pub fn vcat(parts: &[&PiOperator]) -> Result<PiOperator, PiError> {
        let grid: Vec<Vec<&PiOperator>> = parts.iter().map(|p| vec![*p]).collect();
        Self::block(&grid)
    }

    pub fn blkdiag(parts: &[&PiOperator]) -> Result<PiOperator, PiError> {
        let Some(first) = parts.first() else {
            return Err(PiError::ShapeMismatch("empty blkdiag".into()));
        };
        let zeros: Vec<Vec<PiOperator>> = parts
            .iter()
            .map(|r| parts.iter().map(|c| PiOperator::zero(r.out_dims, c.in_dims, first.domain)).collect())
            .collect();
        let grid: Vec<Vec<&PiOperator>> = (0..parts.len())
            .map(|i| (0..parts.len()).map(|j| if i == j { parts[i] } else { &zeros[i][j] }).collect())
            .collect();
        Self::block(&grid)
    }

    /// Rows/columns of the operator restricted to components.
    /// `out_sel` and `in_sel` are `(finite range, distributed range)`.
    pub fn sub_operator(
        &self,
        out_sel: (std::ops::Range<usize>, std::ops::Range<usize>),
        in_sel: (std::ops::Range<usize>, std::ops::Range<usize>),
    ) -> PiOperator {
        let b = &self.blocks;
        let (of, od) = out_sel;
        let (inf, ind) = in_sel;
        PiOperator {
            out_dims: PiDims::new(of.len(), od.len()),
            in_dims: PiDims::new(inf.len(), ind.len()),
            domain: self.domain,
            blocks: PiBlocks {
                p: b.p.submatrix(of.clone(), inf.clone()),
                q1: b.q1.submatrix(of, ind.clone()),
                q2: b.q2.submatrix(od.clone(), inf),
                r0: b.r0.submatrix(od.clone(), ind.clone()),
                r1: b.r1.submatrix(od.clone(), ind.clone()),
                r2: b.r2.submatrix(od, ind),
            },
        }
    }

    /// Exact image of a polynomial input. The operator must be decision-free.
    pub fn apply_symbolic(&self, input: &PiVector) -> Result<PiVector, PiError> {
        if input.finite.shape() != (self.in_dims.finite, 1)
            || input.distributed.shape() != (self.in_dims.distributed, 1)
        {
            return Err(PiError::ShapeMismatch(format!(
                "input shapes {:?}/{:?} for operator input {}",
                input.finite.shape(),
                input.distributed.shape(),
                self.in_dims
            )));
        }
        if !input.finite.variables().is_empty()
            || input.distributed.variables().iter().any(|v| *v != Var::S)
        {
            return Err(PiError::InvalidKernel { block: "input" });
        }
        let b = &self.blocks;
        let (lo, hi) = (self.domain.lower(), self.domain.upper());
        let x = &input.finite;
        let xs = &input.distributed;
        let xt = xs.rename(|v| if v == Var::S { Var::Theta } else { v });
        let finite = b
            .p
            .mul(x)?
            .add(&b.q1.mul(xs)?.integrate(Var::S, lo, hi)?)?;
        let distributed = b
            .q2
            .mul(x)?
            .add(&b.r0.mul(xs)?)?
            .add(&b.r1.mul(&xt)?.integrate(Var::Theta, lo, Bound::Var(Var::S))?)?
            .add(&b.r2.mul(&xt)?.integrate(Var::Theta, Bound::Var(Var::S), hi)?)?;
        Ok(PiVector { finite, distributed })
    }

    /// Structured text form used for golden-file comparisons.
    pub fn to_debug_text(&self) -> String {
        let mut out = format!(
            "PiOperator out={} in={} domain=[{}, {}]\n",
            self.out_dims, self.in_dims, self.domain.a, self.domain.b
        );
        for (name, block) in self.blocks.all() {
            out.push_str(&format!("{name} {}x{}:", block.rows(), block.cols()));
            if block.is_zero() {
                out.push_str(" 0\n");
                continue;
            }
            out.push('\n');
            for i in 0..block.rows() {
                let row: Vec<String> = (0..block.cols()).map(|j| block.entry_string(i, j)).collect();
                out.push_str(&format!("  [{}]\n", row.join(", ")));
            }
        }
        out
    }
}

impl fmt::Display for PiOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_debug_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::parse_poly;

    fn poly(s: &str) -> PolyMatrix {
        parse_poly(s).unwrap()
    }

    fn scalar_dims() -> PiDims {
        PiDims::new(1, 1)
    }

    fn sample_op() -> PiOperator {
        let d = scalar_dims();
        PiOperator::new(
            d,
            d,
            Domain::unit(),
            PiBlocks {
                p: poly("2"),
                q1: poly("s"),
                q2: poly("1 - s"),
                r0: poly("s^2"),
                r1: poly("s*t"),
                r2: poly("t - 1"),
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_and_zero() {
        let d = scalar_dims();
        let id = PiOperator::identity(d, Domain::unit());
        assert_eq!(id.compose(&id).unwrap(), id);
        let op = sample_op();
        assert_eq!(id.compose(&op).unwrap(), op);
        assert_eq!(op.compose(&id).unwrap(), op);
        let z = PiOperator::zero(d, d, Domain::unit());
        assert_eq!(op.add(&z).unwrap(), op);
        assert!(op.add(&op.neg()).unwrap().is_zero());
        assert!(z.compose(&op).unwrap().is_zero());
    }

    #[test]
    fn multiplier_sum() {
        let a = PiOperator::multiplier(poly("s"), Domain::unit()).unwrap();
        let b = PiOperator::multiplier(poly("1 - s"), Domain::unit()).unwrap();
        assert_eq!(a.add(&b).unwrap().r0(), &poly("1"));
        assert_eq!(a.compose(&a).unwrap().r0(), &poly("s^2"));
    }

    #[test]
    fn iterated_lower_integral() {
        let v = PiOperator::integral(poly("1"), poly("0"), Domain::unit()).unwrap();
        let vv = v.compose(&v).unwrap();
        assert_eq!(vv.r1(), &poly("s - t"));
        assert!(vv.r2().is_zero());
        assert!(vv.r0().is_zero());
    }

    #[test]
    fn adjoint_patterns() {
        let id = PiOperator::identity(PiDims::new(2, 1), Domain::unit());
        assert_eq!(id.adjoint(), id);
        let m = PiOperator::multiplier(poly("s").kron_identity(2), Domain::unit()).unwrap();
        assert!(m.is_self_adjoint());
        let v = PiOperator::integral(poly("s - t"), poly("0"), Domain::unit()).unwrap();
        let va = v.adjoint();
        assert!(va.r1().is_zero());
        assert_eq!(va.r2(), &poly("t - s"));
        let op = sample_op();
        assert_eq!(op.adjoint().adjoint(), op);
    }

    #[test]
    fn block_ops() {
        let d = PiDims::new(1, 1);
        let id = PiOperator::identity(d, Domain::unit());
        let big = PiOperator::blkdiag(&[&id, &id]).unwrap();
        assert_eq!(big, PiOperator::identity(PiDims::new(2, 2), Domain::unit()));
        let f = PiOperator::multiplier(poly("s"), Domain::unit()).unwrap();
        let g = PiOperator::multiplier(poly("1 + s^2"), Domain::unit()).unwrap();
        let fg = PiOperator::blkdiag(&[&f, &g]).unwrap();
        assert_eq!(
            fg.r0(),
            &PolyMatrix::blkdiag(&[&poly("s"), &poly("1 + s^2")])
        );
        let op = sample_op();
        let z = PiOperator::zero(d, d, Domain::unit());
        let v = PiOperator::vcat(&[&op, &z]).unwrap();
        assert_eq!(v.out_dims(), PiDims::new(2, 2));
        assert_eq!(v.sub_operator((0..1, 0..1), (0..1, 0..1)), op);
        assert!(PiOperator::hcat(&[&op, &f]).is_err());
    }

    #[test]
    fn invalid_blocks_rejected() {
        let d = scalar_dims();
        let mut blocks = PiBlocks::zeros(d, d);
        blocks.p = poly("s");
        assert!(matches!(
            PiOperator::new(d, d, Domain::unit(), blocks),
            Err(PiError::InvalidKernel { block: "P" })
        ));
        let mut blocks = PiBlocks::zeros(d, d);
        blocks.r0 = PolyMatrix::zeros(2, 1);
        assert!(matches!(PiOperator::new(d, d, Domain::unit(), blocks), Err(PiError::ShapeMismatch(_))));
    }

    #[test]
    fn apply_symbolic_basics() {
        let d = scalar_dims();
        let id = PiOperator::identity(d, Domain::unit());
        let input = PiVector { finite: poly("1"), distributed: poly("s") };
        assert_eq!(id.apply_symbolic(&input).unwrap(), input);
        let v = PiOperator::integral(poly("1"), poly("0"), Domain::unit()).unwrap();
        let out = v
            .apply_symbolic(&PiVector { finite: PolyMatrix::zeros(0, 1), distributed: poly("1") })
            .unwrap();
        assert_eq!(out.distributed, poly("s"));
    }

    #[test]
    fn compose_matches_sequential_application() {
        let a = sample_op();
        let b = PiOperator::new(
            scalar_dims(),
            scalar_dims(),
            Domain::unit(),
            PiBlocks {
                p: poly("-1"),
                q1: poly("s^2"),
                q2: poly("3"),
                r0: poly("1 + s"),
                r1: poly("t"),
                r2: poly("s - 2t"),
            },
        )
        .unwrap();
        let input = PiVector { finite: poly("2"), distributed: poly("1 - s + s^3") };
        let lhs = a.compose(&b).unwrap().apply_symbolic(&input).unwrap();
        let rhs = a.apply_symbolic(&b.apply_symbolic(&input).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn bilinear_compose_rejected() {
        let x = ScalarAffine::var(crate::polynomial::DecVar(0));
        let a = sample_op().scale_affine(&x).unwrap();
        assert_eq!(a.compose(&a), Err(PiError::BilinearProduct));
    }

    #[test]
    fn debug_text_golden() {
        let expected = "\
PiOperator out=(1, 1) in=(1, 1) domain=[0, 1]
P 1x1:
  [2]
Q1 1x1:
  [s]
Q2 1x1:
  [1 - s]
R0 1x1:
  [s^2]
R1 1x1:
  [s*t]
R2 1x1:
  [-1 + t]
";
        assert_eq!(sample_op().to_debug_text(), expected);
    }
}
