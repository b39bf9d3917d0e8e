//! Semidefinite feasibility programs assembled from operator constraints.
//!
//! Every scalar decision variable is a [`DecVar`]. Matrix variables are
//! [`PsdBlock`]s whose upper-triangular entries are consecutive variables in
//! column-major order; all other variables are free. Constraints are linear
//! equalities `expr = 0`.

mod backend;
mod param;
mod sdpa;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::pi::PiError;
use crate::polynomial::{Assignment, DecVar, PolyError, PolyMatrix, ScalarAffine};

pub use backend::{Backend, BackendOutcome, BackendStatus, ClarabelBackend, SolverOptions};
pub use param::{
    coefficient_equalities, constrain_sign, free_pi_param, free_self_adjoint_param, free_skew_param, gram_basis, nonneg_poly_param, positive_pi_param, symmetric_part, ParamDegrees,
    PositiveParam, Sign,
};
pub use sdpa::{export_sdpa, parse_sdpa, write_sdpa, SdpaData, SdpaEntry, SdpaError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("operator is not self-adjoint (asymmetry {0:e})")]
    NotSelfAdjoint(f64),
    #[error("degree must be nonnegative")]
    DegreeTooSmall,
    #[error("numerical failure in the conic solver: {0}")]
    NumericalFailure(String),
    #[error(transparent)]
    Pi(#[from] PiError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Symmetric matrix variable constrained to be positive semidefinite.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PsdBlock {
    pub name: String,
    pub size: usize,
    first: u32,
}

impl PsdBlock {
    fn tri_index(i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        j * (j + 1) / 2 + i
    }

    pub fn num_vars(&self) -> usize {
        self.size * (self.size + 1) / 2
    }

    /// Variable holding entry `(i, j)` (and `(j, i)`).
    pub fn var(&self, i: usize, j: usize) -> DecVar {
        DecVar(self.first + Self::tri_index(i, j) as u32)
    }

    /// Variables in column-major upper-triangular order.
    pub fn vars(&self) -> impl Iterator<Item = DecVar> + '_ {
        (0..self.num_vars() as u32).map(move |k| DecVar(self.first + k))
    }

    /// Position `(i, j)` with `i ≤ j` of the `k`-th variable of the block.
    pub fn position(&self, k: usize) -> (usize, usize) {
        let mut j = 0;
        while (j + 1) * (j + 2) / 2 <= k {
            j += 1;
        }
        (k - j * (j + 1) / 2, j)
    }

    /// The block as a symbolic symmetric matrix.
    pub fn matrix(&self) -> PolyMatrix {
        let n = self.size;
        let data = (0..n * n).map(|k| ScalarAffine::var(self.var(k / n, k % n))).collect();
        PolyMatrix::from_terms(n, n, [(crate::polynomial::Monomial::ONE, data)])
    }

    /// Numeric value under an assignment (missing entries read as 0).
    pub fn value(&self, assignment: &Assignment) -> DMatrix<f64> {
        DMatrix::from_fn(self.size, self.size, |i, j| assignment.get(&self.var(i, j)).copied().unwrap_or(0.0))
    }
}

/// A feasibility (or single-objective) semidefinite program.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SdpProblem {
    num_vars: u32,
    blocks: Vec<PsdBlock>,
    equalities: Vec<ScalarAffine>,
    objective: Option<ScalarAffine>,
    labels: BTreeMap<DecVar, String>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars as usize
    }

    pub fn blocks(&self) -> &[PsdBlock] {
        &self.blocks
    }

    pub fn equalities(&self) -> &[ScalarAffine] {
        &self.equalities
    }

    pub fn objective(&self) -> Option<&ScalarAffine> {
        self.objective.as_ref()
    }

    /// Fresh free scalar variable.
    pub fn free_var(&mut self, label: &str) -> DecVar {
        let v = DecVar(self.num_vars);
        self.num_vars += 1;
        self.labels.insert(v, label.to_string());
        v
    }

    /// Fresh PSD matrix variable of the given size.
    pub fn psd_block(&mut self, name: &str, size: usize) -> PsdBlock {
        assert!(size > 0, "PSD blocks must be nonempty");
        let block = PsdBlock { name: name.to_string(), size, first: self.num_vars };
        self.num_vars += block.num_vars() as u32;
        self.blocks.push(block.clone());
        block
    }

    /// Add `expr = 0`. Trivially satisfied constraints are dropped.
    pub fn add_equality(&mut self, expr: ScalarAffine) {
        if !expr.is_zero() {
            self.equalities.push(expr);
        }
    }

    pub fn add_equalities(&mut self, exprs: impl IntoIterator<Item = ScalarAffine>) {
        for e in exprs {
            self.add_equality(e);
        }
    }

    /// Maximize `expr`.
    pub fn maximize(&mut self, expr: ScalarAffine) {
        self.objective = Some(expr);
    }

    pub fn label(&self, v: DecVar) -> Option<&str> {
        self.labels.get(&v).map(|s| s.as_str())
    }

    /// Variables not owned by any PSD block.
    pub fn free_vars(&self) -> Vec<DecVar> {
        let mut owned = vec![false; self.num_vars as usize];
        for b in &self.blocks {
            for v in b.vars() {
                owned[v.0 as usize] = true;
            }
        }
        (0..self.num_vars).filter(|k| !owned[*k as usize]).map(DecVar).collect()
    }

    /// Stable text digest of the problem data.
    pub fn fingerprint(&self) -> String {
        let mut out = format!("vars {}\n", self.num_vars);
        for b in &self.blocks {
            out.push_str(&format!("block {} {} {}\n", b.name, b.size, b.first));
        }
        for e in &self.equalities {
            out.push_str(&format!("{e}\n"));
        }
        if let Some(o) = &self.objective {
            out.push_str(&format!("max {o}\n"));
        }
        out
    }

    /// Solve with a backend and recheck the result independently.
    pub fn solve(&self, backend: &dyn Backend, opts: &SolverOptions) -> Result<SolveOutcome, SdpError> {
        let outcome = backend.solve(self, opts)?;
        match outcome.status {
            BackendStatus::Feasible => {
                let assignment: Assignment = (0..self.num_vars).map(|k| (DecVar(k), outcome.x[k as usize])).collect();
                let residuals = self.recheck(&assignment);
                Ok(SolveOutcome::Feasible(Certificate {
                    assignment,
                    residuals,
                    iterations: outcome.iterations,
                    solve_seconds: outcome.seconds,
                }))
            }
            BackendStatus::Infeasible => Ok(SolveOutcome::Infeasible { detail: outcome.detail }),
            BackendStatus::NumericalFailure => Err(SdpError::NumericalFailure(outcome.detail)),
        }
    }

    /// Equality violation and smallest PSD eigenvalue under an assignment.
    pub fn recheck(&self, assignment: &Assignment) -> Residuals {
        let max_equality = self
            .equalities
            .iter()
            .map(|e| e.eval(assignment).map(f64::abs).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        let min_psd_eigenvalue = self
            .blocks
            .iter()
            .map(|b| b.value(assignment).symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min);
        Residuals { max_equality, min_psd_eigenvalue }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub max_equality: f64,
    pub min_psd_eigenvalue: f64,
}

impl Residuals {
    pub fn within(&self, tol: f64) -> bool {
        self.max_equality <= tol && (self.min_psd_eigenvalue >= -tol || self.min_psd_eigenvalue.is_infinite())
    }
}

/// Numeric values returned by a solver, with independently computed residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub assignment: Assignment,
    pub residuals: Residuals,
    pub iterations: u32,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveOutcome {
    Feasible(Certificate),
    /// Backend reported primal infeasibility; no dual certificate is checked.
    Infeasible { detail: String },
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible(_))
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            SolveOutcome::Feasible(c) => Some(c),
            SolveOutcome::Infeasible { .. } => None,
        }
    }
}

/// Convenience: `c` as an affine constant.
#[cfg(test)]
pub(crate) fn constant(c: f64) -> ScalarAffine {
    ScalarAffine::constant(crate::num::Num::Float(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_indexing() {
        let mut p = SdpProblem::new();
        let _ = p.free_var("t");
        let b = p.psd_block("M", 3);
        assert_eq!(b.var(0, 0), DecVar(1));
        assert_eq!(b.var(0, 1), DecVar(2));
        assert_eq!(b.var(1, 0), DecVar(2));
        assert_eq!(b.var(1, 1), DecVar(3));
        assert_eq!(b.var(2, 2), DecVar(6));
        for k in 0..b.num_vars() {
            let (i, j) = b.position(k);
            assert_eq!(b.var(i, j), DecVar(1 + k as u32));
        }
        assert_eq!(p.free_vars(), vec![DecVar(0)]);
    }

    #[test]
    fn empty_problem_is_feasible() {
        let p = SdpProblem::new();
        let out = p.solve(&ClarabelBackend, &SolverOptions::default()).unwrap();
        assert!(out.is_feasible());
        assert!(out.certificate().unwrap().assignment.is_empty());
    }

    #[test]
    fn negative_diagonal_is_infeasible() {
        let mut p = SdpProblem::new();
        let b = p.psd_block("x", 1);
        p.add_equality(ScalarAffine::var(b.var(0, 0)).add(&constant(1.0)));
        let out = p.solve(&ClarabelBackend, &SolverOptions::default()).unwrap();
        assert!(!out.is_feasible());
    }

    #[test]
    fn recheck_detects_violation() {
        let mut p = SdpProblem::new();
        let b = p.psd_block("x", 2);
        p.add_equality(ScalarAffine::var(b.var(0, 0)).sub(&constant(1.0)));
        let mut a = Assignment::new();
        a.insert(b.var(0, 0), 1.0);
        a.insert(b.var(0, 1), 2.0);
        a.insert(b.var(1, 1), 1.0);
        let r = p.recheck(&a);
        assert_eq!(r.max_equality, 0.0);
        assert!((r.min_psd_eigenvalue + 1.0).abs() < 1e-12);
    }
}
