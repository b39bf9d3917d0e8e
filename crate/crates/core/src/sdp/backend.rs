//! Conic solver interface and the Clarabel implementation.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::num::Num;
use crate::polynomial::ScalarAffine;

use super::{SdpError, SdpProblem};

// Links the system OpenBLAS used by Clarabel's SDP support.
extern crate openblas_src;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
    /// Static KKT regularization. The Gram relaxations are nearly
    /// degenerate, and the solver's own default of 1e-8 stalls on them.
    pub regularization: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-8, max_iter: 200, verbose: false, regularization: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackendOutcome {
    pub status: BackendStatus,
    /// Primal values indexed by variable id.
    pub x: Vec<f64>,
    pub iterations: u32,
    pub seconds: f64,
    pub detail: String,
}

/// Loads a problem into a conic solver and returns status and primal values.
pub trait Backend: Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &SdpProblem, opts: &SolverOptions) -> Result<BackendOutcome, SdpError>;
}

/// Clarabel interior-point solver with PSD triangle cones.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelBackend;

impl Backend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem, opts: &SolverOptions) -> Result<BackendOutcome, SdpError> {
        let n = problem.num_vars();
        if n == 0 && problem.equalities().is_empty() {
            return Ok(BackendOutcome {
                status: BackendStatus::Feasible,
                x: Vec::new(),
                iterations: 0,
                seconds: 0.0,
                detail: "empty problem".into(),
            });
        }
        // Linearly dependent equality rows are dropped, and free variables
        // that appear in no constraint or whose columns depend on other free
        // columns are fixed at zero: each makes the KKT system singular.
        let mut used = vec![false; n];
        for b in problem.blocks() {
            for v in b.vars() {
                used[v.0 as usize] = true;
            }
        }
        let in_block = used.clone();
        let eqs = dedup_rows(problem.equalities());
        let eqs: Vec<ScalarAffine> = match independent_rows(&eqs) {
            Some(rows) => rows.into_iter().map(|r| eqs[r].clone()).collect(),
            None => {
                return Ok(BackendOutcome {
                    status: BackendStatus::Infeasible,
                    x: vec![0.0; n],
                    iterations: 0,
                    seconds: 0.0,
                    detail: "inconsistent linear equalities".into(),
                })
            }
        };
        for e in &eqs {
            for (v, _) in e.terms() {
                used[v.0 as usize] = true;
            }
        }
        for k in redundant_free_columns(&eqs, &in_block, problem.objective()) {
            used[k] = false;
        }
        let mut column = vec![usize::MAX; n];
        let mut cols_used = 0;
        for (k, u) in used.iter().enumerate() {
            if *u {
                column[k] = cols_used;
                cols_used += 1;
            }
        }

        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        for (r, e) in eqs.iter().enumerate() {
            for (v, c) in e.terms() {
                rows.push(r);
                cols.push(column[v.0 as usize]);
                vals.push(c.to_f64());
            }
            b.push(-e.constant_part().to_f64());
        }
        if !eqs.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(eqs.len()));
        }
        let mut row = eqs.len();
        for block in problem.blocks() {
            for (k, v) in block.vars().enumerate() {
                let (i, j) = block.position(k);
                rows.push(row + k);
                cols.push(column[v.0 as usize]);
                vals.push(if i == j { -1.0 } else { -std::f64::consts::SQRT_2 });
                b.push(0.0);
            }
            row += block.num_vars();
            cones.push(SupportedConeT::PSDTriangleConeT(block.size));
        }
        let a = CscMatrix::new_from_triplets(row, cols_used, rows, cols, vals);
        let p = CscMatrix::zeros((cols_used, cols_used));
        let mut q = vec![0.0; cols_used];
        if let Some(obj) = problem.objective() {
            for (v, c) in obj.terms() {
                if used[v.0 as usize] {
                    q[column[v.0 as usize]] = -c.to_f64();
                } else {
                    return Err(SdpError::NumericalFailure("objective is unbounded".into()));
                }
            }
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .max_iter(opts.max_iter)
            .tol_feas(opts.feas_tol)
            .tol_gap_abs(opts.feas_tol)
            .tol_gap_rel(opts.feas_tol)
            .direct_solve_method("faer".into())
            .static_regularization_constant(opts.regularization)
            .build()
            .map_err(|e| SdpError::NumericalFailure(format!("solver settings: {e:?}")))?;
        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| SdpError::NumericalFailure(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => BackendStatus::Feasible,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => BackendStatus::Infeasible,
            _ => BackendStatus::NumericalFailure,
        };
        Ok(BackendOutcome {
            status,
            x: column.iter().map(|&c| if c == usize::MAX { 0.0 } else { sol.x[c] }).collect(),
            iterations: sol.iterations,
            seconds: start.elapsed().as_secs_f64(),
            detail: format!("{:?}", sol.status),
        })
    }
}

/// Relative size below which a coefficient is floating-point cancellation noise.
const NOISE: f64 = 1e-12;

/// Remove noise coefficients, then drop empty rows and rows that are
/// scalar multiples of an earlier row.
fn dedup_rows(eqs: &[ScalarAffine]) -> Vec<ScalarAffine> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for e in eqs {
        let scale = e.max_abs_coeff();
        let e = &ScalarAffine::from_terms(
            if e.constant_part().to_f64().abs() <= NOISE * scale { Num::ZERO } else { e.constant_part() },
            e.terms().iter().filter(|(_, c)| c.to_f64().abs() > NOISE * scale).cloned().collect(),
        );
        if e.terms().is_empty() && e.constant_part().is_zero() {
            continue;
        }
        let lead = e
            .terms()
            .iter()
            .map(|(_, c)| c.to_f64())
            .chain(std::iter::once(e.constant_part().to_f64()))
            .find(|c| *c != 0.0)
            .unwrap_or(1.0);
        let key: Vec<(u32, i64)> = e
            .terms()
            .iter()
            .map(|(v, c)| (v.0, (c.to_f64() / lead * 1e12).round() as i64))
            .chain(std::iter::once((u32::MAX, (e.constant_part().to_f64() / lead * 1e12).round() as i64)))
            .collect();
        if seen.insert(key) {
            out.push(e.clone());
        }
    }
    out
}

/// Relative Gram residual below which a vector counts as a combination of earlier ones.
const DEPENDENT: f64 = 1e-11;

/// Greedy selection, in order, of linearly independent sparse vectors by an
/// incremental Cholesky factorization of their Gram matrix. Returns the kept
/// indices and, for each dropped vector, its coefficients over the kept ones.
fn independent_subset(vectors: &[Vec<(usize, f64)>]) -> (Vec<usize>, Vec<(usize, Vec<f64>)>) {
    let m = vectors.len();
    let mut by_coord: std::collections::HashMap<usize, Vec<(usize, f64)>> = std::collections::HashMap::new();
    for (r, v) in vectors.iter().enumerate() {
        for &(c, a) in v {
            by_coord.entry(c).or_default().push((r, a));
        }
    }
    let mut gram = vec![0.0; m * m];
    for entries in by_coord.values() {
        for &(r, a) in entries {
            for &(t, b) in entries {
                gram[r * m + t] += a * b;
            }
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    // Rows of the lower-triangular factor of the kept Gram block.
    let mut chol: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        let mut y = vec![0.0; kept.len()];
        for a in 0..kept.len() {
            let s: f64 = (0..a).map(|b| chol[a][b] * y[b]).sum();
            y[a] = (gram[i * m + kept[a]] - s) / chol[a][a];
        }
        let diag = gram[i * m + i];
        let residual = diag - y.iter().map(|v| v * v).sum::<f64>();
        if diag > 0.0 && residual > DEPENDENT * diag {
            y.push(residual.sqrt());
            chol.push(y);
            kept.push(i);
            continue;
        }
        // Solve Lᵀ w = y for the coefficients over kept vectors.
        let mut w = y;
        for a in (0..kept.len()).rev() {
            let s: f64 = (a + 1..kept.len()).map(|b| chol[b][a] * w[b]).sum();
            w[a] = (w[a] - s) / chol[a][a];
        }
        dropped.push((i, w));
    }
    (kept, dropped)
}

/// Free variables whose equality columns are combinations of earlier free
/// columns with the same objective combination. Fixing them at zero keeps
/// the feasible set's image and the objective unchanged.
fn redundant_free_columns(eqs: &[ScalarAffine], in_block: &[bool], objective: Option<&ScalarAffine>) -> Vec<usize> {
    let mut index = std::collections::BTreeMap::new();
    let mut columns: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut vars = Vec::new();
    for (r, e) in eqs.iter().enumerate() {
        for (v, c) in e.terms() {
            let k = v.0 as usize;
            if in_block[k] {
                continue;
            }
            let slot = *index.entry(k).or_insert_with(|| {
                columns.push(Vec::new());
                vars.push(k);
                columns.len() - 1
            });
            columns[slot].push((r, c.to_f64()));
        }
    }
    let mut cost = vec![0.0; vars.len()];
    if let Some(obj) = objective {
        for (v, c) in obj.terms() {
            if let Some(&slot) = index.get(&(v.0 as usize)) {
                cost[slot] = c.to_f64();
            }
        }
    }
    let (kept, dropped) = independent_subset(&columns);
    dropped
        .into_iter()
        .filter(|(j, w)| {
            let combo: f64 = kept.iter().zip(w).map(|(&k, wk)| wk * cost[k]).sum();
            (cost[*j] - combo).abs() <= 1e-12 * (1.0 + cost[*j].abs())
        })
        .map(|(j, _)| vars[j])
        .collect()
}

/// Linearly independent equality rows, or `None` when a dependent row's
/// constant disagrees with the same combination of kept rows.
fn independent_rows(eqs: &[ScalarAffine]) -> Option<Vec<usize>> {
    let vectors: Vec<Vec<(usize, f64)>> =
        eqs.iter().map(|e| e.terms().iter().map(|(v, c)| (v.0 as usize, c.to_f64())).collect()).collect();
    let rhs: Vec<f64> = eqs.iter().map(|e| e.constant_part().to_f64()).collect();
    let (kept, dropped) = independent_subset(&vectors);
    for (i, w) in dropped {
        let combo: f64 = kept.iter().zip(&w).map(|(&k, wk)| wk * rhs[k]).sum();
        let scale = rhs[i].abs() + kept.iter().zip(&w).map(|(&k, wk)| (wk * rhs[k]).abs()).sum::<f64>();
        if (rhs[i] - combo).abs() > 1e-7 * scale.max(1.0) {
            return None;
        }
    }
    Some(kept)
}
