//! Robust stability tests for a nominal PIE in feedback with an uncertainty
//! described by a multiplier family.
//!
//! The nominal system is augmented with the multiplier filter `Ψ`, a
//! positive storage operator `𝒫` is searched for, and the dissipation
//! inequality
//!
//! ```text
//! [[T̂*𝒫Â + Â*𝒫T̂, T̂*𝒫B̂], [B̂*𝒫T̂, εI]] + [Ĉ D̂]* K [Ĉ D̂] ⪯ 0
//! ```
//!
//! is imposed by coefficient matching against a positive slack. Feasibility
//! certifies stability of the interconnection; infeasibility only means no
//! certificate was found at the chosen degrees.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::iqc::{Enforcement, IqcError, MultiplierFamily};
use crate::num::Num;
use crate::oracle::{self, discretize_with, Execution, OracleError, QuadGrid};
use crate::pi::{PiError, PiOperator};
use crate::pie::{PieError, PieSystem};
use crate::polynomial::{Assignment, Var};
use crate::sdp::{
    constrain_sign, Backend, Certificate, ParamDegrees, PositiveParam, Residuals, SdpError, SdpProblem, Sign,
    SolveOutcome, SolverOptions,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KypError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("the lower end {lo} of the search interval is not certified: {}", trial.detail)]
    LoInfeasible { lo: f64, trial: Box<Trial> },
    #[error("invalid search interval [{lo}, {hi}] with tolerance {tol}")]
    InvalidSearch { lo: f64, hi: f64, tol: f64 },
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Pi(#[from] PiError),
    #[error(transparent)]
    Pie(#[from] PieError),
    #[error(transparent)]
    Iqc(#[from] IqcError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Degrees and strictness of the dissipation test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KypOptions {
    pub storage: ParamDegrees,
    /// Slack degrees; `None` picks them from the degree of the inequality.
    pub slack: Option<ParamDegrees>,
    /// `None` uses `1e-3 · max(1, max |coefficient of Â|)`.
    pub epsilon: Option<f64>,
    /// Adds `δ·I` to the storage operator.
    pub coercive: f64,
}

impl Default for KypOptions {
    fn default() -> Self {
        Self { storage: ParamDegrees::uniform(1).with_weight(true), slack: None, epsilon: None, coercive: 0.0 }
    }
}

/// Series connection of the nominal system into the multiplier filter.
///
/// With channels `[y; u]` fed to `Ψ`:
/// `T̂ = blkdiag(T, T_Ψ)`, `Â = [[A, 0], [B_Ψ[C; 0], A_Ψ]]`,
/// `B̂ = [B; B_Ψ[D; I]]`, `Ĉ = [D_Ψ[C; 0], C_Ψ]`, `D̂ = D_Ψ[D; I]`.
pub fn augment(g: &PieSystem, psi: &PieSystem) -> Result<PieSystem, KypError> {
    let y = g.output_dims();
    let u = g.input_dims();
    if psi.input_dims() != y + u {
        return Err(KypError::Dimension(format!(
            "multiplier input {} differs from output {} plus input {}",
            psi.input_dims(),
            y,
            u
        )));
    }
    let domain = g.domain();
    let x = g.state_dims();
    let xp = psi.state_dims();
    let c0 = PiOperator::vcat(&[&g.c, &PiOperator::zero(u, x, domain)])?;
    let d1 = PiOperator::vcat(&[&g.d, &PiOperator::identity(u, domain)])?;
    let t = PiOperator::blkdiag(&[&g.t, &psi.t])?;
    let a = PiOperator::block(&[
        vec![&g.a, &PiOperator::zero(x, xp, domain)],
        vec![&psi.b.compose(&c0)?, &psi.a],
    ])?;
    let b = PiOperator::vcat(&[&g.b, &psi.b.compose(&d1)?])?;
    let c = PiOperator::hcat(&[&psi.d.compose(&c0)?, &psi.c])?;
    let d = psi.d.compose(&d1)?;
    Ok(PieSystem::new(t, a, b, c, d)?)
}

/// A dissipation test ready to be solved.
#[derive(Clone, Debug)]
pub struct KypProgram {
    pub sdp: SdpProblem,
    pub augmented: PieSystem,
    pub family: MultiplierFamily,
    pub storage: PositiveParam,
    /// Storage operator actually used (`Z*MZ + δI`).
    pub storage_op: PiOperator,
    /// Left-hand side of the dissipation inequality, affine in the variables.
    pub lhs: PiOperator,
    pub epsilon: f64,
    pub slack_degrees: ParamDegrees,
}

/// Slack degrees two above the storage degrees, capped by what the kernel
/// degrees of the inequality can use.
pub fn auto_slack_degrees(lhs: &PiOperator, storage: ParamDegrees) -> ParamDegrees {
    let b = lhs.blocks();
    let mult = b.r0.degree_in(Var::S).max(b.q1.degree_in(Var::S));
    let kern = b.r1.degree().max(b.r2.degree());
    ParamDegrees {
        multiplier: (storage.multiplier + 2).min(mult.div_ceil(2)).max(storage.multiplier),
        integral: (storage.integral + 2).min(kern.saturating_sub(1).div_ceil(2)).max(storage.integral),
        weighted: storage.weighted,
    }
}

/// Build the dissipation test for `g` against `family`. Decision variables
/// of the family must already live in `sdp`.
pub fn assemble(
    mut sdp: SdpProblem,
    g: &PieSystem,
    family: MultiplierFamily,
    opts: &KypOptions,
) -> Result<KypProgram, KypError> {
    let aug = augment(g, &family.psi)?;
    if family.k.in_dims() != aug.output_dims() {
        return Err(KypError::Dimension(format!(
            "multiplier K acts on {} but the filter emits {}",
            family.k.in_dims(),
            aug.output_dims()
        )));
    }
    let domain = g.domain();
    let x = aug.state_dims();
    let u = aug.input_dims();
    let epsilon = opts.epsilon.unwrap_or_else(|| 1e-3 * aug.a.max_abs_coeff().max(1.0));

    let storage = crate::sdp::positive_pi_param(&mut sdp, "storage", x, domain, opts.storage)?;
    let mut pa = storage.sandwich(&aug.t, &aug.a)?;
    let mut pb = storage.sandwich(&aug.t, &aug.b)?;
    let mut storage_op = storage.op.clone();
    if opts.coercive > 0.0 {
        let delta = Num::float(opts.coercive);
        storage_op = storage_op.add(&PiOperator::identity(x, domain).scale(delta))?;
        pa = pa.add(&aug.t.adjoint().compose(&aug.a)?.scale(delta))?;
        pb = pb.add(&aug.t.adjoint().compose(&aug.b)?.scale(delta))?;
    }
    let e11 = pa.add(&pa.adjoint())?;
    let e22 = PiOperator::identity(u, domain).scale(Num::float(epsilon));
    let lyap = PiOperator::block(&[vec![&e11, &pb], vec![&pb.adjoint(), &e22]])?;
    let cd = PiOperator::hcat(&[&aug.c, &aug.d])?;
    let supply = cd.adjoint().compose(&family.k.compose(&cd)?)?;
    let lhs = lyap.add(&supply)?;

    for (i, side) in family.side_constraints.iter().enumerate() {
        if side.enforcement == Enforcement::Slack {
            let degrees = auto_slack_degrees(&side.expr, ParamDegrees::uniform(0));
            constrain_sign(&mut sdp, &format!("side{i}"), &side.expr, side.sign, degrees)?;
        }
    }
    let slack_degrees = opts.slack.unwrap_or_else(|| auto_slack_degrees(&lhs, opts.storage));
    constrain_sign(&mut sdp, "dissipation", &lhs, Sign::Nsd, slack_degrees)?;
    Ok(KypProgram { sdp, augmented: aug, family, storage, storage_op, lhs, epsilon, slack_degrees })
}

/// Tolerances of the independent certificate check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecheckOptions {
    pub grid_order: usize,
    /// Degree of the Legendre subspace the discretized forms are restricted to.
    pub subspace_degree: usize,
    pub equality_tol: f64,
    pub eig_tol: f64,
    pub storage_tol: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for RecheckOptions {
    fn default() -> Self {
        Self {
            grid_order: QuadGrid::DEFAULT_ORDER,
            subspace_degree: 20,
            equality_tol: 1e-6,
            eig_tol: 1e-6,
            storage_tol: 1e-8,
            samples: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecheckReport {
    pub residuals: Residuals,
    /// Largest eigenvalue of the discretized dissipation operator.
    pub lhs_max_eigenvalue: f64,
    /// Largest sampled value of `⟨v, LHS v⟩ / ⟨v, v⟩` over random inputs.
    pub sampled_dissipation_max: f64,
    /// Smallest eigenvalue of the discretized storage operator.
    pub storage_min_eigenvalue: f64,
    /// Worst signed eigenvalue of each side constraint (`≥ 0` is satisfied).
    pub side_margins: Vec<(String, f64)>,
    pub passed: bool,
}

/// Largest and smallest eigenvalue of a self-adjoint operator restricted to
/// a polynomial subspace, plus the sampled maximum of its Rayleigh quotient.
fn spectrum(
    op: &PiOperator,
    assignment: &Assignment,
    opts: &RecheckOptions,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, f64, f64), KypError> {
    let dims = op.in_dims();
    let grid = QuadGrid::for_operator(op, opts.grid_order);
    let m = discretize_with(op, assignment, &grid, Execution::default())?;
    let max = oracle::sym_eig_max_projected(&m, &grid, dims, opts.subspace_degree)?;
    let min = -oracle::sym_eig_max_projected(&(-&m), &grid, dims, opts.subspace_degree)?;
    let mut sampled = f64::NEG_INFINITY;
    if let Some(rng) = rng {
        let v = oracle::polynomial_subspace(&grid, dims, opts.subspace_degree);
        let w = oracle::weight_diagonal(&grid, dims);
        for _ in 0..opts.samples {
            let c = DMatrix::from_fn(v.ncols(), 1, |_, _| rng.gen_range(-1.0..1.0));
            let x = &v * c;
            let mx = &m * &x;
            let num: f64 = (0..x.nrows()).map(|i| w[i] * x[i] * mx[i]).sum();
            let den: f64 = (0..x.nrows()).map(|i| w[i] * x[i] * x[i]).sum();
            if den > 0.0 {
                sampled = sampled.max(num / den);
            }
        }
    }
    Ok((max, min, sampled))
}

/// Check a candidate assignment without trusting the solver.
pub fn recheck(program: &KypProgram, assignment: &Assignment, opts: &RecheckOptions) -> Result<RecheckReport, KypError> {
    let residuals = program.sdp.recheck(assignment);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lhs_max, _, sampled) = spectrum(&program.lhs, assignment, opts, Some(&mut rng))?;
    let (_, storage_min, _) = spectrum(&program.storage_op, assignment, opts, None)?;
    let mut side_margins = Vec::new();
    for side in &program.family.side_constraints {
        let margin = match side.sign {
            Sign::Psd => spectrum(&side.expr, assignment, opts, None)?.1,
            Sign::Nsd => -spectrum(&side.expr, assignment, opts, None)?.0,
            Sign::Zero => -side.expr.assign(assignment).max_abs_coeff(),
        };
        side_margins.push((side.label.clone(), margin));
    }
    let passed = residuals.max_equality <= opts.equality_tol
        && lhs_max <= opts.eig_tol
        && sampled <= opts.eig_tol
        && storage_min >= -opts.storage_tol
        && side_margins.iter().all(|(_, m)| *m >= -opts.eig_tol);
    Ok(RecheckReport {
        residuals,
        lhs_max_eigenvalue: lhs_max,
        sampled_dissipation_max: sampled,
        storage_min_eigenvalue: storage_min,
        side_margins,
        passed,
    })
}

#[derive(Clone, Debug)]
pub enum KypOutcome {
    /// Solver found a point and the independent recheck accepted it.
    Certified { certificate: Certificate, recheck: RecheckReport },
    /// Solver found a point that the recheck rejected.
    Rejected { certificate: Certificate, recheck: RecheckReport },
    /// Solver reported infeasibility: not certified (not a proof of instability).
    NotCertified { detail: String },
}

impl KypOutcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, KypOutcome::Certified { .. })
    }
}

/// Solve the program and recheck any returned point.
pub fn kyp_feasibility(
    program: &KypProgram,
    backend: &dyn Backend,
    solver: &SolverOptions,
    check: &RecheckOptions,
) -> Result<KypOutcome, KypError> {
    match program.sdp.solve(backend, solver)? {
        SolveOutcome::Infeasible { detail } => Ok(KypOutcome::NotCertified { detail }),
        SolveOutcome::Feasible(certificate) => {
            let report = recheck(program, &certificate.assignment, check)?;
            Ok(if report.passed {
                KypOutcome::Certified { certificate, recheck: report }
            } else {
                KypOutcome::Rejected { certificate, recheck: report }
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Certified,
    NotCertified,
    /// Solver stalled or the recheck rejected the point; counted as not certified.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trial {
    pub value: f64,
    pub status: TrialStatus,
    pub detail: String,
    pub seconds: f64,
    pub recheck: Option<RecheckReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BisectionResult {
    /// Largest tested value that was certified.
    pub best: f64,
    pub trials: Vec<Trial>,
    /// A certified trial lies above a trial that was not certified.
    pub monotonicity_violated: bool,
    /// Some trial failed numerically and was treated as not certified.
    pub had_failures: bool,
}

/// Outcome of one trial as produced by the caller's test.
pub struct TrialOutcome {
    pub status: TrialStatus,
    pub detail: String,
    pub recheck: Option<RecheckReport>,
}

impl TrialOutcome {
    pub fn from_kyp(result: Result<KypOutcome, KypError>) -> Self {
        match result {
            Ok(KypOutcome::Certified { recheck, certificate }) => TrialOutcome {
                status: TrialStatus::Certified,
                detail: format!("certified in {} iterations", certificate.iterations),
                recheck: Some(recheck),
            },
            Ok(KypOutcome::Rejected { recheck, .. }) => TrialOutcome {
                status: TrialStatus::Failed,
                detail: "solver point rejected by recheck".into(),
                recheck: Some(recheck),
            },
            Ok(KypOutcome::NotCertified { detail }) => {
                TrialOutcome { status: TrialStatus::NotCertified, detail, recheck: None }
            }
            Err(e) => TrialOutcome { status: TrialStatus::Failed, detail: e.to_string(), recheck: None },
        }
    }
}

/// Bisection for the largest certified value in `[lo, hi]`, assuming
/// certification is monotone nonincreasing in the value. Only `lo` and
/// midpoints are tested; the result never exceeds a tested point.
pub fn bisect(
    lo: f64,
    hi: f64,
    tol: f64,
    mut test: impl FnMut(f64) -> TrialOutcome,
) -> Result<BisectionResult, KypError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi && tol > 0.0) {
        return Err(KypError::InvalidSearch { lo, hi, tol });
    }
    let mut trials = Vec::new();
    let mut run = |value: f64, trials: &mut Vec<Trial>| -> bool {
        let start = Instant::now();
        let out = test(value);
        if out.status == TrialStatus::Failed {
            log::warn!("trial at {value} failed: {}", out.detail);
        }
        let ok = out.status == TrialStatus::Certified;
        trials.push(Trial {
            value,
            status: out.status,
            detail: out.detail,
            seconds: start.elapsed().as_secs_f64(),
            recheck: out.recheck,
        });
        ok
    };
    if !run(lo, &mut trials) {
        let trial = Box::new(trials.pop().expect("the lower end was just tested"));
        return Err(KypError::LoInfeasible { lo, trial });
    }
    let (mut good, mut bad) = (lo, hi);
    while bad - good > tol {
        let mid = 0.5 * (good + bad);
        if run(mid, &mut trials) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    let lowest_failure = trials
        .iter()
        .filter(|t| t.status != TrialStatus::Certified)
        .map(|t| t.value)
        .fold(f64::INFINITY, f64::min);
    let monotonicity_violated =
        trials.iter().any(|t| t.status == TrialStatus::Certified && t.value > lowest_failure);
    if monotonicity_violated {
        log::warn!("certification is not monotone in the searched parameter");
    }
    let had_failures = trials.iter().any(|t| t.status == TrialStatus::Failed);
    Ok(BisectionResult { best: good, trials, monotonicity_violated, had_failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqc::time_varying_iqc;
    use crate::pi::{Domain, PiDims};
    use crate::polynomial::PolyMatrix;
    use crate::sdp::ClarabelBackend;

    /// `ẋ = -x + u`, `y = gain·x` as a finite-only PIE.
    fn scalar_ode(gain: f64) -> PieSystem {
        let d = Domain::unit();
        let m = |v: f64| PiOperator::matrix(PolyMatrix::from_f64_rows(&[vec![v]]), d).unwrap();
        PieSystem::new(m(1.0), m(-1.0), m(1.0), m(gain), m(0.0)).unwrap()
    }

    fn small_gain(gain: f64, degree: u32) -> KypOutcome {
        let g = scalar_ode(gain);
        let mut sdp = SdpProblem::new();
        let fam = time_varying_iqc(&mut sdp, "tv", g.output_dims(), g.domain(), degree).unwrap();
        let opts = KypOptions { storage: ParamDegrees::uniform(degree), ..Default::default() };
        let program = assemble(sdp, &g, fam, &opts).unwrap();
        kyp_feasibility(&program, &ClarabelBackend, &SolverOptions::default(), &RecheckOptions::default()).unwrap()
    }

    #[test]
    fn scalar_small_gain_pair() {
        assert!(small_gain(0.5, 0).is_certified());
        assert!(!small_gain(2.0, 0).is_certified());
    }

    #[test]
    fn identity_filter_collapses() {
        let g = scalar_ode(1.0);
        let psi = PieSystem::identity(PiDims::new(2, 0), g.domain());
        let aug = augment(&g, &psi).unwrap();
        assert_eq!(aug.a, g.a);
        assert_eq!(aug.b, g.b);
        assert_eq!(aug.c, PiOperator::vcat(&[&g.c, &PiOperator::zero(PiDims::new(1, 0), PiDims::new(1, 0), g.domain())]).unwrap());
        assert_eq!(aug.d, PiOperator::vcat(&[&g.d, &PiOperator::identity(PiDims::new(1, 0), g.domain())]).unwrap());
    }

    #[test]
    fn bisection_on_threshold_oracle() {
        let r = bisect(0.0, 10.0, 0.1, |v| TrialOutcome {
            status: if v <= 5.0 { TrialStatus::Certified } else { TrialStatus::NotCertified },
            detail: String::new(),
            recheck: None,
        })
        .unwrap();
        assert!(r.best >= 4.9 && r.best <= 5.0, "{}", r.best);
        assert!(r.trials.len() <= 8);
        assert!(!r.monotonicity_violated);
    }

    #[test]
    fn bisection_rejects_uncertified_lower_end() {
        let r = bisect(0.0, 1.0, 0.1, |_| TrialOutcome {
            status: TrialStatus::NotCertified,
            detail: String::new(),
            recheck: None,
        });
        assert!(matches!(r, Err(KypError::LoInfeasible { .. })));
    }
}
