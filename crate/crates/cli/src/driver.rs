//! Builds the nominal system and multiplier family from a configuration and
//! runs the dissipation test, either once or as a bisection over the
//! searched parameter.

use std::time::Instant;

use pi_iqc::iqc::{constant_gain, constant_real_iqc, polytopic_iqc, sector_iqc, time_varying_iqc, MultiplierFamily};
use pi_iqc::kyp::{
    assemble, bisect, kyp_feasibility, BisectionResult, KypError, KypOptions, KypProgram, RecheckOptions, Trial,
    TrialOutcome, TrialStatus,
};
use pi_iqc::pi::{Domain, PiOperator};
use pi_iqc::pie::{dde_to_pie, pde_to_pie, PieSystem};
use pi_iqc::sdp::{ClarabelBackend, ParamDegrees, SdpProblem, SolverOptions};
use thiserror::Error;

use crate::config::{AnalysisConfig, PsiSpec, SystemSpec, UncertaintySpec};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("cannot build the system at {param} = {value}: {reason}")]
    Build { param: String, value: f64, reason: String },
    #[error(transparent)]
    Kyp(#[from] KypError),
}

/// Nominal PIE at parameter value `p`.
pub fn nominal_system(spec: &SystemSpec, p: f64) -> Result<PieSystem, String> {
    match spec {
        SystemSpec::Pde(pde) => {
            let g = pde_to_pie(&pde.spec(p)?).map_err(|e| e.to_string())?;
            Ok(g.scale_output(pde.output_gain.at(p)?))
        }
        SystemSpec::Dde(dde) => dde_to_pie(&dde.spec(p)?).map_err(|e| e.to_string()),
        SystemSpec::Pie(pie) => {
            let a = pie.domain[0].value()?;
            let b = pie.domain[1].value()?;
            let domain = Domain::new(a, b).map_err(|e| e.to_string())?;
            let op = |name: &str, raw: &crate::config::RawOperator| -> Result<PiOperator, String> {
                raw.build(domain).map_err(|e| format!("operator {name}: {e}"))
            };
            let g = PieSystem::new(
                op("t", &pie.t)?,
                op("a", &pie.a)?,
                op("b", &pie.b)?,
                op("c", &pie.c)?,
                op("d", &pie.d)?,
            )
            .map_err(|e| e.to_string())?;
            if g.input_dims() != g.output_dims() {
                return Err(format!(
                    "the uncertainty loop needs matching input and output dimensions, got {} and {}",
                    g.input_dims(),
                    g.output_dims()
                ));
            }
            Ok(g.scale_output(pie.output_gain.at(p)?))
        }
    }
}

/// Degrees and tolerances that command-line flags may override.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    /// Sets storage and multiplier degree and clears an explicit slack degree.
    pub degree: Option<u32>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, config: &mut AnalysisConfig) {
        if let Some(d) = self.degree {
            config.degrees.storage = d;
            config.degrees.multiplier = d;
            config.degrees.slack = None;
        }
        if let (Some(t), Some(s)) = (self.tol, config.search.as_mut()) {
            s.tol = t.into();
        }
        if let Some(seed) = self.seed {
            config.recheck.seed = seed;
        }
    }
}

fn multiplier_family(config: &AnalysisConfig, sdp: &mut SdpProblem, g: &PieSystem) -> Result<MultiplierFamily, String> {
    let degree = config.degrees.multiplier;
    let dims = g.output_dims();
    let domain = g.domain();
    let family = match &config.uncertainty {
        UncertaintySpec::ConstantReal => {
            let h = match &config.multiplier_psi {
                Some(PsiSpec::Pde(psi)) => {
                    pde_to_pie(&psi.spec()?).and_then(|h| h.stack_with_input()).map_err(|e| e.to_string())?
                }
                Some(PsiSpec::Nominal) => g.stack_with_input().map_err(|e| e.to_string())?,
                None => PieSystem::identity(dims, domain),
            };
            constant_real_iqc(sdp, "delta", &h, degree)
        }
        UncertaintySpec::TimeVarying => time_varying_iqc(sdp, "delta", dims, domain, degree),
        UncertaintySpec::Sector { alpha, beta } => sector_iqc(sdp, "phi", dims, domain, alpha.value()?, beta.value()?, degree),
        UncertaintySpec::Polytopic { vertices } => {
            let ops = vertices
                .iter()
                .map(|v| v.value().map(|c| constant_gain(dims, domain, c)))
                .collect::<Result<Vec<_>, _>>()?;
            polytopic_iqc(sdp, "delta", &ops, degree)
        }
    };
    family.map_err(|e| e.to_string())
}

fn kyp_options(config: &AnalysisConfig) -> KypOptions {
    let d = &config.degrees;
    KypOptions {
        storage: ParamDegrees::uniform(d.storage).with_weight(d.weighted),
        slack: d.slack.map(|s| ParamDegrees::uniform(s).with_weight(d.weighted)),
        epsilon: config.epsilon,
        coercive: config.coercive.unwrap_or(0.0),
    }
}

pub fn solver_options(config: &AnalysisConfig) -> SolverOptions {
    SolverOptions {
        feas_tol: config.solver.feas_tol,
        max_iter: config.solver.max_iter,
        verbose: false,
        regularization: config.solver.regularization,
    }
}

pub fn recheck_options(config: &AnalysisConfig) -> RecheckOptions {
    let r = &config.recheck;
    RecheckOptions {
        grid_order: r.grid_order,
        subspace_degree: r.subspace_degree,
        equality_tol: r.equality_tol,
        eig_tol: r.eig_tol,
        storage_tol: r.storage_tol,
        samples: r.samples,
        seed: r.seed,
    }
}

fn param_name(config: &AnalysisConfig) -> String {
    config.search.as_ref().map(|s| s.param.clone()).unwrap_or_else(|| "value".into())
}

/// Assemble the dissipation program at parameter value `p`.
pub fn build_program(config: &AnalysisConfig, p: f64) -> Result<KypProgram, DriverError> {
    let build = |reason: String| DriverError::Build { param: param_name(config), value: p, reason };
    let g = nominal_system(&config.system, p).map_err(build)?;
    let mut sdp = SdpProblem::new();
    let family = multiplier_family(config, &mut sdp, &g).map_err(build)?;
    Ok(assemble(sdp, &g, family, &kyp_options(config))?)
}

/// Size of the assembled semidefinite program.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct ProblemSize {
    pub variables: usize,
    pub equalities: usize,
    pub psd_blocks: Vec<usize>,
}

impl ProblemSize {
    pub fn of(sdp: &SdpProblem) -> Self {
        ProblemSize {
            variables: sdp.num_vars(),
            equalities: sdp.equalities().len(),
            psd_blocks: sdp.blocks().iter().map(|b| b.size).collect(),
        }
    }
}

/// One feasibility test at `p`, with the size of the program it solved.
pub fn run_trial(config: &AnalysisConfig, p: f64) -> (TrialOutcome, Option<ProblemSize>) {
    match build_program(config, p) {
        Ok(program) => {
            let size = ProblemSize::of(&program.sdp);
            let result =
                kyp_feasibility(&program, &ClarabelBackend, &solver_options(config), &recheck_options(config));
            (TrialOutcome::from_kyp(result), Some(size))
        }
        Err(DriverError::Kyp(e)) => (TrialOutcome::from_kyp(Err(e)), None),
        Err(e) => (TrialOutcome { status: TrialStatus::Failed, detail: e.to_string(), recheck: None }, None),
    }
}

/// Final verdict of an analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    NotCertified,
    NumericalFailure,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Certified => 0,
            Verdict::NotCertified => 2,
            Verdict::NumericalFailure => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub verdict: Verdict,
    /// Largest certified parameter value, if any.
    pub lambda_star: Option<f64>,
    pub trials: Vec<Trial>,
    pub monotonicity_violated: bool,
    pub had_failures: bool,
    pub detail: String,
    pub problem_size: Option<ProblemSize>,
    pub seconds: f64,
}

fn verdict_of(status: TrialStatus) -> Verdict {
    match status {
        TrialStatus::Certified => Verdict::Certified,
        TrialStatus::NotCertified => Verdict::NotCertified,
        TrialStatus::Failed => Verdict::NumericalFailure,
    }
}

/// Run the configured analysis: a bisection when `search` is present,
/// otherwise a single test at `value` (default 0).
pub fn analyze(config: &AnalysisConfig) -> Result<Analysis, DriverError> {
    let start = Instant::now();
    let mut size = None;
    let mut log_trial = |p: f64| {
        let (out, s) = run_trial(config, p);
        if size.is_none() {
            size = s;
        }
        log::info!("{} = {p}: {:?} ({})", param_name(config), out.status, out.detail);
        out
    };
    let Some(search) = &config.search else {
        let p = match &config.value {
            Some(v) => v.to_f64().map_err(|reason| DriverError::Build { param: "value".into(), value: f64::NAN, reason })?,
            None => 0.0,
        };
        let t0 = Instant::now();
        let out = log_trial(p);
        let certified = out.status == TrialStatus::Certified;
        let trial =
            Trial { value: p, status: out.status, detail: out.detail.clone(), seconds: t0.elapsed().as_secs_f64(), recheck: out.recheck };
        return Ok(Analysis {
            verdict: verdict_of(trial.status),
            lambda_star: certified.then_some(p),
            had_failures: trial.status == TrialStatus::Failed,
            trials: vec![trial],
            monotonicity_violated: false,
            detail: out.detail,
            problem_size: size,
            seconds: start.elapsed().as_secs_f64(),
        });
    };
    let num = |s: &crate::config::Scalar| {
        s.to_f64().map_err(|reason| DriverError::Build { param: search.param.clone(), value: f64::NAN, reason })
    };
    let (lo, hi, tol) = (num(&search.lo)?, num(&search.hi)?, num(&search.tol)?);
    let result = bisect(lo, hi, tol, &mut log_trial);
    let problem_size = size;
    match result {
        Ok(BisectionResult { best, trials, monotonicity_violated, had_failures }) => Ok(Analysis {
            verdict: Verdict::Certified,
            lambda_star: Some(best),
            trials,
            monotonicity_violated,
            had_failures,
            detail: format!("certified up to {} = {best}", search.param),
            problem_size,
            seconds: start.elapsed().as_secs_f64(),
        }),
        Err(KypError::LoInfeasible { trial, .. }) => {
            let verdict = verdict_of(trial.status);
            let detail = format!("the lower end {lo} is not certified: {}", trial.detail);
            Ok(Analysis {
                verdict,
                lambda_star: None,
                had_failures: trial.status == TrialStatus::Failed,
                trials: vec![*trial],
                monotonicity_violated: false,
                detail,
                problem_size,
                seconds: start.elapsed().as_secs_f64(),
            })
        }
        Err(e) => Err(e.into()),
    }
}
