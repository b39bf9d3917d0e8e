//! Machine-readable analysis report. Field order is fixed so that reports
//! from repeated runs diff cleanly.

use pi_iqc::kyp::Trial;
use serde::Serialize;

use crate::config::{AnalysisConfig, Search};
use crate::driver::{Analysis, ProblemSize, Verdict};

#[derive(Clone, Debug, Serialize)]
pub struct SearchEcho {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub name: String,
    pub outcome: Verdict,
    pub detail: String,
    pub parameter: Option<String>,
    pub search: Option<SearchEcho>,
    /// Largest certified parameter value.
    pub lambda_star: Option<f64>,
    pub trials: Vec<Trial>,
    pub monotonicity_violated: bool,
    pub had_failures: bool,
    pub problem_size: Option<ProblemSize>,
    pub config: AnalysisConfig,
    pub seconds: f64,
}

fn echo(search: &Search) -> Option<SearchEcho> {
    Some(SearchEcho { lo: search.lo.to_f64().ok()?, hi: search.hi.to_f64().ok()?, tol: search.tol.to_f64().ok()? })
}

impl Report {
    pub fn new(config: &AnalysisConfig, analysis: Analysis) -> Self {
        Report {
            name: config.name.clone(),
            outcome: analysis.verdict,
            detail: analysis.detail,
            parameter: config.search.as_ref().map(|s| s.param.clone()),
            search: config.search.as_ref().and_then(echo),
            lambda_star: analysis.lambda_star,
            trials: analysis.trials,
            monotonicity_violated: analysis.monotonicity_violated,
            had_failures: analysis.had_failures,
            problem_size: analysis.problem_size,
            config: config.clone(),
            seconds: analysis.seconds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are serializable")
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let verdict = match self.outcome {
            Verdict::Certified => "certified",
            Verdict::NotCertified => "not certified",
            Verdict::NumericalFailure => "numerical failure",
        };
        match (&self.parameter, self.lambda_star) {
            (Some(p), Some(v)) => format!("{}: {verdict}, {p}* = {v:.6} ({} trials, {:.1} s)", self.name, self.trials.len(), self.seconds),
            _ => format!("{}: {verdict} ({}; {:.1} s)", self.name, self.detail, self.seconds),
        }
    }
}
