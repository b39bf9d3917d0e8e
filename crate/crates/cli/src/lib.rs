//! Command-line front end: reads analysis configurations, runs the
//! dissipation test or a bisection over the uncertain parameter, and writes
//! JSON reports and SDPA exports.

pub mod config;
pub mod driver;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{parse_config, AnalysisConfig, Violation};
use crate::driver::{analyze, build_program, Overrides, Verdict};
use crate::report::Report;

/// Exit code for usage and configuration errors.
pub const EXIT_USAGE: i32 = 1;

/// Bundled example configurations, by name.
pub const EXAMPLES: &[(&str, &str)] = &[
    ("reaction-diffusion", include_str!("../configs/reaction-diffusion.json")),
    ("delay", include_str!("../configs/delay.json")),
    ("delay-benchmark", include_str!("../configs/delay-benchmark.json")),
    ("varying-coefficient-pde", include_str!("../configs/varying-coefficient-pde.json")),
    ("sector-nonlinear", include_str!("../configs/sector-nonlinear.json")),
];

/// Parsed bundled example.
pub fn example_config(name: &str) -> Option<AnalysisConfig> {
    let (_, text) = EXAMPLES.iter().find(|(n, _)| *n == name)?;
    Some(parse_config(text).expect("bundled configurations are valid"))
}

#[derive(Debug, Parser)]
#[command(name = "pi-iqc", version, about = "Robust stability certificates for PDE and delay systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Storage and multiplier degree; the slack degree is then chosen automatically.
    #[arg(long, global = true)]
    pub degree: Option<u32>,
    /// Bisection tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed of the randomized certificate recheck.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Conic solver.
    #[arg(long, global = true, default_value = "clarabel")]
    pub backend: String,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Worker threads for running several examples at once.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Report path; overrides `output.report` in the configuration.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the analysis described by a configuration file.
    Analyze { config: PathBuf },
    /// Run bundled examples (`list` shows the names).
    Example {
        #[arg(required = true)]
        names: Vec<String>,
    },
    /// Write the semidefinite program at the lower end of the search (or at `value`) in SDPA format.
    ExportSdpa { config: PathBuf, path: PathBuf },
    /// Check a configuration and list every violation.
    Validate { config: PathBuf },
}

fn print_violations(source: &str, violations: &[Violation]) {
    eprintln!("{source}: invalid configuration ({} problem(s))", violations.len());
    for v in violations {
        eprintln!("  {v}");
    }
}

fn load(path: &Path) -> Result<AnalysisConfig, i32> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        EXIT_USAGE
    })?;
    parse_config(&text).map_err(|violations| {
        print_violations(&path.display().to_string(), &violations);
        EXIT_USAGE
    })
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides { degree: self.degree, tol: self.tol, seed: self.seed }
    }

    /// Apply flags and re-validate, since flags may break invariants.
    fn prepare(&self, mut config: AnalysisConfig, source: &str) -> Result<AnalysisConfig, i32> {
        self.overrides().apply(&mut config);
        config.solver.backend = self.backend.clone();
        let violations = config.violations();
        if violations.is_empty() {
            Ok(config)
        } else {
            print_violations(source, &violations);
            Err(EXIT_USAGE)
        }
    }

    fn report_path(&self, config: &AnalysisConfig, many: bool) -> Option<PathBuf> {
        match &self.report {
            Some(p) if many => {
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let ext = p.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
                Some(p.with_file_name(format!("{stem}-{}{ext}", config.name)))
            }
            Some(p) => Some(p.clone()),
            None => config.output.report.as_ref().map(PathBuf::from),
        }
    }

    fn run_analysis(&self, config: &AnalysisConfig, many: bool) -> i32 {
        let analysis = match analyze(config) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("{}: {e}", config.name);
                return EXIT_USAGE;
            }
        };
        let report = Report::new(config, analysis);
        if let Some(path) = self.report_path(config, many) {
            if let Err(e) = std::fs::write(&path, report.to_json()) {
                eprintln!("{}: cannot write report: {e}", path.display());
                return EXIT_USAGE;
            }
        }
        if !self.quiet {
            println!("{}", report.summary());
            if self.report.is_none() && config.output.report.is_none() {
                println!("{}", report.to_json());
            }
        }
        report.outcome.exit_code()
    }
}

/// Run the command line and return the process exit code: 0 certified,
/// 2 not certified, 3 numerical failure, 1 usage or configuration error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match &cli.command {
        Command::Validate { config } => match load(config).and_then(|c| cli.prepare(c, &config.display().to_string())) {
            Ok(c) => {
                if !cli.quiet {
                    println!("{}: valid configuration `{}`", config.display(), c.name);
                }
                0
            }
            Err(code) => code,
        },
        Command::Analyze { config } => match load(config).and_then(|c| cli.prepare(c, &config.display().to_string())) {
            Ok(c) => cli.run_analysis(&c, false),
            Err(code) => code,
        },
        Command::ExportSdpa { config, path } => {
            let c = match load(config).and_then(|c| cli.prepare(c, &config.display().to_string())) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let p = match c.extreme_values() {
                Ok(values) => values[0],
                Err(e) => {
                    eprintln!("{e}");
                    return EXIT_USAGE;
                }
            };
            match build_program(&c, p) {
                Ok(program) => match pi_iqc::sdp::export_sdpa(&program.sdp, path) {
                    Ok(()) => {
                        if !cli.quiet {
                            println!(
                                "{}: wrote {} variables, {} equalities, {} PSD blocks",
                                path.display(),
                                program.sdp.num_vars(),
                                program.sdp.equalities().len(),
                                program.sdp.blocks().len()
                            );
                        }
                        0
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", path.display());
                        EXIT_USAGE
                    }
                },
                Err(e) => {
                    eprintln!("{e}");
                    Verdict::NumericalFailure.exit_code()
                }
            }
        }
        Command::Example { names } => {
            if names.len() == 1 && names[0] == "list" {
                for (name, _) in EXAMPLES {
                    println!("{name}");
                }
                return 0;
            }
            let mut configs = Vec::new();
            for name in names {
                let Some(c) = example_config(name) else {
                    let known: Vec<&str> = EXAMPLES.iter().map(|(n, _)| *n).collect();
                    eprintln!("unknown example `{name}`; available: {}", known.join(", "));
                    return EXIT_USAGE;
                };
                match cli.prepare(c, name) {
                    Ok(c) => configs.push(c),
                    Err(code) => return code,
                }
            }
            let many = configs.len() > 1;
            let codes: Vec<i32> = match cli.jobs {
                Some(jobs) if jobs > 1 && many => {
                    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                        Ok(pool) => pool,
                        Err(e) => {
                            eprintln!("cannot start {jobs} workers: {e}");
                            return EXIT_USAGE;
                        }
                    };
                    pool.install(|| configs.par_iter().map(|c| cli.run_analysis(c, many)).collect())
                }
                _ => configs.iter().map(|c| cli.run_analysis(c, many)).collect(),
            };
            // Report the worst outcome: usage error, then numerical failure, then not certified.
            let rank = |code: i32| match code {
                EXIT_USAGE => 3,
                3 => 2,
                2 => 1,
                _ => 0,
            };
            codes.into_iter().max_by_key(|&c| rank(c)).unwrap_or(0)
        }
    }
}
