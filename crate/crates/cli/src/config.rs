//! Analysis configuration: JSON schema walk, typed model and semantic checks.
//!
//! Validation runs in two passes so that a malformed file reports every
//! problem at once. The structural pass walks the raw JSON against a static
//! schema (unknown keys, missing keys, wrong types). The semantic pass builds
//! the nominal system at the ends of the parameter range and checks the
//! invariants of each section.

use std::fmt;

use pi_iqc::num::Num;
use pi_iqc::pi::{Domain, PiBlocks, PiDims, PiOperator};
use pi_iqc::pie::{BoundaryConditions, DdeSpec, PdeOutput, PdeSpec};
use pi_iqc::polynomial::{parse_poly, Point, PolyMatrix};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One schema or invariant violation, located by a dotted path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// A constant given as a JSON number or as an expression such as `"0.5pi^2"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn value(&self) -> Result<Num, String> {
        match self {
            Scalar::Number(x) => Ok(num_from_f64(*x)),
            Scalar::Text(t) => {
                let p = parse_poly(t).map_err(|e| e.to_string())?;
                if !p.variables().is_empty() {
                    return Err(format!("{t:?} must be a constant"));
                }
                let v = p.eval_exact(&Point::new()).map_err(|e| e.to_string())?;
                Ok(v[0])
            }
        }
    }

    pub fn to_f64(&self) -> Result<f64, String> {
        self.value().map(|n| n.to_f64())
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Number(x)
    }
}

/// Integers stay exact; other values are kept as floats.
pub fn num_from_f64(x: f64) -> Num {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        Num::int(x as i64)
    } else {
        Num::float(x)
    }
}

/// `constant + per_param · p` for the searched parameter `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    #[serde(default = "Affine::zero_scalar")]
    pub constant: Scalar,
    #[serde(default = "Affine::zero_scalar")]
    pub per_param: Scalar,
}

impl Affine {
    fn zero_scalar() -> Scalar {
        Scalar::Number(0.0)
    }

    pub fn constant(c: f64) -> Self {
        Affine { constant: c.into(), per_param: 0.0.into() }
    }

    pub fn per_param(k: f64) -> Self {
        Affine { constant: 0.0.into(), per_param: k.into() }
    }

    /// Exact when the parameter does not enter.
    pub fn at(&self, p: f64) -> Result<Num, String> {
        let c = self.constant.value()?;
        let k = self.per_param.value()?;
        if k.is_zero() {
            Ok(c)
        } else {
            Ok(c + k * Num::float(p))
        }
    }
}

fn default_one() -> Affine {
    Affine::constant(1.0)
}

fn default_zero() -> Affine {
    Affine::constant(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcName {
    DirichletDirichlet,
    DirichletNeumann,
}

impl From<BcName> for BoundaryConditions {
    fn from(b: BcName) -> Self {
        match b {
            BcName::DirichletDirichlet => BoundaryConditions::DirichletDirichlet,
            BcName::DirichletNeumann => BoundaryConditions::DirichletNeumann,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputName {
    State,
    StateDerivative,
}

/// Scalar parabolic PDE `x_t = a x_ss + b x_s + (c + shift) x + u`, `y = gain · out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSystem {
    pub diffusion: String,
    #[serde(default = "zero_poly")]
    pub convection: String,
    #[serde(default = "zero_poly")]
    pub reaction: String,
    #[serde(default = "default_zero")]
    pub reaction_shift: Affine,
    pub bc: BcName,
    #[serde(default = "default_output")]
    pub output: OutputName,
    #[serde(default = "default_one")]
    pub output_gain: Affine,
}

fn zero_poly() -> String {
    "0".into()
}

fn default_output() -> OutputName {
    OutputName::State
}

/// Delay system `ẋ = A0 x + Ad x(t - τ)` with `1/τ = 1/τ0 + δ λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdeSystem {
    pub a0: Vec<Vec<f64>>,
    pub ad: Vec<Vec<f64>>,
    pub tau0: Scalar,
    pub lambda: Affine,
}

/// A PI operator written block by block with polynomial strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOperator {
    /// `[finite, distributed]` output dimensions.
    pub out: [usize; 2],
    /// `[finite, distributed]` input dimensions.
    #[serde(rename = "in")]
    pub input: [usize; 2],
    #[serde(default)]
    pub p: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub q1: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub q2: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub r0: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub r1: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub r2: Option<Vec<Vec<String>>>,
}

/// PIE given directly by its five operators; `output_gain` scales `C` and `D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieBlocksSystem {
    #[serde(default = "default_domain")]
    pub domain: [Scalar; 2],
    pub t: RawOperator,
    pub a: RawOperator,
    pub b: RawOperator,
    pub c: RawOperator,
    pub d: RawOperator,
    #[serde(default = "default_one")]
    pub output_gain: Affine,
}

fn default_domain() -> [Scalar; 2] {
    [0.0.into(), 1.0.into()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemSpec {
    Pde(PdeSystem),
    Dde(DdeSystem),
    Pie(PieBlocksSystem),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UncertaintySpec {
    /// Constant real scalar `|δ| ≤ 1`; uses `multiplier_psi` when given.
    ConstantReal,
    /// Time-varying scalar `|δ(t)| ≤ 1` with a static multiplier.
    TimeVarying,
    /// Pointwise sector `α v² ≤ v φ(v) ≤ β v²`.
    Sector { alpha: Scalar, beta: Scalar },
    /// Constant scalar gain in the convex hull of the listed values.
    Polytopic { vertices: Vec<Scalar> },
}

/// PDE filter for `H y = [z; y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiPde {
    pub diffusion: String,
    #[serde(default = "zero_poly")]
    pub convection: String,
    #[serde(default = "zero_poly")]
    pub reaction: String,
    pub bc: BcName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PsiSpec {
    Pde(PsiPde),
    /// `H y = [G y; y]` with the nominal system itself.
    Nominal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degrees {
    #[serde(default = "one")]
    pub storage: u32,
    #[serde(default = "one")]
    pub multiplier: u32,
    /// Slack Gram degree; absent picks storage + 2 capped by the inequality.
    #[serde(default)]
    pub slack: Option<u32>,
    /// Adds the interval-weighted Gram term to every positive operator.
    #[serde(default = "yes")]
    pub weighted: bool,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl Default for Degrees {
    fn default() -> Self {
        Degrees { storage: 1, multiplier: 1, slack: None, weighted: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Search {
    pub param: String,
    pub lo: Scalar,
    pub hi: Scalar,
    pub tol: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_feas_tol")]
    pub feas_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: u32,
    #[serde(default = "default_regularization")]
    pub regularization: f64,
}

fn default_backend() -> String {
    "clarabel".into()
}
fn default_feas_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> u32 {
    200
}
fn default_regularization() -> f64 {
    1e-6
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: default_backend(),
            feas_tol: default_feas_tol(),
            max_iter: default_max_iter(),
            regularization: default_regularization(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecheckConfig {
    #[serde(default = "default_grid")]
    pub grid_order: usize,
    #[serde(default = "default_subspace")]
    pub subspace_degree: usize,
    #[serde(default = "default_eig_tol")]
    pub eig_tol: f64,
    #[serde(default = "default_storage_tol")]
    pub storage_tol: f64,
    #[serde(default = "default_equality_tol")]
    pub equality_tol: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> usize {
    60
}
fn default_subspace() -> usize {
    20
}
fn default_eig_tol() -> f64 {
    1e-6
}
fn default_storage_tol() -> f64 {
    1e-8
}
fn default_equality_tol() -> f64 {
    1e-6
}
fn default_samples() -> usize {
    32
}

impl Default for RecheckConfig {
    fn default() -> Self {
        RecheckConfig {
            grid_order: default_grid(),
            subspace_degree: default_subspace(),
            eig_tol: default_eig_tol(),
            storage_tol: default_storage_tol(),
            equality_tol: default_equality_tol(),
            samples: default_samples(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub report: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub system: SystemSpec,
    pub uncertainty: UncertaintySpec,
    #[serde(default)]
    pub multiplier_psi: Option<PsiSpec>,
    #[serde(default)]
    pub degrees: Degrees,
    #[serde(default)]
    pub search: Option<Search>,
    /// Parameter value for a single test when there is no search.
    #[serde(default)]
    pub value: Option<Scalar>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub coercive: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub recheck: RecheckConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

// ---------------------------------------------------------------------------
// Structural schema

#[derive(Clone, Copy)]
enum Ty {
    Str,
    Bool,
    Num,
    UInt,
    Scalar,
    Affine,
    Obj(&'static [Field]),
    Tagged(&'static [(&'static str, &'static [Field])]),
    NumMatrix,
    StrMatrix,
    ScalarList,
    Pair,
    Enum(&'static [&'static str]),
}

#[derive(Clone, Copy)]
struct Field {
    name: &'static str,
    ty: Ty,
    required: bool,
}

const fn req(name: &'static str, ty: Ty) -> Field {
    Field { name, ty, required: true }
}

const fn opt(name: &'static str, ty: Ty) -> Field {
    Field { name, ty, required: false }
}

const BC: Ty = Ty::Enum(&["dirichlet-dirichlet", "dirichlet-neumann"]);

const AFFINE_FIELDS: &[Field] = &[opt("constant", Ty::Scalar), opt("per_param", Ty::Scalar)];

const PDE_FIELDS: &[Field] = &[
    req("diffusion", Ty::Str),
    opt("convection", Ty::Str),
    opt("reaction", Ty::Str),
    opt("reaction_shift", Ty::Affine),
    req("bc", BC),
    opt("output", Ty::Enum(&["state", "state-derivative"])),
    opt("output_gain", Ty::Affine),
];

const DDE_FIELDS: &[Field] =
    &[req("a0", Ty::NumMatrix), req("ad", Ty::NumMatrix), req("tau0", Ty::Scalar), req("lambda", Ty::Affine)];

const RAW_OP_FIELDS: &[Field] = &[
    req("out", Ty::Pair),
    req("in", Ty::Pair),
    opt("p", Ty::StrMatrix),
    opt("q1", Ty::StrMatrix),
    opt("q2", Ty::StrMatrix),
    opt("r0", Ty::StrMatrix),
    opt("r1", Ty::StrMatrix),
    opt("r2", Ty::StrMatrix),
];

const PIE_FIELDS: &[Field] = &[
    opt("domain", Ty::ScalarList),
    req("t", Ty::Obj(RAW_OP_FIELDS)),
    req("a", Ty::Obj(RAW_OP_FIELDS)),
    req("b", Ty::Obj(RAW_OP_FIELDS)),
    req("c", Ty::Obj(RAW_OP_FIELDS)),
    req("d", Ty::Obj(RAW_OP_FIELDS)),
    opt("output_gain", Ty::Affine),
];

const SYSTEM: Ty = Ty::Tagged(&[("pde", PDE_FIELDS), ("dde", DDE_FIELDS), ("pie", PIE_FIELDS)]);

const UNCERTAINTY: Ty = Ty::Tagged(&[
    ("constant-real", &[]),
    ("time-varying", &[]),
    ("sector", &[req("alpha", Ty::Scalar), req("beta", Ty::Scalar)]),
    ("polytopic", &[req("vertices", Ty::ScalarList)]),
]);

const PSI: Ty = Ty::Tagged(&[
    (
        "pde",
        &[req("diffusion", Ty::Str), opt("convection", Ty::Str), opt("reaction", Ty::Str), req("bc", BC)],
    ),
    ("nominal", &[]),
]);

const TOP: &[Field] = &[
    req("name", Ty::Str),
    opt("description", Ty::Str),
    req("system", SYSTEM),
    req("uncertainty", UNCERTAINTY),
    opt("multiplier_psi", PSI),
    opt(
        "degrees",
        Ty::Obj(&[
            opt("storage", Ty::UInt),
            opt("multiplier", Ty::UInt),
            opt("slack", Ty::UInt),
            opt("weighted", Ty::Bool),
        ]),
    ),
    opt(
        "search",
        Ty::Obj(&[req("param", Ty::Str), req("lo", Ty::Scalar), req("hi", Ty::Scalar), req("tol", Ty::Scalar)]),
    ),
    opt("value", Ty::Scalar),
    opt("epsilon", Ty::Num),
    opt("coercive", Ty::Num),
    opt(
        "solver",
        Ty::Obj(&[
            opt("backend", Ty::Str),
            opt("feas_tol", Ty::Num),
            opt("max_iter", Ty::UInt),
            opt("regularization", Ty::Num),
        ]),
    ),
    opt(
        "recheck",
        Ty::Obj(&[
            opt("grid_order", Ty::UInt),
            opt("subspace_degree", Ty::UInt),
            opt("eig_tol", Ty::Num),
            opt("storage_tol", Ty::Num),
            opt("equality_tol", Ty::Num),
            opt("samples", Ty::UInt),
            opt("seed", Ty::UInt),
        ]),
    ),
    opt("output", Ty::Obj(&[opt("report", Ty::Str)])),
];

/// Message of a structural violation for a key the schema does not define.
const UNKNOWN_KEY: &str = "unknown key";

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn check_fields(value: &Value, fields: &[Field], path: &str, skip: &[&str], out: &mut Vec<Violation>) {
    let Some(obj) = value.as_object() else {
        out.push(Violation { path: path.to_string(), message: "expected an object".into() });
        return;
    };
    for (key, v) in obj {
        if skip.contains(&key.as_str()) {
            continue;
        }
        match fields.iter().find(|f| f.name == key) {
            Some(f) => check_type(v, f.ty, &join(path, key), out),
            None => out.push(Violation { path: join(path, key), message: UNKNOWN_KEY.into() }),
        }
    }
    for f in fields {
        if f.required && !obj.contains_key(f.name) {
            out.push(Violation { path: join(path, f.name), message: "missing required key".into() });
        }
    }
}

fn check_type(value: &Value, ty: Ty, path: &str, out: &mut Vec<Violation>) {
    let mut bad = |expected: &str| out.push(Violation { path: path.to_string(), message: format!("expected {expected}") });
    match ty {
        Ty::Str => {
            if !value.is_string() {
                bad("a string");
            }
        }
        Ty::Bool => {
            if !value.is_boolean() {
                bad("true or false");
            }
        }
        Ty::Num => {
            if !value.is_number() {
                bad("a number");
            }
        }
        Ty::UInt => {
            if !value.is_u64() {
                bad("a nonnegative integer");
            }
        }
        Ty::Scalar => {
            if !(value.is_number() || value.is_string()) {
                bad("a number or a constant expression");
            }
        }
        Ty::Affine => {
            if value.is_object() {
                check_fields(value, AFFINE_FIELDS, path, &[], out);
            } else {
                bad("an object with `constant` and/or `per_param`");
            }
        }
        Ty::Obj(fields) => check_fields(value, fields, path, &[], out),
        Ty::Tagged(variants) => {
            let kind = value.get("kind").and_then(Value::as_str);
            match kind.and_then(|k| variants.iter().find(|(name, _)| *name == k)) {
                Some((_, fields)) => check_fields(value, fields, path, &["kind"], out),
                None => {
                    let names: Vec<&str> = variants.iter().map(|(n, _)| *n).collect();
                    out.push(Violation {
                        path: join(path, "kind"),
                        message: format!("expected one of {}", names.join(", ")),
                    });
                }
            }
        }
        Ty::NumMatrix | Ty::StrMatrix => {
            let want_num = matches!(ty, Ty::NumMatrix);
            let ok = value.as_array().is_some_and(|rows| {
                rows.iter().all(|r| {
                    r.as_array().is_some_and(|r| r.iter().all(|x| if want_num { x.is_number() } else { x.is_string() }))
                })
            });
            if !ok {
                bad(if want_num { "a matrix of numbers" } else { "a matrix of polynomial strings" });
            }
        }
        Ty::ScalarList => {
            if !value.as_array().is_some_and(|xs| xs.iter().all(|x| x.is_number() || x.is_string())) {
                bad("a list of numbers or constant expressions");
            }
        }
        Ty::Pair => {
            if !value.as_array().is_some_and(|xs| xs.len() == 2 && xs.iter().all(Value::is_u64)) {
                bad("a pair [finite, distributed] of nonnegative integers");
            }
        }
        Ty::Enum(names) => {
            if !value.as_str().is_some_and(|s| names.contains(&s)) {
                bad(&format!("one of {}", names.join(", ")));
            }
        }
    }
}

/// Structural violations of a raw JSON document.
pub fn schema_violations(value: &Value) -> Vec<Violation> {
    let mut out = Vec::new();
    check_fields(value, TOP, "", &[], &mut out);
    out
}

// ---------------------------------------------------------------------------
// Parsing and semantic checks

/// Parse and fully validate a configuration, listing every violation.
pub fn parse_config(text: &str) -> Result<AnalysisConfig, Vec<Violation>> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| vec![Violation { path: "<document>".into(), message: format!("invalid JSON: {e}") }])?;
    let mut value = value;
    let mut out = schema_violations(&value);
    // Unknown keys alone do not stop the semantic pass, so one run reports
    // everything; other structural errors would only resurface from serde.
    if out.iter().any(|v| v.message != UNKNOWN_KEY) {
        return Err(out);
    }
    for v in &out {
        remove_path(&mut value, &v.path);
    }
    let config: AnalysisConfig = serde_json::from_value(value)
        .map_err(|e| vec![Violation { path: "<document>".into(), message: e.to_string() }])?;
    out.extend(config.violations());
    if out.is_empty() {
        Ok(config)
    } else {
        Err(out)
    }
}

fn remove_path(value: &mut Value, path: &str) {
    let (parent, key) = match path.rsplit_once('.') {
        Some((parent, key)) => (parent.split('.').try_fold(value, |v, k| v.get_mut(k)), key),
        None => (Some(value), path),
    };
    if let Some(obj) = parent.and_then(Value::as_object_mut) {
        obj.remove(key);
    }
}

impl AnalysisConfig {
    /// Parameter values the analysis will visit at its extremes.
    pub fn extreme_values(&self) -> Result<Vec<f64>, String> {
        match (&self.search, &self.value) {
            (Some(s), _) => Ok(vec![s.lo.to_f64()?, s.hi.to_f64()?]),
            (None, Some(v)) => Ok(vec![v.to_f64()?]),
            (None, None) => Ok(vec![0.0]),
        }
    }

    /// Semantic invariant violations; empty when the configuration is usable.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |path: &str, message: String| out.push(Violation { path: path.into(), message });
        if self.name.trim().is_empty() {
            push("name", "must not be empty".into());
        }
        if let Some(s) = &self.search {
            let lo = s.lo.to_f64();
            let hi = s.hi.to_f64();
            let tol = s.tol.to_f64();
            for (p, r) in [("search.lo", &lo), ("search.hi", &hi), ("search.tol", &tol)] {
                if let Err(e) = r {
                    push(p, e.clone());
                }
            }
            if let (Ok(lo), Ok(hi)) = (&lo, &hi) {
                if !(lo < hi) {
                    push("search", format!("lo must be below hi (got lo = {lo}, hi = {hi})"));
                }
            }
            if let Ok(t) = tol {
                if !(t > 0.0) {
                    push("search.tol", format!("must be positive (got {t})"));
                }
            }
            if s.param.trim().is_empty() {
                push("search.param", "must not be empty".into());
            }
            if self.value.is_some() {
                push("value", "must not be combined with search".into());
            }
        }
        if let Some(v) = &self.value {
            if let Err(e) = v.to_f64() {
                push("value", e);
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                push("epsilon", format!("must be positive (got {e})"));
            }
        }
        if let Some(c) = self.coercive {
            if !(c >= 0.0) {
                push("coercive", format!("must be nonnegative (got {c})"));
            }
        }
        if self.solver.backend != "clarabel" {
            push("solver.backend", format!("unknown backend {:?}; available: clarabel", self.solver.backend));
        }
        if !(self.solver.feas_tol > 0.0) {
            push("solver.feas_tol", format!("must be positive (got {})", self.solver.feas_tol));
        }
        if !(self.solver.regularization > 0.0) {
            push("solver.regularization", format!("must be positive (got {})", self.solver.regularization));
        }
        if self.solver.max_iter == 0 {
            push("solver.max_iter", "must be positive".into());
        }
        if self.recheck.grid_order < 2 {
            push("recheck.grid_order", "must be at least 2".into());
        }
        if !(self.recheck.eig_tol >= 0.0 && self.recheck.storage_tol >= 0.0 && self.recheck.equality_tol >= 0.0) {
            push("recheck", "tolerances must be nonnegative".into());
        }
        if self.degrees.storage > 6 || self.degrees.multiplier > 6 || self.degrees.slack.is_some_and(|s| s > 8) {
            push("degrees", "degrees above 6 (slack 8) are not supported".into());
        }
        match &self.uncertainty {
            UncertaintySpec::Sector { alpha, beta } => match (alpha.to_f64(), beta.to_f64()) {
                (Ok(a), Ok(b)) if !(a < b) => push("uncertainty", format!("sector needs alpha < beta (got {a}, {b})")),
                (Err(e), _) => push("uncertainty.alpha", e),
                (_, Err(e)) => push("uncertainty.beta", e),
                _ => {}
            },
            UncertaintySpec::Polytopic { vertices } => {
                if vertices.is_empty() {
                    push("uncertainty.vertices", "must list at least one vertex".into());
                }
                for (k, v) in vertices.iter().enumerate() {
                    if let Err(e) = v.to_f64() {
                        push(&format!("uncertainty.vertices[{k}]"), e);
                    }
                }
            }
            _ => {}
        }
        if self.multiplier_psi.is_some() && !matches!(self.uncertainty, UncertaintySpec::ConstantReal) {
            push("multiplier_psi", "only the constant-real uncertainty takes a dynamic multiplier".into());
        }
        if let Some(PsiSpec::Pde(psi)) = &self.multiplier_psi {
            if let Err(e) = psi.spec() {
                push("multiplier_psi", e);
            }
        }
        match self.extreme_values() {
            Ok(values) => {
                let mut seen = std::collections::BTreeSet::new();
                for p in values {
                    if let Err(e) = self.system.build_check(p) {
                        if seen.insert(e.clone()) {
                            push("system", e);
                        }
                    }
                }
            }
            Err(e) => push("search", e),
        }
        out
    }
}

impl PsiPde {
    pub fn spec(&self) -> Result<PdeSpec, String> {
        PdeSpec::scalar(&self.diffusion, &self.convection, &self.reaction, self.bc.into(), PdeOutput::State)
            .map_err(|e| e.to_string())
    }
}

impl PdeSystem {
    pub fn spec(&self, p: f64) -> Result<PdeSpec, String> {
        let output = match self.output {
            OutputName::State => PdeOutput::State,
            OutputName::StateDerivative => PdeOutput::StateDerivative,
        };
        let mut spec = PdeSpec::scalar(&self.diffusion, &self.convection, &self.reaction, self.bc.into(), output)
            .map_err(|e| e.to_string())?;
        let shift = self.reaction_shift.at(p)?;
        if !shift.is_zero() {
            spec.reaction = spec.reaction.add(&PolyMatrix::scalar(shift)).map_err(|e| e.to_string())?;
        }
        Ok(spec)
    }
}

impl DdeSystem {
    pub fn spec(&self, p: f64) -> Result<DdeSpec, String> {
        let matrix = |name: &str, rows: &[Vec<f64>]| -> Result<PolyMatrix, String> {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(format!("{name} must be a nonempty square matrix"));
            }
            let vals: Vec<Num> = rows.iter().flatten().map(|&x| num_from_f64(x)).collect();
            Ok(PolyMatrix::from_constants(n, n, &vals))
        };
        let tau0 = self.tau0.value()?;
        if !(tau0 > Num::ZERO) {
            return Err(format!("tau0 must be positive (got {tau0})"));
        }
        let lambda = self.lambda.at(p)?;
        DdeSpec::new(matrix("a0", &self.a0)?, matrix("ad", &self.ad)?, tau0, lambda).map_err(|e| e.to_string())
    }
}

impl RawOperator {
    pub fn build(&self, domain: Domain) -> Result<PiOperator, String> {
        let out = PiDims::new(self.out[0], self.out[1]);
        let input = PiDims::new(self.input[0], self.input[1]);
        let mut blocks = PiBlocks::zeros(out, input);
        let slots: [(&str, &Option<Vec<Vec<String>>>, &mut PolyMatrix, (usize, usize)); 6] = [
            ("p", &self.p, &mut blocks.p, (out.finite, input.finite)),
            ("q1", &self.q1, &mut blocks.q1, (out.finite, input.distributed)),
            ("q2", &self.q2, &mut blocks.q2, (out.distributed, input.finite)),
            ("r0", &self.r0, &mut blocks.r0, (out.distributed, input.distributed)),
            ("r1", &self.r1, &mut blocks.r1, (out.distributed, input.distributed)),
            ("r2", &self.r2, &mut blocks.r2, (out.distributed, input.distributed)),
        ];
        for (name, src, dst, shape) in slots {
            let Some(rows) = src else { continue };
            if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
                return Err(format!("block {name} must be {}x{}", shape.0, shape.1));
            }
            let mut m = PolyMatrix::zeros(shape.0, shape.1);
            for (i, row) in rows.iter().enumerate() {
                for (j, text) in row.iter().enumerate() {
                    let e = parse_poly(text).map_err(|e| format!("block {name}[{i}][{j}]: {e}"))?;
                    m = m.add(&e.embed(shape.0, shape.1, i, j)).map_err(|e| e.to_string())?;
                }
            }
            *dst = m;
        }
        PiOperator::new(out, input, domain, blocks).map_err(|e| e.to_string())
    }
}

impl SystemSpec {
    fn build_check(&self, p: f64) -> Result<(), String> {
        crate::driver::nominal_system(self, p).map(|_| ())
    }
}
