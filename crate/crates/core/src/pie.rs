//! Partial integral equation (PIE) systems
//!
//! ```text
//! T ẋ(t) = A x(t) + B u(t)
//!   y(t) = C x(t) + D u(t)
//! ```
//!
//! and builders for second-order parabolic PDEs on `[0, 1]`, the delay
//! system `ẋ = A0 x + Ad x(t - τ)` and stacked multiplier dynamics.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::num::Num;
use crate::pi::{Domain, PiDims, PiError, PiOperator};
use crate::polynomial::{parse_poly, PolyMatrix, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PieError {
    #[error("unsupported boundary conditions {0:?} (expected dirichlet-dirichlet or dirichlet-neumann)")]
    UnsupportedBc(String),
    #[error("diffusion coefficient is not positive at s = {at}")]
    NonPositiveDiffusion { at: f64 },
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error(transparent)]
    Pi(#[from] PiError),
}

/// `{T, A, B, C, D}` on a common domain.
#[derive(Clone, Debug, PartialEq)]
pub struct PieSystem {
    pub t: PiOperator,
    pub a: PiOperator,
    pub b: PiOperator,
    pub c: PiOperator,
    pub d: PiOperator,
}

impl PieSystem {
    pub fn new(
        t: PiOperator,
        a: PiOperator,
        b: PiOperator,
        c: PiOperator,
        d: PiOperator,
    ) -> Result<Self, PieError> {
        let x = t.in_dims();
        let u = b.in_dims();
        let y = c.out_dims();
        let checks = [
            ("T", &t, x, x),
            ("A", &a, x, x),
            ("B", &b, x, u),
            ("C", &c, y, x),
            ("D", &d, y, u),
        ];
        for (name, op, out, inp) in checks {
            if op.out_dims() != out || op.in_dims() != inp {
                return Err(PieError::Invalid(format!(
                    "{name} maps {}→{}, expected {inp}→{out}",
                    op.in_dims(),
                    op.out_dims()
                )));
            }
            if op.domain() != t.domain() {
                return Err(PieError::Pi(PiError::DomainMismatch));
            }
            if op.has_decision_vars() {
                return Err(PieError::Invalid(format!("{name} carries decision variables")));
            }
        }
        Ok(Self { t, a, b, c, d })
    }

    /// Memoryless system `y = D u`.
    pub fn static_gain(d: PiOperator) -> Self {
        let domain = d.domain();
        let x = PiDims::new(0, 0);
        Self {
            t: PiOperator::zero(x, x, domain),
            a: PiOperator::zero(x, x, domain),
            b: PiOperator::zero(x, d.in_dims(), domain),
            c: PiOperator::zero(d.out_dims(), x, domain),
            d,
        }
    }

    /// `y = u`.
    pub fn identity(dims: PiDims, domain: Domain) -> Self {
        Self::static_gain(PiOperator::identity(dims, domain))
    }

    pub fn state_dims(&self) -> PiDims {
        self.t.in_dims()
    }

    pub fn input_dims(&self) -> PiDims {
        self.b.in_dims()
    }

    pub fn output_dims(&self) -> PiDims {
        self.c.out_dims()
    }

    pub fn domain(&self) -> Domain {
        self.t.domain()
    }

    pub fn has_state(&self) -> bool {
        !self.state_dims().is_empty()
    }

    /// Multiply the output by `c`.
    pub fn scale_output(&self, c: Num) -> Self {
        Self { c: self.c.scale(c), d: self.d.scale(c), ..self.clone() }
    }

    /// The system `u ↦ [G u; u]`.
    pub fn stack_with_input(&self) -> Result<Self, PieError> {
        let domain = self.domain();
        let u = self.input_dims();
        let zero_c = PiOperator::zero(u, self.state_dims(), domain);
        let id = PiOperator::identity(u, domain);
        Ok(Self {
            c: PiOperator::vcat(&[&self.c, &zero_c])?,
            d: PiOperator::vcat(&[&self.d, &id])?,
            ..self.clone()
        })
    }

    /// Parallel systems with stacked states, inputs and outputs.
    pub fn blkdiag(parts: &[&PieSystem]) -> Result<Self, PieError> {
        let pick = |f: fn(&PieSystem) -> &PiOperator| -> Result<PiOperator, PiError> {
            let ops: Vec<&PiOperator> = parts.iter().map(|p| f(p)).collect();
            PiOperator::blkdiag(&ops)
        };
        Ok(Self {
            t: pick(|p| &p.t)?,
            a: pick(|p| &p.a)?,
            b: pick(|p| &p.b)?,
            c: pick(|p| &p.c)?,
            d: pick(|p| &p.d)?,
        })
    }
}

impl fmt::Display for PieSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, op) in [("T", &self.t), ("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d)] {
            writeln!(f, "== {name} ==")?;
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryConditions {
    /// `x(0) = x(1) = 0`.
    DirichletDirichlet,
    /// `x(0) = x_s(1) = 0`.
    DirichletNeumann,
}

impl FromStr for BoundaryConditions {
    type Err = PieError;
    fn from_str(s: &str) -> Result<Self, PieError> {
        match s {
            "dirichlet-dirichlet" | "dd" => Ok(Self::DirichletDirichlet),
            "dirichlet-neumann" | "dn" => Ok(Self::DirichletNeumann),
            other => Err(PieError::UnsupportedBc(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PdeOutput {
    State,
    StateDerivative,
}

/// `x_t = a(s) x_ss + b(s) x_s + c(s) x + u` on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeSpec {
    pub diffusion: PolyMatrix,
    pub convection: PolyMatrix,
    pub reaction: PolyMatrix,
    pub bc: BoundaryConditions,
    pub output: PdeOutput,
}

impl PdeSpec {
    /// Scalar PDE from polynomial literals.
    pub fn scalar(a: &str, b: &str, c: &str, bc: BoundaryConditions, output: PdeOutput) -> Result<Self, PieError> {
        let parse = |text: &str| parse_poly(text).map_err(|e| PieError::Invalid(e.to_string()));
        Ok(Self { diffusion: parse(a)?, convection: parse(b)?, reaction: parse(c)?, bc, output })
    }

    pub fn components(&self) -> usize {
        self.diffusion.rows()
    }

    fn validate(&self) -> Result<(), PieError> {
        let n = self.components();
        for (name, p) in [("diffusion", &self.diffusion), ("convection", &self.convection), ("reaction", &self.reaction)] {
            if p.shape() != (n, n) {
                return Err(PieError::Invalid(format!("{name} coefficient must be {n}x{n}")));
            }
            if p.has_decision_vars() || p.variables().iter().any(|v| *v != Var::S) {
                return Err(PieError::Invalid(format!("{name} coefficient must be a polynomial in s")));
            }
        }
        for k in 0..=200 {
            let s = k as f64 / 200.0;
            let point = crate::polynomial::Point::new().s(s);
            let m = self
                .diffusion
                .eval(&point, &Default::default())
                .map_err(|e| PieError::Invalid(e.to_string()))?;
            let sym = (&m + m.transpose()) * 0.5;
            let min = sym.symmetric_eigenvalues().min();
            if !(min > 0.0) {
                return Err(PieError::NonPositiveDiffusion { at: s });
            }
        }
        Ok(())
    }
}

/// Operators recovering `x` and `x_s` from `x_ss` under the boundary
/// conditions, on `n` components over `[0, 1]`.
pub fn reconstruction_operators(bc: BoundaryConditions, n: usize) -> (PiOperator, PiOperator) {
    let k = |text: &str| parse_poly(text).expect("static kernel").kron_identity(n);
    let domain = Domain::unit();
    let (t1, t2, d1, d2) = match bc {
        BoundaryConditions::DirichletDirichlet => ("t*(s - 1)", "s*(t - 1)", "t", "t - 1"),
        BoundaryConditions::DirichletNeumann => ("-t", "-s", "0", "-1"),
    };
    let t = PiOperator::integral(k(t1), k(t2), domain).expect("valid kernel shapes");
    let d = PiOperator::integral(k(d1), k(d2), domain).expect("valid kernel shapes");
    (t, d)
}

/// PIE of the parabolic PDE with fundamental state `x_ss` and distributed input.
pub fn pde_to_pie(spec: &PdeSpec) -> Result<PieSystem, PieError> {
    spec.validate()?;
    let n = spec.components();
    let domain = Domain::unit();
    let (t, d1) = reconstruction_operators(spec.bc, n);
    let ma = PiOperator::multiplier(spec.diffusion.clone(), domain)?;
    let mb = PiOperator::multiplier(spec.convection.clone(), domain)?;
    let mc = PiOperator::multiplier(spec.reaction.clone(), domain)?;
    let a = ma.add(&mb.compose(&d1)?)?.add(&mc.compose(&t)?)?;
    let dims = PiDims::new(0, n);
    let b = PiOperator::identity(dims, domain);
    let c = match spec.output {
        PdeOutput::State => t.clone(),
        PdeOutput::StateDerivative => d1,
    };
    let d = PiOperator::zero(dims, dims, domain);
    PieSystem::new(t, a, b, c, d)
}

/// `ẋ(t) = A0 x(t) + Ad x(t - τ)` with `1/τ = 1/τ0 + δ λ`, `|δ| ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DdeSpec {
    pub a0: PolyMatrix,
    pub ad: PolyMatrix,
    pub tau0: Num,
    pub lambda: Num,
}

impl DdeSpec {
    pub fn new(a0: PolyMatrix, ad: PolyMatrix, tau0: Num, lambda: Num) -> Result<Self, PieError> {
        let n = a0.rows();
        if a0.shape() != (n, n) || ad.shape() != (n, n) {
            return Err(PieError::Invalid("A0 and Ad must be square and of equal size".into()));
        }
        if !a0.variables().is_empty() || !ad.variables().is_empty() {
            return Err(PieError::Invalid("A0 and Ad must be constant".into()));
        }
        if !(tau0 > Num::ZERO) {
            return Err(PieError::Invalid(format!("tau0 must be positive, got {tau0}")));
        }
        if lambda < Num::ZERO {
            return Err(PieError::Invalid(format!("lambda must be nonnegative, got {lambda}")));
        }
        if !(tau0.recip().expect("tau0 > 0") - lambda > Num::ZERO) {
            return Err(PieError::Invalid("1/tau0 - lambda must be positive".into()));
        }
        Ok(Self { a0, ad, tau0, lambda })
    }

    /// Delay interval `[τ_min, τ_max]` covered by the uncertainty level.
    pub fn delay_interval(tau0: f64, lambda: f64) -> (f64, f64) {
        (1.0 / (1.0 / tau0 + lambda), 1.0 / (1.0 / tau0 - lambda))
    }
}

/// PIE of the delay system on `[-1, 0]` with state `(x(t), ψ)` where the
/// history is `φ(s) = x(t) - ∫_s^0 ψ(θ) dθ` and `φ(-1) = x(t - τ)`.
pub fn dde_to_pie(spec: &DdeSpec) -> Result<PieSystem, PieError> {
    let n = spec.a0.rows();
    let domain = Domain::new(-Num::ONE, Num::ZERO)?;
    let dims = PiDims::new(n, n);
    let id = PolyMatrix::identity(n);
    let op = |p: PolyMatrix, q1: PolyMatrix, q2: PolyMatrix, r0: PolyMatrix, r2: PolyMatrix| {
        PiOperator::new(
            dims,
            dims,
            domain,
            crate::pi::PiBlocks { p, q1, q2, r0, r1: PolyMatrix::zeros(n, n), r2 },
        )
    };
    let zero = PolyMatrix::zeros(n, n);
    let t = op(id.clone(), zero.clone(), id.clone(), zero.clone(), id.neg())?;
    let inv_tau = spec.tau0.recip().expect("validated tau0");
    let a = op(
        spec.a0.add(&spec.ad).map_err(PiError::from)?,
        spec.ad.neg(),
        zero.clone(),
        id.scale(inv_tau),
        zero.clone(),
    )?;
    let b = op(zero.clone(), zero.clone(), zero.clone(), id.scale(spec.lambda), zero.clone())?;
    let c = PiOperator::identity(dims, domain);
    let d = PiOperator::zero(dims, dims, domain);
    PieSystem::new(t, a, b, c, d)
}

/// Multiplier dynamics `Ψ`. `None` gives the identity on `channels`;
/// otherwise `Ψ = blkdiag(H, H)` with `H y = [z; y]` and `z` the state of
/// the PDE driven by `y`.
pub fn psi_from_pde(spec: Option<&PdeSpec>, channels: PiDims, domain: Domain) -> Result<PieSystem, PieError> {
    let Some(spec) = spec else {
        return Ok(PieSystem::identity(channels, domain));
    };
    let mut h_spec = spec.clone();
    h_spec.output = PdeOutput::State;
    let h = pde_to_pie(&h_spec)?.stack_with_input()?;
    if h.input_dims() * 2 != channels {
        return Err(PieError::Invalid(format!(
            "multiplier input {} does not cover channels {channels}",
            h.input_dims()
        )));
    }
    PieSystem::blkdiag(&[&h, &h])
}

/// `Ψ = blkdiag(H, H)` with `H y = [G y; y]` for a given system `G`.
pub fn psi_from_system(g: &PieSystem) -> Result<PieSystem, PieError> {
    let h = g.stack_with_input()?;
    PieSystem::blkdiag(&[&h, &h])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pi::PiVector;

    #[test]
    fn heat_equation_has_identity_a() {
        let spec = PdeSpec::scalar("1", "0", "0", BoundaryConditions::DirichletDirichlet, PdeOutput::State).unwrap();
        let pie = pde_to_pie(&spec).unwrap();
        assert_eq!(pie.a, PiOperator::identity(PiDims::new(0, 1), Domain::unit()));
        assert!(pie.d.is_zero());
    }

    #[test]
    fn reconstruction_is_exact_on_polynomials() {
        // x = s(1 - s)^2 ... with x(0) = 0 and x(1) = 0.
        let x = parse_poly("s - 2s^2 + s^3").unwrap();
        let xss = parse_poly("-4 + 6s").unwrap();
        let xs = parse_poly("1 - 4s + 3s^2").unwrap();
        let (t, d1) = reconstruction_operators(BoundaryConditions::DirichletDirichlet, 1);
        let input = PiVector { finite: PolyMatrix::zeros(0, 1), distributed: xss };
        assert_eq!(t.apply_symbolic(&input).unwrap().distributed, x);
        assert_eq!(d1.apply_symbolic(&input).unwrap().distributed, xs);
        // x = 2s - s^2: x(0) = 0, x_s(1) = 0.
        let input = PiVector { finite: PolyMatrix::zeros(0, 1), distributed: parse_poly("-2").unwrap() };
        let (t, d1) = reconstruction_operators(BoundaryConditions::DirichletNeumann, 1);
        assert_eq!(t.apply_symbolic(&input).unwrap().distributed, parse_poly("2s - s^2").unwrap());
        assert_eq!(d1.apply_symbolic(&input).unwrap().distributed, parse_poly("2 - 2s").unwrap());
    }

    #[test]
    fn bc_parsing() {
        assert_eq!("dd".parse::<BoundaryConditions>().unwrap(), BoundaryConditions::DirichletDirichlet);
        assert!(matches!("robin".parse::<BoundaryConditions>(), Err(PieError::UnsupportedBc(_))));
    }

    #[test]
    fn negative_diffusion_rejected() {
        let spec = PdeSpec::scalar("s - 0.5", "0", "0", BoundaryConditions::DirichletDirichlet, PdeOutput::State).unwrap();
        assert!(matches!(pde_to_pie(&spec), Err(PieError::NonPositiveDiffusion { .. })));
    }

    fn delay_spec(lambda: Num) -> DdeSpec {
        let a0 = PolyMatrix::from_constants(2, 2, &[Num::ZERO, Num::ONE, Num::int(-2), Num::ONE]);
        let ad = PolyMatrix::from_constants(2, 2, &[Num::ZERO, Num::ZERO, Num::ONE, Num::ZERO]);
        DdeSpec::new(a0, ad, Num::ratio(189, 1000), lambda).unwrap()
    }

    #[test]
    fn delay_blocks() {
        let pie = dde_to_pie(&delay_spec(Num::ZERO)).unwrap();
        assert_eq!(
            pie.a.p(),
            &PolyMatrix::from_constants(2, 2, &[Num::ZERO, Num::ONE, Num::int(-1), Num::ONE])
        );
        assert_eq!(
            pie.a.q1(),
            &PolyMatrix::from_constants(2, 2, &[Num::ZERO, Num::ZERO, Num::int(-1), Num::ZERO])
        );
        assert_eq!(pie.a.r0(), &PolyMatrix::identity(2).scale(Num::ratio(1000, 189)));
        assert!(pie.b.is_zero());
        let pie = dde_to_pie(&delay_spec(Num::int(3))).unwrap();
        assert_eq!(pie.b.r0(), &PolyMatrix::identity(2).scale(Num::int(3)));
        assert!(DdeSpec::new(PolyMatrix::identity(1), PolyMatrix::identity(1), Num::int(-1), Num::ZERO).is_err());
    }

    #[test]
    fn stacked_multiplier_shapes() {
        let domain = Domain::unit();
        let id = psi_from_pde(None, PiDims::new(0, 2), domain).unwrap();
        assert!(!id.has_state());
        assert_eq!(id.d, PiOperator::identity(PiDims::new(0, 2), domain));
        let h = PdeSpec::scalar("1", "0", "0.5*pi^2", BoundaryConditions::DirichletDirichlet, PdeOutput::State).unwrap();
        let psi = psi_from_pde(Some(&h), PiDims::new(0, 2), domain).unwrap();
        assert_eq!(psi.output_dims(), PiDims::new(0, 4));
        assert_eq!(psi.state_dims(), PiDims::new(0, 2));
        let single = pde_to_pie(&h).unwrap().stack_with_input().unwrap();
        assert_eq!(single.d.r0(), &PolyMatrix::from_constants(2, 1, &[Num::ZERO, Num::ONE]));
        assert!(single.c.sub_operator((0..0, 1..2), (0..0, 0..1)).is_zero());
    }
}
