//! Multiplier families: for each class of uncertainty a filter `Ψ`, an
//! affine self-adjoint operator `K` in fresh decision variables and the
//! convex constraints those variables must satisfy, so that
//! `∫ ⟨Ψ[y; Δy], K Ψ[y; Δy]⟩ dt ≥ 0` holds for every admissible `Δ`.

use serde::Serialize;
use thiserror::Error;

use crate::num::Num;
use crate::pi::{Domain, PiBlocks, PiDims, PiError, PiOperator};
use crate::pie::{PieError, PieSystem};
use crate::polynomial::ScalarAffine;
use crate::sdp::{
    free_pi_param, free_self_adjoint_param, free_skew_param, nonneg_poly_param, positive_pi_param, ParamDegrees, SdpError, SdpProblem, Sign,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IqcError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty sector: alpha {alpha} must be below beta {beta}")]
    EmptySector { alpha: f64, beta: f64 },
    #[error("vertex {0} carries decision variables")]
    NonConstantVertex(usize),
    #[error(transparent)]
    Pi(#[from] PiError),
    #[error(transparent)]
    Pie(#[from] PieError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierKind {
    ConstantReal,
    TimeVaryingReal,
    Polytopic,
    Sector,
    Conic,
}

/// How a side constraint is imposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enforcement {
    /// Holds for every value of the variables by the way they were built
    /// (Gram or SOS parameterization); kept for rechecking.
    ByConstruction,
    /// Must be added to the program by matching against a positive slack.
    Slack,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SideConstraint {
    pub label: String,
    pub expr: PiOperator,
    pub sign: Sign,
    pub enforcement: Enforcement,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierFamily {
    pub kind: MultiplierKind,
    pub psi: PieSystem,
    pub k: PiOperator,
    pub side_constraints: Vec<SideConstraint>,
}

impl MultiplierFamily {
    /// Channel dimensions `[y; w]` the filter acts on.
    pub fn channels(&self) -> PiDims {
        self.psi.input_dims()
    }
}

fn gain_ball_k(
    problem: &mut SdpProblem,
    name: &str,
    dims: PiDims,
    domain: Domain,
    degree: u32,
) -> Result<(PiOperator, Vec<SideConstraint>), IqcError> {
    let p = positive_pi_param(problem, &format!("{name}.P"), dims, domain, ParamDegrees::uniform(degree))?;
    let r = free_skew_param(problem, &format!("{name}.S"), dims, domain, degree)?;
    let k = PiOperator::block(&[vec![&p.op, &r], vec![&r.adjoint(), &p.op.neg()]])?;
    let side = vec![SideConstraint {
        label: format!("{name}.P >= 0"),
        expr: p.op,
        sign: Sign::Psd,
        enforcement: Enforcement::ByConstruction,
    }];
    Ok((k, side))
}

/// Scalar constant gain `|δ| ≤ 1` acting on every channel component:
/// `K = [[𝒫, ℛ], [ℛ*, -𝒫]]` with `𝒫 ⪰ 0`, `ℛ = -ℛ*`, on the outputs of
/// `Ψ = blkdiag(H, H)`.
pub fn constant_real_iqc(
    problem: &mut SdpProblem,
    name: &str,
    h: &PieSystem,
    degree: u32,
) -> Result<MultiplierFamily, IqcError> {
    let psi = PieSystem::blkdiag(&[h, h])?;
    let (k, side) = gain_ball_k(problem, name, h.output_dims(), h.domain(), degree)?;
    Ok(MultiplierFamily { kind: MultiplierKind::ConstantReal, psi, k, side_constraints: side })
}

/// Time-varying scalar gain `sup |δ(t)| ≤ 1`: the same `K` with `Ψ = I`.
pub fn time_varying_iqc(
    problem: &mut SdpProblem,
    name: &str,
    dims: PiDims,
    domain: Domain,
    degree: u32,
) -> Result<MultiplierFamily, IqcError> {
    let psi = PieSystem::identity(dims * 2, domain);
    let (k, side) = gain_ball_k(problem, name, dims, domain, degree)?;
    Ok(MultiplierFamily { kind: MultiplierKind::TimeVaryingReal, psi, k, side_constraints: side })
}

/// `Δ` in the convex hull of decision-free `vertices`:
/// `K = [[𝒫, ℛ], [ℛ*, 𝒬]]` with `𝒬 ⪯ 0` and, at every vertex,
/// `𝒫 + Δᵢ*ℛ* + ℛΔᵢ + Δᵢ*𝒬Δᵢ ⪰ 0`. `Ψ = I`.
pub fn polytopic_iqc(
    problem: &mut SdpProblem,
    name: &str,
    vertices: &[PiOperator],
    degree: u32,
) -> Result<MultiplierFamily, IqcError> {
    let first = vertices.first().ok_or_else(|| IqcError::ShapeMismatch("no vertices".into()))?;
    let dims = first.in_dims();
    let domain = first.domain();
    for (i, v) in vertices.iter().enumerate() {
        if v.in_dims() != dims || v.out_dims() != dims || v.domain() != domain {
            return Err(IqcError::ShapeMismatch(format!("vertex {i} maps {} to {}", v.in_dims(), v.out_dims())));
        }
        if v.has_decision_vars() {
            return Err(IqcError::NonConstantVertex(i));
        }
    }
    let p = free_self_adjoint_param(problem, &format!("{name}.P"), dims, domain, degree)?;
    let q = free_self_adjoint_param(problem, &format!("{name}.Q"), dims, domain, degree)?;
    let r = free_pi_param(problem, &format!("{name}.R"), dims, dims, domain, degree)?;
    let k = PiOperator::block(&[vec![&p, &r], vec![&r.adjoint(), &q]])?;
    let mut side = vec![SideConstraint {
        label: format!("{name}.Q <= 0"),
        expr: q.clone(),
        sign: Sign::Nsd,
        enforcement: Enforcement::Slack,
    }];
    for (i, v) in vertices.iter().enumerate() {
        let rv = r.compose(v)?;
        let expr = p.add(&rv)?.add(&rv.adjoint())?.add(&v.adjoint().compose(&q.compose(v)?)?)?;
        side.push(SideConstraint {
            label: format!("{name}.vertex{i} >= 0"),
            expr,
            sign: Sign::Psd,
            enforcement: Enforcement::Slack,
        });
    }
    let psi = PieSystem::identity(dims * 2, domain);
    Ok(MultiplierFamily { kind: MultiplierKind::Polytopic, psi, k, side_constraints: side })
}

/// Pointwise sector `α v² ≤ φ(v) v ≤ β v²`:
/// `K = L* [[0, ℛ], [ℛ, 0]] L` with `L = [[βI, -I], [-αI, I]]` and `ℛ` a
/// multiplier `R0(s) ⪰ 0` (a PSD matrix on finite components). `Ψ = I`.
pub fn sector_iqc(
    problem: &mut SdpProblem,
    name: &str,
    dims: PiDims,
    domain: Domain,
    alpha: Num,
    beta: Num,
    degree: u32,
) -> Result<MultiplierFamily, IqcError> {
    if alpha.to_f64() >= beta.to_f64() {
        return Err(IqcError::EmptySector { alpha: alpha.to_f64(), beta: beta.to_f64() });
    }
    let mut blocks = PiBlocks::zeros(dims, dims);
    if dims.finite > 0 {
        blocks.p = problem.psd_block(&format!("{name}.Rf"), dims.finite).matrix();
    }
    if dims.distributed > 0 {
        blocks.r0 = nonneg_poly_param(problem, &format!("{name}.R0"), dims.distributed, degree / 2, domain);
    }
    let r = PiOperator::new(dims, dims, domain, blocks)?;
    let id = PiOperator::identity(dims, domain);
    let zero = PiOperator::zero(dims, dims, domain);
    let l = PiOperator::block(&[vec![&id.scale(beta), &id.neg()], vec![&id.scale(-alpha), &id]])?;
    let mid = PiOperator::block(&[vec![&zero, &r], vec![&r, &zero]])?;
    let k = l.adjoint().compose(&mid.compose(&l)?)?;
    let side = vec![SideConstraint {
        label: format!("{name}.R >= 0"),
        expr: r,
        sign: Sign::Psd,
        enforcement: Enforcement::ByConstruction,
    }];
    let psi = PieSystem::identity(dims * 2, domain);
    Ok(MultiplierFamily { kind: MultiplierKind::Sector, psi, k, side_constraints: side })
}

/// Sum of IQCs on the same channels: `Ψ = [Ψ₁; Ψ₂; …]`,
/// `K = blkdiag(K₁, K₂, …)`. Nonnegative weights are absorbed into each
/// family's homogeneous variables.
pub fn conic_combination(families: Vec<MultiplierFamily>) -> Result<MultiplierFamily, IqcError> {
    let mut iter = families.into_iter();
    let first = iter.next().ok_or_else(|| IqcError::ShapeMismatch("no families".into()))?;
    let rest: Vec<MultiplierFamily> = iter.collect();
    if rest.is_empty() {
        return Ok(first);
    }
    let all: Vec<&MultiplierFamily> = std::iter::once(&first).chain(rest.iter()).collect();
    let channels = first.channels();
    if let Some(bad) = all.iter().find(|f| f.channels() != channels) {
        return Err(IqcError::ShapeMismatch(format!("channels {} vs {}", bad.channels(), channels)));
    }
    let pick = |f: fn(&PieSystem) -> &PiOperator| -> Vec<&PiOperator> { all.iter().map(|m| f(&m.psi)).collect() };
    let psi = PieSystem::new(
        PiOperator::blkdiag(&pick(|p| &p.t))?,
        PiOperator::blkdiag(&pick(|p| &p.a))?,
        PiOperator::vcat(&pick(|p| &p.b))?,
        PiOperator::blkdiag(&pick(|p| &p.c))?,
        PiOperator::vcat(&pick(|p| &p.d))?,
    )?;
    let ks: Vec<&PiOperator> = all.iter().map(|f| &f.k).collect();
    let k = PiOperator::blkdiag(&ks)?;
    let side_constraints = all.iter().flat_map(|f| f.side_constraints.iter().cloned()).collect();
    Ok(MultiplierFamily { kind: MultiplierKind::Conic, psi, k, side_constraints })
}

/// Scalar `r` times the identity, as an affine coefficient helper.
pub fn scaled_identity(dims: PiDims, domain: Domain, r: &ScalarAffine) -> Result<PiOperator, IqcError> {
    Ok(PiOperator::identity(dims, domain).scale_affine(r)?)
}

/// Decision-free constant multiplier `c·I` on `dims`.
pub fn constant_gain(dims: PiDims, domain: Domain, c: Num) -> PiOperator {
    PiOperator::identity(dims, domain).scale(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::Assignment;

    fn d1() -> PiDims {
        PiDims::new(0, 1)
    }

    fn zero_assignment(p: &SdpProblem) -> Assignment {
        (0..p.num_vars() as u32).map(|k| (crate::polynomial::DecVar(k), 0.0)).collect()
    }

    #[test]
    fn templates_are_self_adjoint() {
        let mut p = SdpProblem::new();
        let fams = [
            time_varying_iqc(&mut p, "tv", d1(), Domain::unit(), 1).unwrap(),
            sector_iqc(&mut p, "sec", d1(), Domain::unit(), Num::int(-1), Num::int(1), 2).unwrap(),
            polytopic_iqc(&mut p, "pt", &[constant_gain(d1(), Domain::unit(), Num::int(2))], 1).unwrap(),
        ];
        for f in &fams {
            assert!(f.k.is_self_adjoint(), "{:?}", f.kind);
        }
    }

    #[test]
    fn sector_unit_ball_expands_to_diagonal() {
        let mut p = SdpProblem::new();
        let f = sector_iqc(&mut p, "sec", d1(), Domain::unit(), Num::int(-1), Num::int(1), 0).unwrap();
        let r = p.blocks()[0].var(0, 0);
        let two_r = ScalarAffine::var(r).scale(Num::int(2));
        let expected = PiOperator::blkdiag(&[
            &scaled_identity(d1(), Domain::unit(), &two_r).unwrap(),
            &scaled_identity(d1(), Domain::unit(), &two_r.neg()).unwrap(),
        ])
        .unwrap();
        assert_eq!(f.k, expected);
    }

    #[test]
    fn empty_sector_rejected() {
        let mut p = SdpProblem::new();
        assert!(matches!(
            sector_iqc(&mut p, "s", d1(), Domain::unit(), Num::int(1), Num::int(1), 0),
            Err(IqcError::EmptySector { .. })
        ));
    }

    #[test]
    fn single_vertex_zero_reduces_to_p() {
        let mut p = SdpProblem::new();
        let f = polytopic_iqc(&mut p, "pt", &[PiOperator::zero(d1(), d1(), Domain::unit())], 1).unwrap();
        let pk = f.k.sub_operator((0..0, 0..1), (0..0, 0..1));
        assert_eq!(f.side_constraints[1].expr, pk);
        assert!(f.k.assign(&zero_assignment(&p)).is_zero());
    }

    #[test]
    fn conic_combination_stacks() {
        let mut p = SdpProblem::new();
        let a = time_varying_iqc(&mut p, "a", d1(), Domain::unit(), 0).unwrap();
        let b = sector_iqc(&mut p, "b", d1(), Domain::unit(), Num::int(-1), Num::int(1), 0).unwrap();
        let (na, nb) = (a.side_constraints.len(), b.side_constraints.len());
        let c = conic_combination(vec![a.clone(), b]).unwrap();
        assert_eq!(c.psi.output_dims(), PiDims::new(0, 4));
        assert_eq!(c.channels(), PiDims::new(0, 2));
        assert_eq!(c.k.in_dims(), PiDims::new(0, 4));
        assert_eq!(c.side_constraints.len(), na + nb);
        assert_eq!(conic_combination(vec![a.clone()]).unwrap(), a);
    }
}
