//! Positive PI operators as Gram forms `Z* M Z` and operator sign
//! constraints by exact coefficient matching.

use crate::num::Num;
use crate::pi::{Domain, PiBlocks, PiDims, PiOperator};
use crate::polynomial::{Monomial, PolyMatrix, ScalarAffine, Var};

use super::{PsdBlock, SdpError, SdpProblem};

/// Monomial degrees of the Gram basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamDegrees {
    /// Degree in `s` of the multiplier part `Z1(s) = [1, s, …, s^d]`.
    pub multiplier: u32,
    /// Total degree in `(s, θ)` of both one-sided integral parts.
    pub integral: u32,
    /// Add a second Gram term weighted by `(s - a)(b - s) ≥ 0`.
    pub weighted: bool,
}

impl ParamDegrees {
    pub fn uniform(d: u32) -> Self {
        Self { multiplier: d, integral: d, weighted: false }
    }

    pub fn with_weight(self, weighted: bool) -> Self {
        Self { weighted, ..self }
    }
}

/// `𝒫 = Z* W Z` where `W` multiplies by `M0 + (s - a)(b - s) M1` with
/// `M0, M1 ⪰ 0` (the second term only when weighted), so that
/// `⟨u, 𝒫u⟩ = ∫ (Zu)ᵀ W (Zu) ds ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveParam {
    /// Decision-free basis operator mapping into `(0, rows)`.
    pub z: PiOperator,
    pub blocks: Vec<PsdBlock>,
    /// The pointwise Gram multiplier `W`.
    pub middle: PiOperator,
    /// The operator `Z* W Z`, affine in the Gram entries.
    pub op: PiOperator,
}

impl PositiveParam {
    /// `lhs* 𝒫 rhs`, computed as `(Z lhs)* W (Z rhs)`.
    pub fn sandwich(&self, lhs: &PiOperator, rhs: &PiOperator) -> Result<PiOperator, SdpError> {
        let zl = self.z.compose(lhs)?;
        let zr = self.z.compose(rhs)?;
        Ok(zl.adjoint().compose(&self.middle.compose(&zr)?)?)
    }
}

/// Monomials `s^p θ^q` with `p + q ≤ d`.
fn two_var_monomials(d: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for total in 0..=d as u16 {
        for p in (0..=total).rev() {
            out.push(Monomial::new(p, total - p));
        }
    }
    out
}

/// Basis operator `Z : (n1, n2) → (0, rows)` stacking kept finite
/// components (as constants), `s^k X_c(s)`, `∫_a^s s^p θ^q X_c(θ) dθ` and
/// `∫_s^b s^p θ^q X_c(θ) dθ`.
pub fn gram_basis(
    dims: PiDims,
    domain: Domain,
    degrees: ParamDegrees,
    keep_finite: &[bool],
    keep_multiplier: &[bool],
) -> PiOperator {
    assert_eq!(keep_finite.len(), dims.finite);
    assert_eq!(keep_multiplier.len(), dims.distributed);
    let n2 = dims.distributed;
    let mono2 = two_var_monomials(degrees.integral);
    let finite_rows: Vec<usize> = (0..dims.finite).filter(|&i| keep_finite[i]).collect();
    let mult_rows: Vec<(usize, u16)> = (0..n2)
        .filter(|&c| keep_multiplier[c])
        .flat_map(|c| (0..=degrees.multiplier as u16).map(move |k| (c, k)))
        .collect();
    let int_rows: Vec<(usize, Monomial)> =
        (0..n2).flat_map(|c| mono2.iter().map(move |m| (c, *m))).collect();
    let rows = finite_rows.len() + mult_rows.len() + 2 * int_rows.len();

    let unit = |r: usize, c: usize, cols: usize, m: Monomial| -> (Monomial, Vec<ScalarAffine>) {
        let mut data = vec![ScalarAffine::zero(); rows * cols];
        data[r * cols + c] = ScalarAffine::constant(Num::ONE);
        (m, data)
    };
    let mut q2 = Vec::new();
    let mut r0 = Vec::new();
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    let mut row = 0;
    for &i in &finite_rows {
        q2.push(unit(row, i, dims.finite, Monomial::ONE));
        row += 1;
    }
    for &(c, k) in &mult_rows {
        r0.push(unit(row, c, n2, Monomial::of(Var::S, k)));
        row += 1;
    }
    for &(c, m) in &int_rows {
        r1.push(unit(row, c, n2, m));
        row += 1;
    }
    for &(c, m) in &int_rows {
        r2.push(unit(row, c, n2, m));
        row += 1;
    }
    let out = PiDims::new(0, rows);
    let mut blocks = PiBlocks::zeros(out, dims);
    blocks.q2 = PolyMatrix::from_terms(rows, dims.finite, q2);
    blocks.r0 = PolyMatrix::from_terms(rows, n2, r0);
    blocks.r1 = PolyMatrix::from_terms(rows, n2, r1);
    blocks.r2 = PolyMatrix::from_terms(rows, n2, r2);
    PiOperator::new(out, dims, domain, blocks).expect("basis blocks are well formed")
}

/// Fresh positive operator `Z* M Z` on `dims` with a new PSD block.
pub fn positive_pi_param(
    problem: &mut SdpProblem,
    name: &str,
    dims: PiDims,
    domain: Domain,
    degrees: ParamDegrees,
) -> Result<PositiveParam, SdpError> {
    masked_param(problem, name, dims, domain, degrees, &vec![true; dims.finite], &vec![true; dims.distributed])?
        .ok_or(SdpError::DegreeTooSmall)
}

fn masked_param(
    problem: &mut SdpProblem,
    name: &str,
    dims: PiDims,
    domain: Domain,
    degrees: ParamDegrees,
    keep_finite: &[bool],
    keep_multiplier: &[bool],
) -> Result<Option<PositiveParam>, SdpError> {
    let z = gram_basis(dims, domain, degrees, keep_finite, keep_multiplier);
    let size = z.out_dims().distributed;
    if size == 0 {
        return Ok(None);
    }
    let mut blocks = vec![problem.psd_block(name, size)];
    let mut w = blocks[0].matrix();
    if degrees.weighted {
        blocks.push(problem.psd_block(&format!("{name}.w"), size));
        w = w.add(&kron_scalar(&interval_weight(domain), &blocks[1].matrix()))?;
    }
    let middle = PiOperator::multiplier(w, domain)?;
    let op = z.adjoint().compose(&middle.compose(&z)?)?;
    Ok(Some(PositiveParam { z, blocks, middle, op }))
}

/// `n × n` polynomial `R(s)` with `R(s) ⪰ 0` on `[a, b]`:
/// `Z_d(s)ᵀ M0 Z_d(s) + (s - a)(b - s) Z_{d-1}(s)ᵀ M1 Z_{d-1}(s)`, degree `2d`.
pub fn nonneg_poly_param(
    problem: &mut SdpProblem,
    name: &str,
    n: usize,
    half_degree: u32,
    domain: Domain,
) -> PolyMatrix {
    let basis = |d: u32| -> PolyMatrix {
        let terms: Vec<(Monomial, Vec<ScalarAffine>)> = (0..=d as u16)
            .map(|k| {
                let mut data = vec![ScalarAffine::zero(); (d as usize + 1) * n * n];
                for c in 0..n {
                    data[(k as usize * n + c) * n + c] = ScalarAffine::constant(Num::ONE);
                }
                (Monomial::of(Var::S, k), data)
            })
            .collect();
        PolyMatrix::from_terms((d as usize + 1) * n, n, terms)
    };
    let gram = |problem: &mut SdpProblem, label: &str, z: &PolyMatrix| -> PolyMatrix {
        let block = problem.psd_block(label, z.rows());
        let mz = block.matrix().mul(z).expect("shapes agree");
        z.transpose().mul(&mz).expect("decision-free basis")
    };
    let z0 = basis(half_degree);
    let mut r = gram(problem, &format!("{name}.sos0"), &z0);
    if half_degree >= 1 {
        let g = interval_weight(domain);
        let inner = gram(problem, &format!("{name}.sos1"), &basis(half_degree - 1));
        r = r.add(&kron_scalar(&g, &inner)).expect("same shape");
    }
    r
}

/// `(s - a)(b - s)`, nonnegative on the domain.
fn interval_weight(domain: Domain) -> PolyMatrix {
    let s_var = PolyMatrix::var(Var::S);
    let lower = s_var.sub(&PolyMatrix::scalar(domain.a)).expect("scalar");
    let upper = PolyMatrix::scalar(domain.b).sub(&s_var).expect("scalar");
    lower.mul(&upper).expect("decision-free")
}

/// Multiply every entry of `p` by the scalar polynomial `g` (decision-free).
fn kron_scalar(g: &PolyMatrix, p: &PolyMatrix) -> PolyMatrix {
    let gi = g.kron_identity(p.rows());
    gi.mul(p).expect("decision-free scalar")
}

/// Which coefficients of a square free operator get their own variable.
#[derive(Clone, Copy, PartialEq, Eq)]
enum FreePattern {
    Full,
    /// `P`, `R0` on and above the diagonal, `Q1`, `R1`; the rest zero.
    UpperWithDiagonal,
    /// As above but strictly above the diagonal.
    StrictlyUpper,
}

fn free_structured(
    problem: &mut SdpProblem,
    name: &str,
    out: PiDims,
    inp: PiDims,
    domain: Domain,
    degree: u32,
    pattern: FreePattern,
) -> Result<PiOperator, SdpError> {
    let s_monos: Vec<Monomial> = (0..=degree as u16).map(|k| Monomial::of(Var::S, k)).collect();
    let two = two_var_monomials(degree);
    let keep_entry = |i: usize, j: usize| match pattern {
        FreePattern::Full => true,
        FreePattern::UpperWithDiagonal => j >= i,
        FreePattern::StrictlyUpper => j > i,
    };
    let full = |_: usize, _: usize| true;
    let mut fresh = |label: &str, rows: usize, cols: usize, monos: &[Monomial], keep: &dyn Fn(usize, usize) -> bool| {
        if rows == 0 || cols == 0 {
            return PolyMatrix::zeros(rows, cols);
        }
        let terms: Vec<(Monomial, Vec<ScalarAffine>)> = monos
            .iter()
            .map(|m| {
                let data = (0..rows * cols)
                    .map(|k| {
                        if keep(k / cols, k % cols) {
                            ScalarAffine::var(problem.free_var(&format!("{name}.{label}[{k}]{m:?}")))
                        } else {
                            ScalarAffine::zero()
                        }
                    })
                    .collect();
                (*m, data)
            })
            .collect();
        PolyMatrix::from_terms(rows, cols, terms)
    };
    let half = pattern != FreePattern::Full;
    let blocks = PiBlocks {
        p: fresh("P", out.finite, inp.finite, &[Monomial::ONE], &keep_entry),
        q1: fresh("Q1", out.finite, inp.distributed, &s_monos, &full),
        q2: if half {
            PolyMatrix::zeros(out.distributed, inp.finite)
        } else {
            fresh("Q2", out.distributed, inp.finite, &s_monos, &full)
        },
        r0: fresh("R0", out.distributed, inp.distributed, &s_monos, &keep_entry),
        r1: fresh("R1", out.distributed, inp.distributed, &two, &full),
        r2: if half {
            PolyMatrix::zeros(out.distributed, inp.distributed)
        } else {
            fresh("R2", out.distributed, inp.distributed, &two, &full)
        },
    };
    Ok(PiOperator::new(out, inp, domain, blocks)?)
}

/// Unconstrained PI operator `out ← in` whose kernels are polynomials of
/// degree `degree` (total degree for two-variable kernels) with fresh free
/// coefficients.
pub fn free_pi_param(
    problem: &mut SdpProblem,
    name: &str,
    out: PiDims,
    inp: PiDims,
    domain: Domain,
    degree: u32,
) -> Result<PiOperator, SdpError> {
    free_structured(problem, name, out, inp, domain, degree, FreePattern::Full)
}

/// Free self-adjoint operator on `dims`, one variable per independent
/// coefficient.
pub fn free_self_adjoint_param(
    problem: &mut SdpProblem,
    name: &str,
    dims: PiDims,
    domain: Domain,
    degree: u32,
) -> Result<PiOperator, SdpError> {
    let s = free_structured(problem, name, dims, dims, domain, degree, FreePattern::UpperWithDiagonal)?;
    Ok(s.add(&s.adjoint())?)
}

/// Free skew-adjoint operator `𝒮 - 𝒮*` on `dims`, one variable per
/// independent coefficient.
pub fn free_skew_param(
    problem: &mut SdpProblem,
    name: &str,
    dims: PiDims,
    domain: Domain,
    degree: u32,
) -> Result<PiOperator, SdpError> {
    let s = free_structured(problem, name, dims, dims, domain, degree, FreePattern::StrictlyUpper)?;
    Ok(s.sub(&s.adjoint())?)
}

/// `(op + op*) / 2`.
pub fn symmetric_part(op: &PiOperator) -> Result<PiOperator, SdpError> {
    Ok(op.add(&op.adjoint())?.scale(Num::ratio(1, 2)))
}

/// Coefficients of every kernel, one scalar per (block, monomial, entry).
/// With `symmetric`, the redundant halves of a self-adjoint operator
/// (`Q2`, `R2`, lower triangles of `P` and `R0`) are skipped.
pub fn coefficient_equalities(op: &PiOperator, symmetric: bool) -> Vec<ScalarAffine> {
    let b = op.blocks();
    let mut out = Vec::new();
    let mut push = |p: &PolyMatrix, upper_only: bool| {
        for (_, data) in p.terms() {
            for i in 0..p.rows() {
                for j in 0..p.cols() {
                    if upper_only && j < i {
                        continue;
                    }
                    let c = &data[i * p.cols() + j];
                    if !c.is_zero() {
                        out.push(c.clone());
                    }
                }
            }
        }
    };
    push(&b.p, symmetric);
    push(&b.q1, false);
    if !symmetric {
        push(&b.q2, false);
    }
    push(&b.r0, symmetric);
    push(&b.r1, false);
    if !symmetric {
        push(&b.r2, false);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    /// `⪰ 0`
    Psd,
    /// `⪯ 0`
    Nsd,
    /// `= 0`
    Zero,
}

fn diagonal_is_structurally_zero(p: &PolyMatrix, i: usize) -> bool {
    p.terms().all(|(_, data)| data[i * p.cols() + i].is_zero())
}

/// Constrain `expr` in sign by matching it against a fresh positive slack.
/// Returns the slack (if any rows survive structural reduction).
pub fn constrain_sign(
    problem: &mut SdpProblem,
    name: &str,
    expr: &PiOperator,
    sign: Sign,
    slack_degrees: ParamDegrees,
) -> Result<Option<PositiveParam>, SdpError> {
    if sign == Sign::Zero {
        problem.add_equalities(coefficient_equalities(expr, false));
        return Ok(None);
    }
    if expr.out_dims() != expr.in_dims() {
        return Err(SdpError::NotSelfAdjoint(f64::INFINITY));
    }
    let asym = expr.sub(&expr.adjoint())?.max_abs_coeff();
    if asym > 1e-8 * expr.max_abs_coeff().max(1.0) {
        return Err(SdpError::NotSelfAdjoint(asym));
    }
    let sym = symmetric_part(expr)?;
    let target = if sign == Sign::Psd { sym } else { sym.neg() };
    let dims = target.in_dims();
    // A zero diagonal kernel entry forces the matching rows of any Gram
    // matrix representing it to vanish, so those rows are left out.
    let keep_finite: Vec<bool> = (0..dims.finite).map(|i| !diagonal_is_structurally_zero(target.p(), i)).collect();
    let keep_mult: Vec<bool> =
        (0..dims.distributed).map(|i| !diagonal_is_structurally_zero(target.r0(), i)).collect();
    let slack = masked_param(problem, name, dims, target.domain(), slack_degrees, &keep_finite, &keep_mult)?;
    let residual = match &slack {
        Some(s) => target.sub(&s.op)?,
        None => target,
    };
    problem.add_equalities(coefficient_equalities(&residual, true));
    Ok(slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{ClarabelBackend, SolveOutcome, SolverOptions};

    #[test]
    fn scalar_finite_param() {
        let mut p = SdpProblem::new();
        let param = positive_pi_param(&mut p, "P", PiDims::new(1, 0), Domain::unit(), ParamDegrees::uniform(0)).unwrap();
        assert_eq!(p.blocks().len(), 1);
        assert_eq!(param.blocks[0].size, 1);
        let expected = PolyMatrix::scalar(ScalarAffine::var(param.blocks[0].var(0, 0)));
        assert_eq!(param.op.p(), &expected);
    }

    #[test]
    fn zero_gram_gives_zero_operator() {
        let mut p = SdpProblem::new();
        let param = positive_pi_param(&mut p, "P", PiDims::new(1, 2), Domain::unit(), ParamDegrees::uniform(1)).unwrap();
        let zero: crate::polynomial::Assignment = param.blocks[0].vars().map(|v| (v, 0.0)).collect();
        assert!(param.op.assign(&zero).is_zero());
        assert!(param.op.is_self_adjoint());
    }

    #[test]
    fn negative_identity_constraint() {
        let d = PiDims::new(1, 1);
        let domain = Domain::unit();
        for (op, feasible) in [
            (PiOperator::identity(d, domain).neg(), true),
            (PiOperator::identity(d, domain), false),
        ] {
            let mut p = SdpProblem::new();
            constrain_sign(&mut p, "S", &op, Sign::Nsd, ParamDegrees::uniform(1)).unwrap();
            let out = p.solve(&ClarabelBackend, &SolverOptions::default()).unwrap();
            assert_eq!(out.is_feasible(), feasible, "{op}");
            if let SolveOutcome::Feasible(c) = out {
                assert!(c.residuals.within(1e-6), "{:?}", c.residuals);
            }
        }
    }

    #[test]
    fn maximize_scalar_bound() {
        // (λ - 2) I ⪯ 0, maximize λ.
        let mut p = SdpProblem::new();
        let lam = p.free_var("lambda");
        let d = PiDims::new(0, 1);
        let id = PiOperator::identity(d, Domain::unit());
        let expr = id
            .scale_affine(&ScalarAffine::var(lam).sub(&ScalarAffine::constant(Num::int(2))))
            .unwrap();
        constrain_sign(&mut p, "S", &expr, Sign::Nsd, ParamDegrees::uniform(0)).unwrap();
        p.maximize(ScalarAffine::var(lam));
        let out = p.solve(&ClarabelBackend, &SolverOptions::default()).unwrap();
        let c = out.certificate().expect("feasible");
        let value = c.assignment[&lam];
        assert!(value <= 2.0 + 1e-6 && value > 2.0 - 1e-4, "{value}");
    }

    #[test]
    fn asymmetric_operator_rejected() {
        let op = PiOperator::integral(
            crate::polynomial::parse_poly("1").unwrap(),
            PolyMatrix::zeros(1, 1),
            Domain::unit(),
        )
        .unwrap();
        let mut p = SdpProblem::new();
        assert!(matches!(
            constrain_sign(&mut p, "S", &op, Sign::Nsd, ParamDegrees::uniform(1)),
            Err(SdpError::NotSelfAdjoint(_))
        ));
    }

    #[test]
    fn nonneg_poly_shape() {
        let mut p = SdpProblem::new();
        let r = nonneg_poly_param(&mut p, "R", 1, 1, Domain::unit());
        assert_eq!(r.shape(), (1, 1));
        assert_eq!(r.degree(), 2);
        assert_eq!(p.blocks().len(), 2);
    }
}
