//! Semidefinite layer: positivity of the Gram parametrization, sign
//! constraints, presolve of redundant equalities and SDPA round trips.

use nalgebra::DMatrix;
use pi_iqc::num::Num;
use pi_iqc::oracle::{discretize_with, sym_eig_max_projected, Execution, QuadGrid};
use pi_iqc::pi::{Domain, PiDims, PiOperator};
use pi_iqc::polynomial::{Assignment, ScalarAffine};
use pi_iqc::sdp::{
    constrain_sign, parse_sdpa, positive_pi_param, write_sdpa, ClarabelBackend, ParamDegrees, SdpProblem, SdpaData,
    Sign, SolveOutcome, SolverOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solve(p: &SdpProblem) -> SolveOutcome {
    p.solve(&ClarabelBackend, &SolverOptions::default()).unwrap()
}

#[test]
fn gram_operators_are_positive_for_random_psd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let domain = Domain::new(Num::int(0), Num::int(2)).unwrap();
    let grid = QuadGrid::new(0.0, 2.0, 60);
    let cases = [
        (PiDims::new(0, 1), ParamDegrees::uniform(0)),
        (PiDims::new(1, 1), ParamDegrees::uniform(1).with_weight(true)),
        (PiDims::new(0, 2), ParamDegrees::uniform(2)),
    ];
    for (dims, degrees) in cases {
        let mut problem = SdpProblem::new();
        let param = positive_pi_param(&mut problem, "P", dims, domain, degrees).unwrap();
        for _ in 0..100 {
            let mut assignment = Assignment::new();
            for block in &param.blocks {
                let n = block.size;
                let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let m = &l * l.transpose();
                for i in 0..n {
                    for j in i..n {
                        assignment.insert(block.var(i, j), m[(i, j)]);
                    }
                }
            }
            let disc = discretize_with(&param.op, &assignment, &grid, Execution::Sequential).unwrap();
            let scale = disc.amax().max(1.0);
            let min = -sym_eig_max_projected(&(-disc), &grid, dims, 20).unwrap();
            assert!(min >= -1e-8 * scale, "{dims}: smallest eigenvalue {min}");
        }
    }
}

#[test]
fn zero_gram_matrix_gives_zero_operator() {
    let mut problem = SdpProblem::new();
    let param = positive_pi_param(&mut problem, "P", PiDims::new(1, 1), Domain::unit(), ParamDegrees::uniform(1)).unwrap();
    let zero: Assignment = problem.blocks().iter().flat_map(|b| b.vars()).map(|v| (v, 0.0)).collect();
    assert!(param.op.assign(&zero).is_zero());
}

#[test]
fn negative_identity_is_nonpositive() {
    let mut p = SdpProblem::new();
    let d = PiDims::new(1, 1);
    let expr = PiOperator::identity(d, Domain::unit()).neg();
    constrain_sign(&mut p, "S", &expr, Sign::Nsd, ParamDegrees::uniform(1)).unwrap();
    let cert = solve(&p);
    let cert = cert.certificate().expect("feasible");
    assert!(cert.residuals.max_equality <= 1e-8);
}

#[test]
fn positive_identity_is_not_nonpositive() {
    let mut p = SdpProblem::new();
    let expr = PiOperator::identity(PiDims::new(0, 1), Domain::unit());
    constrain_sign(&mut p, "S", &expr, Sign::Nsd, ParamDegrees::uniform(1)).unwrap();
    assert!(!solve(&p).is_feasible());
}

#[test]
fn scalar_bound_is_found_by_maximization() {
    // (λ - 2)·I ⪯ 0 on a distributed space, maximize λ.
    let mut p = SdpProblem::new();
    let lambda = p.free_var("lambda");
    let coeff = ScalarAffine::var(lambda).sub(&ScalarAffine::constant(Num::int(2)));
    let expr = PiOperator::identity(PiDims::new(0, 1), Domain::unit()).scale_affine(&coeff).unwrap();
    constrain_sign(&mut p, "S", &expr, Sign::Nsd, ParamDegrees::uniform(0)).unwrap();
    p.maximize(ScalarAffine::var(lambda));
    let out = solve(&p);
    let value = out.certificate().expect("feasible").assignment[&lambda];
    assert!(value <= 2.0 + 1e-6 && value >= 2.0 - 1e-4, "lambda = {value}");
}

fn two_by_two() -> (SdpProblem, ScalarAffine, ScalarAffine) {
    let mut p = SdpProblem::new();
    let b = p.psd_block("M", 2);
    (p, ScalarAffine::var(b.var(0, 0)), ScalarAffine::var(b.var(1, 1)))
}

fn c(v: i64) -> ScalarAffine {
    ScalarAffine::constant(Num::int(v))
}

#[test]
fn dependent_equalities_are_presolved() {
    let (mut p, a, b) = two_by_two();
    p.add_equality(a.add(&b).sub(&c(2)));
    p.add_equality(a.sub(&b));
    p.add_equality(a.scale(Num::int(2)).sub(&c(2)));
    p.add_equality(a.add(&b).sub(&c(2)).scale(Num::int(-3)));
    let out = solve(&p);
    let cert = out.certificate().expect("consistent dependent rows are feasible");
    assert!(cert.residuals.max_equality <= 1e-7);
}

#[test]
fn inconsistent_equalities_are_reported() {
    let (mut p, a, b) = two_by_two();
    p.add_equality(a.add(&b).sub(&c(2)));
    p.add_equality(a.sub(&b));
    p.add_equality(a.sub(&c(3)));
    match solve(&p) {
        SolveOutcome::Infeasible { detail } => assert!(detail.contains("inconsistent"), "{detail}"),
        SolveOutcome::Feasible(_) => panic!("inconsistent rows reported feasible"),
    }
}

#[test]
fn sdpa_round_trip_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let mut p = SdpProblem::new();
        let mut vars = Vec::new();
        for k in 0..rng.gen_range(1..4) {
            let b = p.psd_block(&format!("B{k}"), rng.gen_range(1..4));
            vars.extend(b.vars());
        }
        for k in 0..rng.gen_range(0..3) {
            vars.push(p.free_var(&format!("x{k}")));
        }
        for _ in 0..rng.gen_range(0..6) {
            let terms = (0..3)
                .map(|_| (vars[rng.gen_range(0..vars.len())], Num::ratio(rng.gen_range(-9..=9), rng.gen_range(1..=4))))
                .collect();
            p.add_equality(ScalarAffine::from_terms(Num::int(rng.gen_range(-3..=3)), terms));
        }
        if rng.gen_bool(0.5) {
            p.maximize(ScalarAffine::var(vars[0]));
        }
        let text = write_sdpa(&p);
        assert_eq!(parse_sdpa(&text).unwrap(), SdpaData::from_problem(&p));
    }
}

#[test]
fn assembly_is_deterministic() {
    let build = || {
        let mut p = SdpProblem::new();
        let expr = PiOperator::identity(PiDims::new(1, 1), Domain::unit()).neg();
        constrain_sign(&mut p, "S", &expr, Sign::Nsd, ParamDegrees::uniform(2).with_weight(true)).unwrap();
        write_sdpa(&p)
    };
    assert_eq!(build(), build());
}
