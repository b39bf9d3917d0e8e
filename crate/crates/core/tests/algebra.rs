//! Polynomial ring laws and PI *-algebra identities, checked exactly on
//! random rational instances and numerically against the quadrature oracle.

use pi_iqc::num::Num;
use pi_iqc::oracle::{adjoint_residual, composition_residual, discretize, random_operator, QuadGrid};
use pi_iqc::pi::{Domain, PiDims, PiOperator};
use pi_iqc::polynomial::{parse_poly, Assignment, DecVar, Monomial, Point, PolyMatrix, ScalarAffine};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random 2×2 polynomial in `(s, θ)` with small integer coefficients.
fn poly() -> impl Strategy<Value = PolyMatrix> {
    prop::collection::vec((0u16..3, 0u16..3, prop::collection::vec(-5i64..=5, 4)), 0..5).prop_map(|terms| {
        PolyMatrix::from_terms(
            2,
            2,
            terms.into_iter().map(|(p, q, c)| {
                (Monomial::new(p, q), c.into_iter().map(|v| ScalarAffine::constant(Num::int(v))).collect())
            }),
        )
    })
}

fn dims() -> impl Strategy<Value = PiDims> {
    prop_oneof![Just(PiDims::new(0, 1)), Just(PiDims::new(1, 1)), Just(PiDims::new(1, 2)), Just(PiDims::new(2, 0))]
}

fn interval() -> Domain {
    Domain::new(Num::ratio(-1, 2), Num::int(1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polynomial_ring_laws(p in poly(), q in poly(), r in poly()) {
        let left = p.add(&q).unwrap().mul(&r).unwrap();
        let right = p.mul(&r).unwrap().add(&q.mul(&r).unwrap()).unwrap();
        prop_assert_eq!(left, right);
        let assoc_l = p.mul(&q).unwrap().mul(&r).unwrap();
        let assoc_r = p.mul(&q.mul(&r).unwrap()).unwrap();
        prop_assert_eq!(assoc_l, assoc_r);
        prop_assert_eq!(p.add(&q).unwrap(), q.add(&p).unwrap());
        prop_assert!(p.sub(&p).unwrap().is_zero());
    }

    #[test]
    fn star_algebra_identities(x in dims(), y in dims(), z in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = interval();
        let a = random_operator(&mut rng, x, y, dom, 2);
        let a2 = random_operator(&mut rng, x, y, dom, 2);
        let b = random_operator(&mut rng, y, z, dom, 2);
        let c = random_operator(&mut rng, z, x, dom, 1);
        prop_assert_eq!(a.adjoint().adjoint(), a.clone());
        prop_assert_eq!(a.add(&a2).unwrap().adjoint(), a.adjoint().add(&a2.adjoint()).unwrap());
        prop_assert_eq!(a.compose(&b).unwrap().adjoint(), b.adjoint().compose(&a.adjoint()).unwrap());
        prop_assert_eq!(
            a.compose(&b).unwrap().compose(&c).unwrap(),
            a.compose(&b.compose(&c).unwrap()).unwrap()
        );
        prop_assert_eq!(
            a.add(&a2).unwrap().compose(&b).unwrap(),
            a.compose(&b).unwrap().add(&a2.compose(&b).unwrap()).unwrap()
        );
    }

    #[test]
    fn composition_and_adjoint_match_quadrature(x in dims(), y in dims(), z in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = interval();
        let grid = QuadGrid::new(-0.5, 1.0, 60);
        let a = random_operator(&mut rng, x, y, dom, 3);
        let b = random_operator(&mut rng, y, z, dom, 3);
        let ab = a.compose(&b).unwrap();
        prop_assert!(composition_residual(&a, &b, &ab, &grid, 8).unwrap() <= 1e-6);
        prop_assert!(adjoint_residual(&a, &a.adjoint(), &grid, 8).unwrap() <= 1e-8);
    }

    #[test]
    fn discretization_is_linear(x in dims(), y in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dom = interval();
        let grid = QuadGrid::new(-0.5, 1.0, 24);
        let a = random_operator(&mut rng, x, y, dom, 2);
        let b = random_operator(&mut rng, x, y, dom, 2);
        let sum = discretize(&a.add(&b).unwrap(), &grid).unwrap();
        let parts = discretize(&a, &grid).unwrap() + discretize(&b, &grid).unwrap();
        prop_assert!((sum - parts).amax() <= 1e-12);
    }
}

#[test]
fn affine_coefficients_expand_by_hand() {
    // (2 + x s) · (3 s) = 6 s + 3 x s².
    let x = DecVar(0);
    let s = PolyMatrix::var(pi_iqc::polynomial::Var::S);
    let lhs = PolyMatrix::scalar(Num::int(2)).add(&s.scale_affine(&ScalarAffine::var(x)).unwrap()).unwrap();
    let prod = lhs.mul(&s.scale(Num::int(3))).unwrap();
    assert_eq!(prod.coeff(Monomial::new(1, 0), 0, 0), ScalarAffine::constant(Num::int(6)));
    assert_eq!(
        prod.coeff(Monomial::new(2, 0), 0, 0),
        ScalarAffine::from_terms(Num::ZERO, vec![(x, Num::int(3))])
    );
    let mut at = Assignment::new();
    at.insert(x, 2.0);
    let value = prod.eval(&Point::new().s(1), &at).unwrap();
    assert_eq!(value[(0, 0)], 12.0);
}

#[test]
fn parsed_constants_are_exact() {
    let p = parse_poly("0.25 s^2 - 3/4").unwrap();
    assert_eq!(p.eval_exact(&Point::new().s(2)).unwrap(), vec![Num::ratio(1, 4)]);
}

#[test]
fn identity_composes_neutrally() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = PiDims::new(1, 1);
    let a = random_operator(&mut rng, d, d, interval(), 2);
    let id = PiOperator::identity(d, interval());
    assert_eq!(id.compose(&a).unwrap(), a);
    assert_eq!(a.compose(&id).unwrap(), a);
}
