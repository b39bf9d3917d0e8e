//! PIE builders checked against the quadrature oracle and hand-assembled
//! blocks.

use pi_iqc::num::Num;
use pi_iqc::oracle::{discretize, QuadGrid};
use pi_iqc::pi::{Domain, PiDims, PiOperator};
use pi_iqc::pie::{
    dde_to_pie, pde_to_pie, psi_from_pde, reconstruction_operators, BoundaryConditions, DdeSpec, PdeOutput, PdeSpec,
};
use pi_iqc::polynomial::PolyMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense polynomial in `s` by ascending coefficients.
#[derive(Clone, Debug)]
struct Poly(Vec<f64>);

impl Poly {
    fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    /// Antiderivative vanishing at 0.
    fn integral(&self) -> Poly {
        let mut out = vec![0.0];
        out.extend(self.0.iter().enumerate().map(|(k, c)| c / (k + 1) as f64));
        Poly(out)
    }

    fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }
}

fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Poly {
    Poly((0..=degree).map(|_| rng.gen_range(-2.0..2.0)).collect())
}

/// Polynomial satisfying the boundary conditions.
fn admissible(rng: &mut ChaCha8Rng, bc: BoundaryConditions) -> Poly {
    let q = random_poly(rng, 4);
    match bc {
        // p = s (1 - s) q
        BoundaryConditions::DirichletDirichlet => Poly(vec![0.0, 1.0, -1.0]).mul(&q),
        // p = ∫_0^s (1 - t) q(t) dt, so p(0) = 0 and p_s(1) = 0
        BoundaryConditions::DirichletNeumann => Poly(vec![1.0, -1.0]).mul(&q).integral(),
    }
}

#[test]
fn reconstruction_recovers_state_and_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = QuadGrid::new(0.0, 1.0, 60);
    for bc in [BoundaryConditions::DirichletDirichlet, BoundaryConditions::DirichletNeumann] {
        let (t, d1) = reconstruction_operators(bc, 1);
        let (mt, md) = (discretize(&t, &grid).unwrap(), discretize(&d1, &grid).unwrap());
        for _ in 0..20 {
            let p = admissible(&mut rng, bc);
            let (ps, pss) = (p.derivative(), p.derivative().derivative());
            let fundamental = grid.sample(|s| pss.eval(s));
            let err_state = (&mt * &fundamental - grid.sample(|s| p.eval(s))).amax();
            let err_slope = (&md * &fundamental - grid.sample(|s| ps.eval(s))).amax();
            assert!(err_state <= 1e-9, "{bc:?}: state error {err_state}");
            assert!(err_slope <= 1e-9, "{bc:?}: derivative error {err_slope}");
        }
    }
}

#[test]
fn heat_equation_with_reaction_has_expected_a() {
    // A x_ss = x_ss + c T x_ss for x_t = x_ss + c x.
    let spec = PdeSpec::scalar("1", "0", "3", BoundaryConditions::DirichletDirichlet, PdeOutput::State).unwrap();
    let pie = pde_to_pie(&spec).unwrap();
    let (t, _) = reconstruction_operators(BoundaryConditions::DirichletDirichlet, 1);
    let expected = PiOperator::identity(PiDims::new(0, 1), Domain::unit()).add(&t.scale(Num::int(3))).unwrap();
    assert_eq!(pie.a, expected);
    assert_eq!(pie.t, t);
    assert_eq!(pie.c, t);
}

#[test]
fn filter_output_stacks_state_over_input() {
    // H y = [z; y]: D = [0; I] and the lower block of C is zero.
    let spec = PdeSpec::scalar("1", "0", "0.5pi^2", BoundaryConditions::DirichletDirichlet, PdeOutput::State).unwrap();
    let h = pde_to_pie(&spec).unwrap().stack_with_input().unwrap();
    let d = PiDims::new(0, 1);
    let zero = PiOperator::zero(d, d, Domain::unit());
    let id = PiOperator::identity(d, Domain::unit());
    assert_eq!(h.d, PiOperator::vcat(&[&zero, &id]).unwrap());
    assert!(h.c.sub_operator((0..0, 1..2), (0..0, 0..1)).is_zero());
    let psi = psi_from_pde(Some(&spec), PiDims::new(0, 2), Domain::unit()).unwrap();
    assert_eq!(psi.output_dims(), PiDims::new(0, 4));
}

#[test]
fn delay_pie_has_the_stated_blocks() {
    let a0 = PolyMatrix::from_f64_rows(&[vec![0.0, 1.0], vec![-2.0, 0.1]]);
    let ad = PolyMatrix::from_f64_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
    let spec = DdeSpec::new(a0.clone(), ad.clone(), Num::ratio(189, 1000), Num::int(2)).unwrap();
    let pie = dde_to_pie(&spec).unwrap();
    assert_eq!(pie.a.p(), &a0.add(&ad).unwrap());
    assert_eq!(pie.a.q1(), &ad.neg());
    assert_eq!(pie.a.r0(), &PolyMatrix::identity(2).scale(Num::ratio(1000, 189)));
    assert_eq!(pie.b.r0(), &PolyMatrix::identity(2).scale(Num::int(2)));
    assert_eq!(pie.t.p(), &PolyMatrix::identity(2));
    assert_eq!(pie.t.q2(), &PolyMatrix::identity(2));
    assert_eq!(pie.t.r2(), &PolyMatrix::identity(2).neg());
    assert!(pie.d.is_zero());
}

#[test]
fn delay_rejects_invalid_windows() {
    let a = PolyMatrix::identity(1);
    assert!(DdeSpec::new(a.clone(), a.clone(), Num::float(-0.1), Num::ZERO).is_err());
    assert!(DdeSpec::new(a.clone(), a.clone(), Num::float(0.5), Num::float(-1.0)).is_err());
    assert!(DdeSpec::new(a.clone(), a, Num::float(0.5), Num::float(2.5)).is_err());
}
