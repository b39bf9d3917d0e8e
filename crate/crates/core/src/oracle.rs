//! Quadrature discretization of PI operators.
//!
//! Distributed components are represented by their values at Gauss–Legendre
//! nodes. A vector of size `n1 + N·n2` holds the finite part first, then
//! component `c` at node `i` in slot `n1 + c·N + i`. Integrals with a variable
//! limit use the Lagrange interpolant of the sampled input and a mapped Gauss
//! rule on the sub-interval, so polynomial data of moderate degree is
//! integrated exactly.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::num::Num;
use crate::pi::{Domain, PiBlocks, PiDims, PiOperator};
use crate::polynomial::{Assignment, Monomial, PolyError, PolyMatrix, ScalarAffine};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("matrix contains a non-finite entry")]
    NonFiniteEntry,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Whether discretization fans out over rayon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Gauss–Legendre rule on `[a, b]`.
#[derive(Clone, Debug)]
pub struct QuadGrid {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
}

/// Reference Gauss–Legendre rule on `[-1, 1]`, sorted by node.
fn reference_rule(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("order must be positive"));
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs
}

impl QuadGrid {
    pub const DEFAULT_ORDER: usize = 60;

    pub fn new(a: f64, b: f64, order: usize) -> Self {
        assert!(order > 0 && a < b, "invalid quadrature grid");
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let (nodes, weights): (Vec<f64>, Vec<f64>) = reference_rule(order)
            .into_iter()
            .map(|(x, w)| (mid + half * x, half * w))
            .unzip();
        // Barycentric weights of the node set (scaled to avoid under/overflow).
        let mut bary = vec![1.0; order];
        for j in 0..order {
            for k in 0..order {
                if j != k {
                    bary[j] /= (nodes[j] - nodes[k]) / half;
                }
            }
        }
        let scale = bary.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        for w in &mut bary {
            *w /= scale;
        }
        Self { a, b, nodes, weights, bary }
    }

    pub fn for_operator(op: &PiOperator, order: usize) -> Self {
        let d = op.domain();
        Self::new(d.a.to_f64(), d.b.to_f64(), order)
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Values at `x` of the Lagrange basis on the nodes.
    fn lagrange_row(&self, x: f64, out: &mut [f64]) {
        if let Some(j) = self.nodes.iter().position(|&n| n == x) {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for j in 0..self.nodes.len() {
            let t = self.bary[j] / (x - self.nodes[j]);
            out[j] = t;
            denom += t;
        }
        for v in out.iter_mut() {
            *v /= denom;
        }
    }

    /// Sampled vector of `f` on distributed dims `(0, 1)`.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.order(), self.nodes.iter().map(|&x| f(x)))
    }

    /// Integration matrix for `∫_a^{s_i} K(s_i, θ) X(θ) dθ` (or the upper
    /// analogue), as an `N × N` matrix over node values of `X`.
    fn variable_limit_rows(
        &self,
        sub: &[(f64, f64)],
        kernel: impl Fn(f64, f64) -> f64,
        lower: bool,
        i: usize,
        lag: &mut [f64],
        row: &mut [f64],
    ) {
        let n = self.order();
        row.iter_mut().for_each(|v| *v = 0.0);
        let s = self.nodes[i];
        let (lo, hi) = if lower { (self.a, s) } else { (s, self.b) };
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for &(x, w) in sub {
            let th = mid + half * x;
            let k = kernel(s, th) * w * half;
            if k == 0.0 {
                continue;
            }
            self.lagrange_row(th, lag);
            for j in 0..n {
                row[j] += k * lag[j];
            }
        }
    }
}

/// Discretize a decision-free operator.
pub fn discretize(op: &PiOperator, grid: &QuadGrid) -> Result<DMatrix<f64>, OracleError> {
    discretize_with(op, &Assignment::new(), grid, Execution::default())
}

/// Discretize after substituting decision-variable values.
pub fn discretize_with(
    op: &PiOperator,
    assignment: &Assignment,
    grid: &QuadGrid,
    exec: Execution,
) -> Result<DMatrix<f64>, OracleError> {
    let out = op.out_dims();
    let inp = op.in_dims();
    let n = grid.order();
    let rows = out.finite + n * out.distributed;
    let cols = inp.finite + n * inp.distributed;
    let b = op.blocks();
    let p = b.p.to_numeric(assignment)?;
    let q1 = b.q1.to_numeric(assignment)?;
    let q2 = b.q2.to_numeric(assignment)?;
    let r0 = b.r0.to_numeric(assignment)?;
    let r1 = b.r1.to_numeric(assignment)?;
    let r2 = b.r2.to_numeric(assignment)?;

    let mut m = DMatrix::zeros(rows, cols);
    if !p.is_zero() {
        let pv = p.eval(0.0, 0.0);
        m.view_mut((0, 0), (out.finite, inp.finite)).copy_from(&pv);
    }
    for (j, (&x, &w)) in grid.nodes.iter().zip(&grid.weights).enumerate() {
        if !q1.is_zero() {
            let v = q1.eval(x, 0.0);
            for r in 0..out.finite {
                for c in 0..inp.distributed {
                    m[(r, inp.finite + c * n + j)] = w * v[(r, c)];
                }
            }
        }
        if !q2.is_zero() {
            let v = q2.eval(x, 0.0);
            for r in 0..out.distributed {
                for c in 0..inp.finite {
                    m[(out.finite + r * n + j, c)] = v[(r, c)];
                }
            }
        }
        if !r0.is_zero() {
            let v = r0.eval(x, 0.0);
            for r in 0..out.distributed {
                for c in 0..inp.distributed {
                    m[(out.finite + r * n + j, inp.finite + c * n + j)] = v[(r, c)];
                }
            }
        }
    }

    if !r1.is_zero() || !r2.is_zero() {
        let deg = b.r1.degree_in(crate::polynomial::Var::Theta).max(b.r2.degree_in(crate::polynomial::Var::Theta)) as usize;
        let sub = reference_rule((n + deg) / 2 + 2);
        let pairs: Vec<(usize, usize)> = (0..out.distributed)
            .flat_map(|r| (0..inp.distributed).map(move |c| (r, c)))
            .collect();
        let work = |i: usize| -> Vec<(usize, usize, Vec<f64>)> {
            let mut lag = vec![0.0; n];
            let mut lower = vec![0.0; n];
            let mut upper = vec![0.0; n];
            let mut res = Vec::with_capacity(pairs.len());
            for &(r, c) in &pairs {
                grid.variable_limit_rows(&sub, |s, t| r1.eval_entry(r, c, s, t), true, i, &mut lag, &mut lower);
                grid.variable_limit_rows(&sub, |s, t| r2.eval_entry(r, c, s, t), false, i, &mut lag, &mut upper);
                let row: Vec<f64> = lower.iter().zip(&upper).map(|(x, y)| x + y).collect();
                res.push((r, c, row));
            }
            res
        };
        let results: Vec<(usize, Vec<(usize, usize, Vec<f64>)>)> = match exec {
            #[cfg(feature = "parallel")]
            Execution::Parallel => (0..n).into_par_iter().map(|i| (i, work(i))).collect(),
            _ => (0..n).map(|i| (i, work(i))).collect(),
        };
        for (i, entries) in results {
            for (r, c, row) in entries {
                for (j, v) in row.into_iter().enumerate() {
                    m[(out.finite + r * n + i, inp.finite + c * n + j)] += v;
                }
            }
        }
    }
    Ok(m)
}

/// Diagonal of the weight matrix `W = diag(I_{n1}, w ⊗ I_{n2})`.
pub fn weight_diagonal(grid: &QuadGrid, dims: PiDims) -> DVector<f64> {
    let n = grid.order();
    let mut d = DVector::from_element(dims.finite + n * dims.distributed, 1.0);
    for c in 0..dims.distributed {
        for (i, w) in grid.weights.iter().enumerate() {
            d[dims.finite + c * n + i] = *w;
        }
    }
    d
}

/// `W` such that `uᵀ W v` approximates the product-space inner product.
pub fn weighted_gram(grid: &QuadGrid, dims: PiDims) -> DMatrix<f64> {
    DMatrix::from_diagonal(&weight_diagonal(grid, dims))
}

/// Largest eigenvalue of the `W`-symmetrized pencil: `max ⟨u, M u⟩_W / ⟨u, u⟩_W`.
pub fn sym_eig_max(m: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64, OracleError> {
    if m.nrows() != m.ncols() || w.shape() != m.shape() {
        return Err(OracleError::ShapeMismatch(format!("{:?} vs {:?}", m.shape(), w.shape())));
    }
    if m.iter().chain(w.iter()).any(|v| !v.is_finite()) {
        return Err(OracleError::NonFiniteEntry);
    }
    if m.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let wm = w * m;
    let sym = (&wm + wm.transpose()) * 0.5;
    let wsym = (w + w.transpose()) * 0.5;
    let chol = wsym
        .cholesky()
        .ok_or_else(|| OracleError::ShapeMismatch("weight matrix is not positive definite".into()))?;
    // L⁻¹ S L⁻ᵀ has the pencil's eigenvalues.
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&sym)
        .ok_or(OracleError::NonFiniteEntry)?;
    let y = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(OracleError::NonFiniteEntry)?;
    let y = (&y + y.transpose()) * 0.5;
    max_eigenvalue(&y)
}

fn max_eigenvalue(sym: &DMatrix<f64>) -> Result<f64, OracleError> {
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFiniteEntry);
    }
    Ok(SymmetricEigen::new(sym.clone()).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Columns spanning the sampled polynomials of degree ≤ `degree` in every
/// distributed component, plus every finite component. Columns are
/// orthonormal in the `W` inner product.
pub fn polynomial_subspace(grid: &QuadGrid, dims: PiDims, degree: usize) -> DMatrix<f64> {
    let n = grid.order();
    let k = degree + 1;
    let mut v = DMatrix::zeros(dims.finite + n * dims.distributed, dims.finite + k * dims.distributed);
    for i in 0..dims.finite {
        v[(i, i)] = 1.0;
    }
    let (a, b) = grid.bounds();
    for (i, &s) in grid.nodes.iter().enumerate() {
        let x = (2.0 * s - a - b) / (b - a);
        let mut prev = 1.0;
        let mut cur = x;
        for deg in 0..k {
            let p = match deg {
                0 => 1.0,
                1 => x,
                _ => {
                    let next = ((2 * deg - 1) as f64 * x * cur - (deg - 1) as f64 * prev) / deg as f64;
                    prev = cur;
                    cur = next;
                    next
                }
            };
            let scale = ((2 * deg + 1) as f64 / (b - a)).sqrt();
            for c in 0..dims.distributed {
                v[(dims.finite + c * n + i, dims.finite + c * k + deg)] = scale * p;
            }
        }
    }
    v
}

/// Largest eigenvalue of the quadratic form of `m` restricted to the
/// polynomial subspace of degree ≤ `degree`.
pub fn sym_eig_max_projected(
    m: &DMatrix<f64>,
    grid: &QuadGrid,
    dims: PiDims,
    degree: usize,
) -> Result<f64, OracleError> {
    let w = weight_diagonal(grid, dims);
    if m.nrows() != w.len() || m.ncols() != w.len() {
        return Err(OracleError::ShapeMismatch(format!("{:?} vs dims {dims}", m.shape())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFiniteEntry);
    }
    let v = polynomial_subspace(grid, dims, degree);
    let wv = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| w[i] * v[(i, j)]);
    let form = wv.transpose() * m * &v;
    let form = (&form + form.transpose()) * 0.5;
    let gram = wv.transpose() * &v;
    let gram = (&gram + gram.transpose()) * 0.5;
    sym_eig_max(&form, &gram)
}

/// Largest entry of `(disc(A∘B) - disc(A)·disc(B))·V` relative to the
/// scale of `disc(A)·disc(B)·V`, with `V` the sampled polynomials of degree
/// ≤ `degree`. Quadrature is exact on this subspace, so any mismatch beyond
/// rounding is an error in the symbolic composition.
pub fn composition_residual(
    a: &PiOperator,
    b: &PiOperator,
    composed: &PiOperator,
    grid: &QuadGrid,
    degree: usize,
) -> Result<f64, OracleError> {
    let v = polynomial_subspace(grid, b.in_dims(), degree);
    let direct = discretize(composed, grid)? * &v;
    let chained = discretize(a, grid)? * (discretize(b, grid)? * &v);
    let scale = chained.amax().max(1.0);
    Ok((direct - chained).amax() / scale)
}

/// Largest entry of `Vᵀ(W·disc(A*) - disc(A)ᵀ·W)U`, i.e. the mismatch of
/// `⟨A* y, x⟩ - ⟨y, A x⟩` over sampled polynomial `x ∈ U`, `y ∈ V`.
pub fn adjoint_residual(a: &PiOperator, adjoint: &PiOperator, grid: &QuadGrid, degree: usize) -> Result<f64, OracleError> {
    let w_in = weight_diagonal(grid, a.in_dims());
    let w_out = weight_diagonal(grid, a.out_dims());
    let u = polynomial_subspace(grid, a.in_dims(), degree);
    let v = polynomial_subspace(grid, a.out_dims(), degree);
    let ax = discretize(a, grid)? * &u;
    let ay = discretize(adjoint, grid)? * &v;
    let lhs = DMatrix::from_fn(v.ncols(), u.ncols(), |i, j| {
        (0..v.nrows()).map(|k| w_out[k] * v[(k, i)] * ax[(k, j)]).sum::<f64>()
    });
    let rhs = DMatrix::from_fn(v.ncols(), u.ncols(), |i, j| {
        (0..u.nrows()).map(|k| w_in[k] * ay[(k, i)] * u[(k, j)]).sum::<f64>()
    });
    Ok((lhs - rhs).amax())
}

/// Random decision-free operator with small rational coefficients and
/// kernels of total degree ≤ `degree`, for property tests.
pub fn random_operator<R: rand::Rng>(rng: &mut R, out: PiDims, inp: PiDims, domain: Domain, degree: u32) -> PiOperator {
    let coeff = |rng: &mut R| Num::ratio(rng.gen_range(-6..=6), rng.gen_range(1..=4));
    let poly = |rng: &mut R, rows: usize, cols: usize, two_vars: bool| {
        let mut terms = Vec::new();
        for ds in 0..=degree as u16 {
            let max_t = if two_vars { degree as u16 - ds } else { 0 };
            for dt in 0..=max_t {
                let data: Vec<ScalarAffine> = (0..rows * cols)
                    .map(|_| if rng.gen_bool(0.6) { coeff(rng).into() } else { ScalarAffine::zero() })
                    .collect();
                terms.push((Monomial::new(ds, dt), data));
            }
        }
        PolyMatrix::from_terms(rows, cols, terms)
    };
    let mut blocks = PiBlocks::zeros(out, inp);
    blocks.p = {
        let data: Vec<Num> = (0..out.finite * inp.finite).map(|_| coeff(rng)).collect();
        PolyMatrix::from_constants(out.finite, inp.finite, &data)
    };
    blocks.q1 = poly(rng, out.finite, inp.distributed, false);
    blocks.q2 = poly(rng, out.distributed, inp.finite, false);
    blocks.r0 = poly(rng, out.distributed, inp.distributed, false);
    blocks.r1 = poly(rng, out.distributed, inp.distributed, true);
    blocks.r2 = poly(rng, out.distributed, inp.distributed, true);
    PiOperator::new(out, inp, domain, blocks).expect("blocks are shaped for the given dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pi::PiOperator;
    use crate::polynomial::parse_poly;
    use std::f64::consts::PI;

    #[test]
    fn weights_sum_to_length() {
        for &(a, b) in &[(0.0, 1.0), (-1.0, 0.0), (0.0, 3.5)] {
            let g = QuadGrid::new(a, b, 60);
            let total: f64 = g.weights().iter().sum();
            assert!((total - (b - a)).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_and_zero() {
        let g = QuadGrid::new(0.0, 1.0, 8);
        let dims = PiDims::new(1, 2);
        let id = PiOperator::identity(dims, Domain::unit());
        assert_eq!(discretize(&id, &g).unwrap(), DMatrix::identity(17, 17));
        let z = PiOperator::zero(dims, dims, Domain::unit());
        assert_eq!(discretize(&z, &g).unwrap(), DMatrix::zeros(17, 17));
    }

    #[test]
    fn lower_integral_of_one() {
        let g = QuadGrid::new(0.0, 1.0, 40);
        let v = PiOperator::integral(parse_poly("1").unwrap(), parse_poly("0").unwrap(), Domain::unit())
            .unwrap();
        let out = discretize(&v, &g).unwrap() * g.sample(|_| 1.0);
        let err = (out - g.sample(|s| s)).amax();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn gram_examples() {
        let g = QuadGrid::new(0.0, 1.0, 2);
        assert_eq!(weighted_gram(&g, PiDims::new(1, 0)), DMatrix::identity(1, 1));
        let w = weighted_gram(&g, PiDims::new(0, 1));
        assert!((w[(0, 0)] + w[(1, 1)] - 1.0).abs() < 1e-14);
        let g = QuadGrid::new(0.0, 1.0, 40);
        let u = g.sample(|s| (PI * s).sin());
        let w = weighted_gram(&g, PiDims::new(0, 1));
        assert!(((u.transpose() * w * &u)[(0, 0)] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn eig_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(sym_eig_max(&(-&i2), &i2).unwrap(), -1.0);
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]));
        assert!((sym_eig_max(&m, &i2).unwrap() - 1.0).abs() < 1e-14);
        let mut bad = i2.clone();
        bad[(0, 1)] = f64::NAN;
        assert_eq!(sym_eig_max(&bad, &i2), Err(OracleError::NonFiniteEntry));
    }

    #[test]
    fn sequential_matches_parallel() {
        let g = QuadGrid::new(0.0, 1.0, 20);
        let op = PiOperator::integral(parse_poly("s*t - 1").unwrap(), parse_poly("t^2").unwrap(), Domain::unit())
            .unwrap();
        let a = discretize_with(&op, &Assignment::new(), &g, Execution::Parallel).unwrap();
        let b = discretize_with(&op, &Assignment::new(), &g, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subspace_is_orthonormal() {
        let g = QuadGrid::new(-1.0, 0.0, 30);
        let dims = PiDims::new(2, 2);
        let v = polynomial_subspace(&g, dims, 10);
        let w = weighted_gram(&g, dims);
        let gram = v.transpose() * w * &v;
        assert!((gram - DMatrix::identity(24, 24)).amax() < 1e-12);
    }

    #[test]
    fn random_algebra_matches_quadrature() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let d = PiDims::new(1, 1);
        let dom = Domain::new(Num::int(-1), Num::int(2)).unwrap();
        let grid = QuadGrid::new(-1.0, 2.0, 60);
        for _ in 0..5 {
            let a = random_operator(&mut rng, d, d, dom, 2);
            let b = random_operator(&mut rng, d, d, dom, 2);
            let ab = a.compose(&b).unwrap();
            assert!(composition_residual(&a, &b, &ab, &grid, 6).unwrap() < 1e-9);
            assert!(adjoint_residual(&a, &a.adjoint(), &grid, 6).unwrap() < 1e-9);
        }
    }
}
