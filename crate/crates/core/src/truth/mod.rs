//! Truth discretizations and truth-space solvers.

mod chebyshev;
mod thermal;

pub use chebyshev::{build_problem1, chebyshev_diff_matrix, chebyshev_lobatto_nodes, clenshaw_curtis_weights};
pub use thermal::{build_problem2, ThermalMesh};

use crate::affine::Parameter;
use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::linalg::{DenseFactor, Operator};
use crate::problem::Problem;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

/// Relative residual accepted from a direct truth solve.
pub const TRUTH_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Chebyshev collocation on `[-1, 1]^2`, `n_x` nodes per direction.
    Diffusion2d { n_x: usize },
    /// P1 finite elements on the unit square split into 3x3 blocks.
    #[serde(alias = "thermalblock")]
    ThermalBlock { nodes_per_side: usize },
}

impl Geometry {
    /// Assembles the corresponding problem.
    pub fn build(self) -> Result<Problem> {
        match self {
            Self::Diffusion2d { n_x } => build_problem1(n_x),
            Self::ThermalBlock { nodes_per_side } => build_problem2(nodes_per_side),
        }
    }
}

pub struct TruthDiscretization {
    geometry: Geometry,
    n_nodes: usize,
    free_dofs: Vec<usize>,
    dirichlet: Vec<usize>,
    coords: Vec<[f64; 2]>,
    x_inner: Operator,
    x_chol: Cholesky<f64, Dyn>,
    counters: Arc<CostCounters>,
}

impl std::fmt::Debug for TruthDiscretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruthDiscretization")
            .field("geometry", &self.geometry)
            .field("n_nodes", &self.n_nodes)
            .field("n_dof", &self.n_dof())
            .finish()
    }
}

impl TruthDiscretization {
    /// `coords` holds the coordinates of the free degrees of freedom.
    pub fn new(
        geometry: Geometry,
        n_nodes: usize,
        free_dofs: Vec<usize>,
        coords: Vec<[f64; 2]>,
        x_inner: Operator,
    ) -> Result<Self> {
        let n = free_dofs.len();
        if x_inner.nrows() != n || x_inner.ncols() != n || coords.len() != n {
            return Err(Error::Config("inner-product matrix does not match the free DoFs".into()));
        }
        if !x_inner.is_symmetric(1e-12) {
            return Err(Error::Config("inner-product matrix is not symmetric".into()));
        }
        let x_chol = Cholesky::new(x_inner.to_dense())
            .ok_or_else(|| Error::Config("inner-product matrix is not positive definite".into()))?;
        let mut is_free = vec![false; n_nodes];
        for &i in &free_dofs {
            is_free[i] = true;
        }
        let dirichlet = (0..n_nodes).filter(|&i| !is_free[i]).collect();
        Ok(Self {
            geometry,
            n_nodes,
            free_dofs,
            dirichlet,
            coords,
            x_inner,
            x_chol,
            counters: Arc::new(CostCounters::default()),
        })
    }

    pub(crate) fn set_counters(&mut self, counters: Arc<CostCounters>) {
        self.counters = counters;
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Total node count including constrained boundary nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Unknowns after eliminating Dirichlet nodes.
    pub fn n_dof(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn x_inner(&self) -> &Operator {
        &self.x_inner
    }

    /// Lower Cholesky factor `L` with `X = L L^T`, so `||v||_X = ||L^T v||`.
    pub fn x_cholesky_factor(&self) -> DMatrix<f64> {
        self.x_chol.l()
    }

    pub fn counters(&self) -> &Arc<CostCounters> {
        &self.counters
    }

    /// Solves `X v = functional`.
    pub fn riesz_solve(&self, functional: &DVector<f64>) -> DVector<f64> {
        assert_eq!(functional.len(), self.n_dof(), "functional length");
        self.counters.add_riesz_solves(1);
        self.x_chol.solve(functional)
    }

    /// `X v`.
    pub fn x_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.counters.add_truth_ops(1);
        self.x_inner.apply(v)
    }

    pub fn x_inner_product(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.counters.add_truth_ops(1);
        self.x_inner.bilinear(a, b)
    }

    pub fn x_norm(&self, v: &DVector<f64>) -> f64 {
        self.x_inner_product(v, v).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct TruthSolution {
    pub coefficients: DVector<f64>,
    pub mu: Parameter,
    /// `||A u - f|| / ||f||` achieved by the solve.
    pub relative_residual: f64,
}

/// A factorized truth operator `A(mu)`.
#[derive(Debug)]
pub struct TruthFactor {
    factor: DenseFactor,
    mu: Parameter,
    counters: Arc<CostCounters>,
}

impl TruthFactor {
    pub fn mu(&self) -> &Parameter {
        &self.mu
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.counters.add_factor_solves(1);
        self.factor.solve(rhs)
    }
}

pub fn factorize(problem: &Problem, mu: &Parameter) -> Result<TruthFactor> {
    let affine = problem.affine();
    let op = affine.assemble_operator(mu)?;
    problem.counters().add_factorizations(1);
    let dense = op.to_dense();
    let factor = if affine.is_symmetric() {
        match DenseFactor::new(dense.clone(), true) {
            Ok(f) => f,
            Err(_) => DenseFactor::new(dense, false)?,
        }
    } else {
        DenseFactor::new(dense, false)?
    };
    Ok(TruthFactor {
        factor,
        mu: mu.clone(),
        counters: problem.counters().clone(),
    })
}

/// Direct solve of `A(mu) u = f(mu)`.
pub fn truth_solve(problem: &Problem, mu: &Parameter) -> Result<TruthSolution> {
    let factor = factorize(problem, mu)?;
    truth_solve_with(problem, &factor)
}

/// Solve with an existing factorization, with one step of iterative
/// refinement if the first residual misses the tolerance.
pub fn truth_solve_with(problem: &Problem, factor: &TruthFactor) -> Result<TruthSolution> {
    let affine = problem.affine();
    let mu = factor.mu();
    let theta = affine.evaluate_theta(mu)?;
    let f = affine.assemble_rhs(mu);
    problem.counters().add_truth_solves(1);
    let mut u = factor.solve(&f);
    let f_norm = f.norm().max(f64::MIN_POSITIVE);
    let mut res = &f - affine.apply_operator(&theta, &u);
    let mut rel = res.norm() / f_norm;
    if rel > TRUTH_RESIDUAL_TOL {
        u += factor.solve(&res);
        res = &f - affine.apply_operator(&theta, &u);
        rel = res.norm() / f_norm;
    }
    if !(rel <= TRUTH_RESIDUAL_TOL) {
        return Err(Error::numerical(format!("truth solve at {mu}"), rel / f64::EPSILON));
    }
    Ok(TruthSolution {
        coefficients: u,
        mu: mu.clone(),
        relative_residual: rel,
    })
}

/// Factorizations keyed by snapshot order, shared across solves.
#[derive(Debug, Default)]
pub struct FactorCache {
    entries: Mutex<BTreeMap<usize, Arc<TruthFactor>>>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: usize) -> Option<Arc<TruthFactor>> {
        self.entries.lock().unwrap().get(&key).cloned()
    }

    pub fn insert(&self, key: usize, factor: Arc<TruthFactor>) {
        self.entries.lock().unwrap().insert(key, factor);
    }

    pub fn get_or_factorize(&self, key: usize, problem: &Problem, mu: &Parameter) -> Result<Arc<TruthFactor>> {
        if let Some(f) = self.get(key) {
            return Ok(f);
        }
        let f = Arc::new(factorize(problem, mu)?);
        self.insert(key, f.clone());
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Writes an operator as a coordinate-format Matrix Market file.
pub fn write_matrix_market(op: &Operator, w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    let dense = op.to_dense();
    let entries: Vec<(usize, usize, f64)> = (0..dense.nrows())
        .flat_map(|i| (0..dense.ncols()).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let v = dense[(i, j)];
            (v != 0.0).then_some((i, j, v))
        })
        .collect();
    writeln!(w, "{} {} {}", dense.nrows(), dense.ncols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;
    use proptest::prelude::*;

    fn disc_with(x: DMatrix<f64>) -> TruthDiscretization {
        let n = x.nrows();
        TruthDiscretization::new(
            Geometry::ThermalBlock { nodes_per_side: 4 },
            n,
            (0..n).collect(),
            vec![[0.0, 0.0]; n],
            Operator::Dense(x),
        )
        .unwrap()
    }

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |i, j| ((seed as f64 + 1.0) * (i as f64 + 1.3 * j as f64)).sin());
        &b * b.transpose() + DMatrix::identity(n, n) * n as f64
    }

    #[test]
    fn riesz_of_zero_is_zero() {
        let d = disc_with(spd(5, 1));
        assert_eq!(d.riesz_solve(&DVector::zeros(5)), DVector::zeros(5));
    }

    #[test]
    fn riesz_with_identity_is_identity() {
        let d = disc_with(DMatrix::identity(4, 4));
        let f = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        assert!((d.riesz_solve(&f) - &f).amax() < 1e-15);
    }

    #[test]
    fn riesz_round_trip() {
        let x = spd(12, 3);
        let d = disc_with(x.clone());
        let f = DVector::from_fn(12, |i, _| (i as f64 * 0.7).cos());
        let v = d.riesz_solve(&f);
        assert!((&x * v - &f).norm() <= 1e-10 * f.norm());
        assert_eq!(d.counters().snapshot().riesz_solves, 1);
    }

    #[test]
    fn x_norm_basics() {
        let d = disc_with(DMatrix::identity(4, 4));
        assert_eq!(d.x_norm(&DVector::zeros(4)), 0.0);
        assert_eq!(d.x_norm(&DVector::from_vec(vec![3.0, 4.0, 0.0, 0.0])), 5.0);
    }

    proptest! {
        #[test]
        fn x_norm_triangle_inequality(a in prop::collection::vec(-10.0f64..10.0, 6), b in prop::collection::vec(-10.0f64..10.0, 6)) {
            let d = disc_with(spd(6, 7));
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            prop_assert!(d.x_norm(&(&a + &b)) <= d.x_norm(&a) + d.x_norm(&b) + 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite_inner_product() {
        let x = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]);
        let r = TruthDiscretization::new(Geometry::Diffusion2d { n_x: 4 }, 2, vec![0, 1], vec![[0.0; 2]; 2], Operator::Sparse(x));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn matrix_market_header() {
        let op = Operator::Sparse(CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.5), (1, 0, -2.0)]));
        let mut out = Vec::new();
        write_matrix_market(&op, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "2 2 2");
        assert!(lines[2].starts_with("1 1 1.5"));
    }
}
