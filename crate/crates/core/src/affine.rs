//! Affine-parametric problem description: parameters, parameter boxes,
//! training sets and the `A(mu) = sum_q theta_q(mu) A_q` expansion.

use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::linalg::Operator;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

/// Hard cap on the number of training points a single set may hold.
pub const DEFAULT_MAX_TRAINING_POINTS: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameter(Vec<f64>);

impl Parameter {
    pub fn new(values: Vec<f64>) -> Self {
        Parameter(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for Parameter {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Parameter {
    fn from(v: Vec<f64>) -> Self {
        Parameter(v)
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Config(format!(
                "parameter box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::Config(format!(
                "parameter box dimension {i}: lower {} is not below upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&m, (&lo, &hi))| m >= lo && m <= hi)
    }

    pub fn check(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "expected dimension {}, got {}",
                self.dim(),
                mu.len()
            )));
        }
        if !self.contains(mu) {
            return Err(Error::InvalidParameter(format!(
                "{} lies outside the parameter box",
                Parameter(mu.to_vec())
            )));
        }
        Ok(())
    }
}

/// How a training set is drawn from the parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampling {
    /// Tensor grid of equispaced points, endpoints included.
    Grid { n_per_dim: usize },
    /// I.i.d. uniform points from a seeded ChaCha8 stream.
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    points: Vec<Parameter>,
    sampling: Sampling,
}

impl TrainingSet {
    pub fn from_points(points: Vec<Parameter>, sampling: Sampling) -> Self {
        Self { points, sampling }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Parameter] {
        &self.points
    }

    pub fn get(&self, i: usize) -> &Parameter {
        &self.points[i]
    }

    pub fn sampling(&self) -> &Sampling {
        &self.sampling
    }
}

pub fn sample_training_set(bounds: &ParameterBox, sampling: &Sampling) -> Result<TrainingSet> {
    sample_training_set_capped(bounds, sampling, DEFAULT_MAX_TRAINING_POINTS)
}

pub fn sample_training_set_capped(
    bounds: &ParameterBox,
    sampling: &Sampling,
    max_points: usize,
) -> Result<TrainingSet> {
    let p = bounds.dim();
    let points = match *sampling {
        Sampling::Grid { n_per_dim } => {
            if n_per_dim < 2 {
                return Err(Error::Config(format!("grid needs at least 2 points per dimension, got {n_per_dim}")));
            }
            let total = (0..p).try_fold(1usize, |acc, _| acc.checked_mul(n_per_dim));
            let total = match total {
                Some(t) if t <= max_points => t,
                _ => {
                    return Err(Error::Resource(format!(
                        "grid of {n_per_dim}^{p} points exceeds the cap of {max_points}"
                    )))
                }
            };
            let axes: Vec<Vec<f64>> = (0..p)
                .map(|d| {
                    let (lo, hi) = (bounds.lower[d], bounds.upper[d]);
                    (0..n_per_dim)
                        .map(|k| {
                            if k + 1 == n_per_dim {
                                hi
                            } else {
                                lo + (hi - lo) * k as f64 / (n_per_dim - 1) as f64
                            }
                        })
                        .collect()
                })
                .collect();
            // Lexicographic: the first dimension varies slowest.
            (0..total)
                .map(|mut idx| {
                    let mut v = vec![0.0; p];
                    for d in (0..p).rev() {
                        v[d] = axes[d][idx % n_per_dim];
                        idx /= n_per_dim;
                    }
                    Parameter(v)
                })
                .collect()
        }
        Sampling::Random { count, seed } => {
            if count == 0 {
                return Err(Error::Config("random training set needs count >= 1".into()));
            }
            if count > max_points {
                return Err(Error::Resource(format!(
                    "{count} random points exceed the cap of {max_points}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    Parameter(
                        (0..p)
                            .map(|d| rng.random_range(bounds.lower[d]..=bounds.upper[d]))
                            .collect(),
                    )
                })
                .collect()
        }
    };
    Ok(TrainingSet {
        points,
        sampling: sampling.clone(),
    })
}

/// Coefficient map `mu -> (theta_1(mu), ..., theta_Q(mu))`, written into `out`.
pub type ThetaFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Scalar coefficient multiplying the parameter-independent right-hand side.
pub type RhsThetaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `A(mu) = sum_q theta_q(mu) A_q`, `f(mu) = theta_f(mu) f`, output `l(u) = l^T u`.
///
/// The bilinear form convention is `a(w, v; mu) = v^T A(mu) w`.
#[derive(Clone)]
pub struct AffineProblem {
    name: String,
    bounds: ParameterBox,
    theta: ThetaFn,
    components: Vec<Operator>,
    rhs: DVector<f64>,
    rhs_theta: Option<RhsThetaFn>,
    output: DVector<f64>,
    symmetric: bool,
    counters: Arc<CostCounters>,
}

impl fmt::Debug for AffineProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineProblem")
            .field("name", &self.name)
            .field("p", &self.bounds.dim())
            .field("q_a", &self.components.len())
            .field("n_dof", &self.rhs.len())
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

impl AffineProblem {
    pub fn new(
        name: impl Into<String>,
        bounds: ParameterBox,
        theta: ThetaFn,
        components: Vec<Operator>,
        rhs: DVector<f64>,
        output: DVector<f64>,
    ) -> Result<Self> {
        let n = rhs.len();
        if components.is_empty() {
            return Err(Error::Config("affine problem needs at least one component".into()));
        }
        if let Some(q) = components.iter().position(|c| c.nrows() != n || c.ncols() != n) {
            return Err(Error::Config(format!("component {q} does not match truth dimension {n}")));
        }
        if output.len() != n {
            return Err(Error::Config("output functional has the wrong length".into()));
        }
        let symmetric = components.iter().all(|c| c.is_symmetric(1e-12));
        Ok(Self {
            name: name.into(),
            bounds,
            theta,
            components,
            rhs,
            rhs_theta: None,
            output,
            symmetric,
            counters: Arc::new(CostCounters::default()),
        })
    }

    pub fn with_rhs_theta(mut self, rhs_theta: RhsThetaFn) -> Self {
        self.rhs_theta = Some(rhs_theta);
        self
    }

    pub(crate) fn with_counters(mut self, counters: Arc<CostCounters>) -> Self {
        self.counters = counters;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> &ParameterBox {
        &self.bounds
    }

    pub fn param_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn q_a(&self) -> usize {
        self.components.len()
    }

    pub fn n_dof(&self) -> usize {
        self.rhs.len()
    }

    pub fn components(&self) -> &[Operator] {
        &self.components
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn output(&self) -> &DVector<f64> {
        &self.output
    }

    /// All components symmetric, so `A(mu)` is symmetric for every `mu`.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn counters(&self) -> &Arc<CostCounters> {
        &self.counters
    }

    pub fn evaluate_theta(&self, mu: &Parameter) -> Result<Vec<f64>> {
        if mu.dim() != self.param_dim() {
            return Err(Error::InvalidParameter(format!(
                "expected dimension {}, got {}",
                self.param_dim(),
                mu.dim()
            )));
        }
        let mut out = vec![0.0; self.q_a()];
        (self.theta)(mu, &mut out);
        Ok(out)
    }

    /// Unchecked coefficient evaluation for hot loops.
    #[inline]
    pub fn theta_into(&self, mu: &[f64], out: &mut [f64]) {
        (self.theta)(mu, out)
    }

    #[inline]
    pub fn rhs_coefficient(&self, mu: &[f64]) -> f64 {
        self.rhs_theta.as_ref().map_or(1.0, |g| g(mu))
    }

    pub fn assemble_operator(&self, mu: &Parameter) -> Result<Operator> {
        self.bounds.check(mu)?;
        let theta = self.evaluate_theta(mu)?;
        Ok(Operator::linear_combination(&self.components, &theta))
    }

    pub fn assemble_rhs(&self, mu: &Parameter) -> DVector<f64> {
        &self.rhs * self.rhs_coefficient(mu)
    }

    /// `A_q v`, counted as a truth-dimension operation.
    pub fn apply_component(&self, q: usize, v: &DVector<f64>) -> DVector<f64> {
        self.counters.add_truth_ops(1);
        self.components[q].apply(v)
    }

    /// `A(mu) v` without assembling the operator.
    pub fn apply_operator(&self, theta: &[f64], v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_dof());
        for (q, &t) in theta.iter().enumerate() {
            out.axpy(t, &self.apply_component(q, v), 1.0);
        }
        out
    }
}
