//! Certified reduced-basis methods for affine parametric linear problems.
//!
//! The crate provides truth discretizations (Chebyshev collocation and a P1
//! thermal block), an incrementally built reduced model with an offline-online
//! residual estimator, the classical greedy, and the offline-enhanced greedy
//! that alternates global sweeps with sweeps over small surrogate parameter
//! domains built either by level-set sampling of the estimator range (SMM) or
//! by pivoted Cholesky on approximate error vectors (CDM).
// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod counters;
pub mod error;
pub mod greedy;
pub mod linalg;
pub mod problem;
pub mod rb;
pub mod spd;
pub mod truth;

pub use affine::{sample_training_set, AffineProblem, Parameter, ParameterBox, Sampling, TrainingSet};
pub use counters::{CostCounters, CostSnapshot};
pub use error::{Error, Result};
pub use greedy::{
    argmax_sweep, classical_greedy, offline_enhanced_greedy, run_greedy, surrogate_acceptance_ratio, GreedyConfig,
    GreedyTrace, MSchedule, Method, OuterRecord, SnapshotRecord, SweepRecord, Termination,
};
pub use problem::Problem;
pub use rb::{error_estimate, reduced_output, reduced_solve, CoercivityBound, ReducedModel, ReducedSolution};
pub use spd::{cdm_construct_with_residuals, CdmOptions, SpdMethod, SurrogateDomain};
pub use truth::{build_problem1, build_problem2, truth_solve, Geometry, TruthSolution};
