//! Instrumentation counters for the offline stage.
//!
//! These are the empirical analogues of the operation counts used in the
//! cost analysis: how many truth solves, Riesz solves, estimator evaluations
//! and so on a run performed. Counters are shared through an `Arc` between the
//! affine problem and its truth discretization so that every truth-dimension
//! operation is seen, regardless of which module triggered it.

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct CostCounters {
    truth_solves: AtomicU64,
    factorizations: AtomicU64,
    factor_solves: AtomicU64,
    riesz_solves: AtomicU64,
    truth_ops: AtomicU64,
    estimator_evals: AtomicU64,
    reduced_solves: AtomicU64,
    cholesky_steps: AtomicU64,
    approx_error_evals: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSnapshot {
    /// Full truth solves at a parameter (snapshots and oracle solves).
    pub truth_solves: u64,
    pub factorizations: u64,
    /// Solves against an already factorized truth operator.
    pub factor_solves: u64,
    pub riesz_solves: u64,
    /// Truth-dimension matrix-vector products and inner products.
    pub truth_ops: u64,
    pub estimator_evals: u64,
    pub reduced_solves: u64,
    pub cholesky_steps: u64,
    pub approx_error_evals: u64,
}

macro_rules! counter_methods {
    ($($field:ident => $add:ident),* $(,)?) => {
        impl CostCounters {
            $(
                #[inline]
                pub fn $add(&self, n: u64) {
                    self.$field.fetch_add(n, Ordering::Relaxed);
                }
            )*

            pub fn snapshot(&self) -> CostSnapshot {
                CostSnapshot {
                    $($field: self.$field.load(Ordering::Relaxed),)*
                }
            }

            pub fn reset(&self) {
                $(self.$field.store(0, Ordering::Relaxed);)*
            }
        }
    };
}

counter_methods! {
    truth_solves => add_truth_solves,
    factorizations => add_factorizations,
    factor_solves => add_factor_solves,
    riesz_solves => add_riesz_solves,
    truth_ops => add_truth_ops,
    estimator_evals => add_estimator_evals,
    reduced_solves => add_reduced_solves,
    cholesky_steps => add_cholesky_steps,
    approx_error_evals => add_approx_error_evals,
}

impl CostSnapshot {
    /// Counts accumulated between `earlier` and `self`.
    pub fn since(&self, earlier: &CostSnapshot) -> CostSnapshot {
        CostSnapshot {
            truth_solves: self.truth_solves - earlier.truth_solves,
            factorizations: self.factorizations - earlier.factorizations,
            factor_solves: self.factor_solves - earlier.factor_solves,
            riesz_solves: self.riesz_solves - earlier.riesz_solves,
            truth_ops: self.truth_ops - earlier.truth_ops,
            estimator_evals: self.estimator_evals - earlier.estimator_evals,
            reduced_solves: self.reduced_solves - earlier.reduced_solves,
            cholesky_steps: self.cholesky_steps - earlier.cholesky_steps,
            approx_error_evals: self.approx_error_evals - earlier.approx_error_evals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_clears_everything() {
        let c = CostCounters::default();
        c.add_truth_solves(3);
        c.add_estimator_evals(10);
        assert_eq!(c.snapshot().estimator_evals, 10);
        c.reset();
        assert_eq!(c.snapshot(), CostSnapshot::default());
    }

    #[test]
    fn since_subtracts() {
        let c = CostCounters::default();
        c.add_reduced_solves(4);
        let a = c.snapshot();
        c.add_reduced_solves(6);
        assert_eq!(c.snapshot().since(&a).reduced_solves, 6);
    }
}
