use crate::affine::AffineProblem;
use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::rb::CoercivityBound;
use crate::truth::TruthDiscretization;
use std::sync::Arc;

/// An affine problem together with its truth discretization and the
/// coercivity lower-bound strategy used by the error estimator.
///
/// Both halves share one set of cost counters.
#[derive(Debug)]
pub struct Problem {
    affine: AffineProblem,
    truth: TruthDiscretization,
    coercivity: CoercivityBound,
    counters: Arc<CostCounters>,
}

impl Problem {
    pub fn new(affine: AffineProblem, mut truth: TruthDiscretization, coercivity: CoercivityBound) -> Result<Self> {
        if affine.n_dof() != truth.n_dof() {
            return Err(Error::Config(format!(
                "affine problem has {} unknowns but the truth space has {}",
                affine.n_dof(),
                truth.n_dof()
            )));
        }
        let counters = Arc::new(CostCounters::default());
        truth.set_counters(counters.clone());
        let affine = affine.with_counters(counters.clone());
        Ok(Self {
            affine,
            truth,
            coercivity,
            counters,
        })
    }

    pub fn with_coercivity(mut self, coercivity: CoercivityBound) -> Self {
        self.coercivity = coercivity;
        self
    }

    pub fn affine(&self) -> &AffineProblem {
        &self.affine
    }

    pub fn truth(&self) -> &TruthDiscretization {
        &self.truth
    }

    pub fn coercivity(&self) -> &CoercivityBound {
        &self.coercivity
    }

    pub fn counters(&self) -> &Arc<CostCounters> {
        &self.counters
    }

    pub fn name(&self) -> &str {
        self.affine.name()
    }
}
