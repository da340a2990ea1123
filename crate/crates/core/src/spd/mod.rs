//! Surrogate parameter domains: small subsets of the training set on which
//! the inner greedy iterations search.

mod cdm;
mod cholesky;
mod smm;

pub use cdm::{cdm_approx_error, cdm_build_offline, cdm_construct, cdm_construct_with_residuals, CdmFrameSolves, CdmOfflineData, CdmOptions};
pub use cholesky::{pivoted_cholesky, PivotedCholesky, DEFAULT_DROP_TOL};
pub use smm::smm_construct;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpdMethod {
    Smm,
    Cdm,
}

/// Ordered, distinct training-set indices with the metadata of their construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDomain {
    pub indices: Vec<usize>,
    pub method: SpdMethod,
    pub outer_loop: usize,
    pub budget: usize,
}

impl SurrogateDomain {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with_outer_loop(mut self, ell: usize) -> Self {
        self.outer_loop = ell;
        self
    }
}
