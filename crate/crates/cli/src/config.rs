//! Experiment configuration, read from a single JSON document.

use crate::HarnessError;
use rbx_core::{CdmOptions, Geometry, GreedyConfig, MSchedule, Method, Sampling};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Geometry,
    /// Defaults to a 160x160 grid for the diffusion problem and 20000 random
    /// points for the thermal block.
    #[serde(default)]
    pub training: Option<Sampling>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub greedy: GreedySettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Writes the truth matrices in Matrix Market format next to the results.
    #[serde(default)]
    pub dump_matrices: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedySettings {
    /// Defaults to 1e-6 for the diffusion problem and 1e-5 for the thermal block.
    #[serde(default)]
    pub eps_tol: Option<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub smm: Option<EnhancedSettings>,
    #[serde(default)]
    pub cdm: Option<EnhancedSettings>,
    #[serde(default)]
    pub cdm_options: CdmOptions,
}

impl Default for GreedySettings {
    fn default() -> Self {
        Self {
            eps_tol: None,
            n_max: default_n_max(),
            seed: 0,
            smm: None,
            cdm: None,
            cdm_options: CdmOptions::default(),
        }
    }
}

/// Overrides of the damping constant and budget schedule of one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhancedSettings {
    pub k_damp: usize,
    pub m_schedule: MSchedule,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Classical, Method::Smm, Method::Cdm]
}

fn default_n_max() -> usize {
    200
}

fn one() -> usize {
    1
}

pub const TRAINING_SEED: u64 = 20_000;

impl ExperimentConfig {
    /// The diffusion problem at its default resolution.
    pub fn diffusion_default() -> Self {
        Self::for_problem(Geometry::Diffusion2d { n_x: 35 })
    }

    /// The thermal block at its default resolution.
    pub fn thermal_default() -> Self {
        Self::for_problem(Geometry::ThermalBlock { nodes_per_side: 19 })
    }

    pub fn for_problem(problem: Geometry) -> Self {
        Self {
            problem,
            training: None,
            methods: default_methods(),
            greedy: GreedySettings::default(),
            output_dir: None,
            repetitions: 1,
            dump_matrices: false,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Config("at least one method is required".into()));
        }
        if self.repetitions < 1 {
            return Err(HarnessError::Config("repetitions must be at least 1".into()));
        }
        for &m in &self.methods {
            self.greedy_config(m).validate()?;
        }
        Ok(())
    }

    pub fn training_sampling(&self) -> Sampling {
        self.training.clone().unwrap_or(match self.problem {
            Geometry::Diffusion2d { .. } => Sampling::Grid { n_per_dim: 160 },
            Geometry::ThermalBlock { .. } => Sampling::Random {
                count: 20_000,
                seed: TRAINING_SEED,
            },
        })
    }

    pub fn eps_tol(&self) -> f64 {
        self.greedy.eps_tol.unwrap_or(match self.problem {
            Geometry::Diffusion2d { .. } => 1e-6,
            Geometry::ThermalBlock { .. } => 1e-5,
        })
    }

    pub fn greedy_config(&self, method: Method) -> GreedyConfig {
        let mut c = GreedyConfig::for_method(method, self.eps_tol(), self.greedy.n_max, self.greedy.seed);
        let overrides = match method {
            Method::Classical => None,
            Method::Smm => self.greedy.smm,
            Method::Cdm => self.greedy.cdm,
        };
        if let Some(o) = overrides {
            c.k_damp = o.k_damp;
            c.m_schedule = o.m_schedule;
        }
        c.cdm = self.greedy.cdm_options;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_json(r#"{"problem": {"kind": "thermalblock", "nodes_per_side": 19}}"#).unwrap();
        assert_eq!(c.methods.len(), 3);
        assert_eq!(c.eps_tol(), 1e-5);
        assert_eq!(c.training_sampling(), Sampling::Random { count: 20_000, seed: TRAINING_SEED });
        let smm = c.greedy_config(Method::Smm);
        assert_eq!((smm.k_damp, smm.m_schedule.budget(1)), (1, 4));
        let cdm = c.greedy_config(Method::Cdm);
        assert_eq!((cdm.k_damp, cdm.m_schedule.budget(1)), (10, 40));
    }

    #[test]
    fn diffusion_defaults() {
        let c = ExperimentConfig::diffusion_default();
        assert_eq!(c.eps_tol(), 1e-6);
        assert_eq!(c.training_sampling(), Sampling::Grid { n_per_dim: 160 });
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(ExperimentConfig::from_json("{").is_err());
        assert!(ExperimentConfig::from_json(r#"{"problem": {"kind": "diffusion2d", "n_x": 10}, "methods": []}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"problem": {"kind": "diffusion2d", "n_x": 10}, "bogus": 1}"#).is_err());
        let bad_eps = r#"{"problem": {"kind": "diffusion2d", "n_x": 10}, "greedy": {"eps_tol": -1}}"#;
        assert!(matches!(ExperimentConfig::from_json(bad_eps), Err(HarnessError::Config(_))));
    }

    #[test]
    fn overrides_apply() {
        let text = r#"{
            "problem": {"kind": "diffusion2d", "n_x": 12},
            "methods": ["smm"],
            "greedy": {"eps_tol": 1e-4, "smm": {"k_damp": 3, "m_schedule": {"kind": "constant", "m": 9}}}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        let g = c.greedy_config(Method::Smm);
        assert_eq!(g.k_damp, 3);
        assert_eq!(g.m_schedule.budget(5), 9);
        assert_eq!(g.eps_tol, 1e-4);
    }
}
