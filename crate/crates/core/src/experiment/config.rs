//! Experiment configuration (TOML, versioned).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::ConstantsMode;
use crate::error::{Error, Result};
use crate::greedy::{GreedyConfig, Variant};
use crate::stokes::Geometry;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub geometry: Geometry,
    pub greedy: GreedySection,
    pub test: TestSection,
    pub constants: ConstantsSection,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedySection {
    /// Variants to build, each stored as its own model in the artifact.
    pub variants: Vec<Variant>,
    pub train_size: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub n_max: usize,
    pub delta_beta_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSection {
    /// Constants used by `online` (`sweep` and `verify` always use exact ones).
    pub mode: ConstantsMode,
    /// Surrogate training points per parameter axis (tensor grid).
    pub surrogate_points: usize,
    pub eigen_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            geometry: Geometry::default(),
            greedy: GreedySection::default(),
            test: TestSection::default(),
            constants: ConstantsSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for GreedySection {
    fn default() -> Self {
        let g = GreedyConfig::default();
        Self {
            variants: vec![Variant::V1, Variant::V2, Variant::V3],
            train_size: g.train_size,
            seed: g.seed,
            tolerance: g.tolerance,
            n_max: g.n_max,
            delta_beta_tol: g.delta_beta_tol,
        }
    }
}

impl Default for TestSection {
    fn default() -> Self {
        Self { size: 25, seed: 7 }
    }
}

impl Default for ConstantsSection {
    fn default() -> Self {
        Self { mode: ConstantsMode::Surrogate, surrogate_points: 3, eigen_tol: 1e-8 }
    }
}

impl GreedySection {
    pub fn config(&self, variant: Variant) -> GreedyConfig {
        GreedyConfig {
            train_size: self.train_size,
            seed: self.seed,
            tolerance: self.tolerance,
            n_max: self.n_max,
            delta_beta_tol: self.delta_beta_tol,
            variant,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version)));
        }
        self.geometry.validate()?;
        if self.greedy.variants.is_empty() {
            return Err(Error::Config("greedy.variants is empty".into()));
        }
        let mut seen = self.greedy.variants.clone();
        seen.sort_by_key(|v| v.number());
        seen.dedup();
        if seen.len() != self.greedy.variants.len() {
            return Err(Error::Config("greedy.variants lists a variant twice".into()));
        }
        self.greedy.config(Variant::V1).validate()?;
        if self.test.size == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if self.constants.surrogate_points == 0 {
            return Err(Error::Config("constants.surrogate_points must be at least 1".into()));
        }
        if !(self.constants.eigen_tol > 0.0) {
            return Err(Error::Config("constants.eigen_tol must be positive".into()));
        }
        Ok(())
    }

    /// Tensor grid of surrogate training points.
    pub fn surrogate_grid(&self) -> Vec<Vec<f64>> {
        let k = self.constants.surrogate_points;
        let (lo, hi) = (self.geometry.mu_lower, self.geometry.mu_upper);
        let at = |i: usize, d: usize| {
            if k == 1 {
                0.5 * (lo[d] + hi[d])
            } else {
                lo[d] + (hi[d] - lo[d]) * i as f64 / (k - 1) as f64
            }
        };
        (0..k).flat_map(|i| (0..k).map(move |j| vec![at(i, 0), at(j, 1)])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml("version = 1\n[greedy]\nvariants = [1]\ntrain_size = 50\n").unwrap();
        assert_eq!(c.greedy.variants, vec![Variant::V1]);
        assert_eq!(c.greedy.train_size, 50);
        assert_eq!(c.test.size, 25);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::from_toml("version = 2"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[greedy]\nvariants = [4]"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[test]\nsize = 0"), Err(Error::EmptyTrainingSet)));
        assert!(ExperimentConfig::from_toml("[geometry]\nmu_upper = [0.6, 1.2]").is_err());
    }

    #[test]
    fn grid_covers_corners() {
        let g = ExperimentConfig::default().surrogate_grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![0.2, 0.2]);
        assert_eq!(g[8], vec![0.6, 0.6]);
    }
}
