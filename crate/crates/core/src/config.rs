//! Experiment configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::flex::BartConfig;
use crate::sim::ScenarioId;
use crate::simple::{SgdConfig, TreeConfig};

/// Simple model family used for distillation and for the direct baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tree,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Simulation scenarios; ignored when `dataset` is set.
    pub scenarios: Vec<ScenarioId>,
    /// Observed data instead of a simulation.
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Sample size drawn from each population.
    pub n: usize,
    pub population_size: usize,
    pub replications: usize,
    /// Decision thresholds `c_t / c_d` in percent.
    pub thresholds: Vec<u32>,
    /// Confounding strength of the simulated treatment assignment.
    pub lambda: f64,
    /// Potential-outcome correlation used when deriving rules.
    pub rho: f64,
    pub bart: BartConfig,
    pub tree: TreeConfig,
    pub sgd: SgdConfig,
    pub seed: u64,
    pub families: Vec<Family>,
    /// Score rules on the whole population rather than the fitted sample.
    pub score_on_population: bool,
    /// Add the estimated propensity score as an outcome-model covariate.
    pub augment_propensity: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Laptop-scale protocol: three scenarios, 20 replicates, reduced ensemble.
    pub fn desk() -> Self {
        Self {
            scenarios: vec![ScenarioId::A, ScenarioId::E, ScenarioId::F],
            dataset: None,
            schema: None,
            n: 1000,
            population_size: 10_000,
            replications: 20,
            thresholds: (0..=100).step_by(5).collect(),
            lambda: 3f64.ln(),
            rho: 0.0,
            bart: BartConfig::desk(),
            tree: TreeConfig::default(),
            sgd: SgdConfig::default(),
            seed: 20_240_601,
            families: vec![Family::Tree, Family::Logistic],
            score_on_population: false,
            augment_propensity: false,
        }
    }

    /// All eight scenarios, 100 replicates and the default ensemble size.
    pub fn full() -> Self {
        Self {
            scenarios: ScenarioId::ALL.to_vec(),
            replications: 100,
            bart: BartConfig::default(),
            ..Self::desk()
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return param("at least one threshold is required");
        }
        if let Some(t) = self.thresholds.iter().find(|&&t| t > 100) {
            return param(format!("threshold {t}% is outside 0..=100"));
        }
        let mut sorted = self.thresholds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.thresholds.len() {
            return param("thresholds must be distinct");
        }
        if self.replications < 1 {
            return param("replications must be at least 1");
        }
        if self.dataset.is_none() {
            if self.scenarios.is_empty() {
                return param("no scenario and no dataset given");
            }
            if self.n > self.population_size {
                return param(format!(
                    "sample size {} exceeds population size {}",
                    self.n, self.population_size
                ));
            }
        }
        if self.dataset.is_some() != self.schema.is_some() {
            return param("a dataset needs a schema and vice versa");
        }
        if self.n < 10 {
            return param("sample size must be at least 10");
        }
        if !self.lambda.is_finite() {
            return param("lambda must be finite");
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return param("rho must lie in [-1, 1]");
        }
        if self.families.is_empty() {
            return param("at least one model family is required");
        }
        self.bart.validate()?;
        self.tree.validate()?;
        self.sgd.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        ExperimentConfig::desk().validate().unwrap();
        let full = ExperimentConfig::full();
        full.validate().unwrap();
        assert_eq!(full.scenarios.len(), 8);
        assert_eq!(full.replications, 100);
        assert_eq!(full.thresholds.len(), 21);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::desk();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.thresholds.push(150)));
        assert!(bad(|c| c.thresholds.push(5)));
        assert!(bad(|c| c.replications = 0));
        assert!(bad(|c| c.n = 20_000));
        assert!(bad(|c| c.rho = 1.5));
        assert!(bad(|c| c.families.clear()));
        assert!(bad(|c| c.dataset = Some("x.csv".into())));
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = ExperimentConfig::desk();
        let back: ExperimentConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let partial: ExperimentConfig =
            toml::from_str("scenarios = [\"E\"]\nreplications = 2\n[bart]\nnum_trees = 10\n")
                .unwrap();
        assert_eq!(partial.scenarios, vec![ScenarioId::E]);
        assert_eq!(partial.bart.num_trees, 10);
        assert_eq!(partial.bart.alpha, 0.95);
        assert_eq!(partial.n, 1000);
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1").is_err());
    }

    #[test]
    fn reads_json_and_toml_files() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"thresholds":[0,5],"seed":7}"#).unwrap();
        let c = ExperimentConfig::from_path(&j).unwrap();
        assert_eq!((c.thresholds, c.seed), (vec![0, 5], 7));
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "seed = 9\n").unwrap();
        assert_eq!(ExperimentConfig::from_path(&t).unwrap().seed, 9);
    }
}
