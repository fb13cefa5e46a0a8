use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("population size must be at least 2, got {0}")]
    PopulationTooSmall(usize),
    #[error("epsilon must lie in [0, 1], got {0}")]
    EpsilonRange(f64),
    #[error("top-l ({l}) exceeds the population size ({h})")]
    TopTooLarge { l: usize, h: usize },
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("temperature must be finite and non-negative, got {0}")]
    Temperature(f64),
    #[error("unsupported config schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Engine parameters. Loaded from a TOML file whose `schema_version` must
/// match [`SCHEMA_VERSION`]; omitted keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub schema_version: u32,
    /// h
    pub population_size: usize,
    /// offspring generations after the initial population
    pub generations: usize,
    pub eval_timeout_secs: f64,
    pub sigma: usize,
    /// penalty threshold; derived from the baselines when absent
    pub epsilon: Option<f64>,
    /// l: how many leading fitness values are watched for stagnation
    pub top_l: usize,
    /// t: unchanged generations that count as stagnation
    pub stagnation_window: usize,
    /// d: produced rules averaged into a strategy score
    pub strategy_window: usize,
    pub max_strategies: usize,
    pub temperature: f64,
    pub seed: u64,
    /// hard cap on chat calls; unlimited when absent
    pub max_chat_calls: Option<u64>,
    pub parallelism: usize,
    /// attempts per offspring slot after the first
    pub retries: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            population_size: 20,
            generations: 20,
            eval_timeout_secs: 60.0,
            sigma: fairpb_core::cohesion::DEFAULT_SIGMA,
            epsilon: None,
            top_l: 3,
            stagnation_window: 3,
            strategy_window: 3,
            max_strategies: 5,
            temperature: 1.0,
            seed: 0,
            max_chat_calls: None,
            parallelism: 4,
            retries: 3,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        if self.population_size < 2 {
            return Err(ConfigError::PopulationTooSmall(self.population_size));
        }
        if let Some(eps) = self.epsilon {
            if !(0.0..=1.0).contains(&eps) {
                return Err(ConfigError::EpsilonRange(eps));
            }
        }
        if self.top_l > self.population_size {
            return Err(ConfigError::TopTooLarge { l: self.top_l, h: self.population_size });
        }
        for (name, v) in [
            ("top_l", self.top_l),
            ("stagnation_window", self.stagnation_window),
            ("strategy_window", self.strategy_window),
            ("max_strategies", self.max_strategies),
            ("parallelism", self.parallelism),
            ("sigma", self.sigma),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if !(self.eval_timeout_secs.is_finite() && self.eval_timeout_secs > 0.0) {
            return Err(ConfigError::Zero("eval_timeout_secs"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.eval_timeout_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        assert_eq!((cfg.population_size, cfg.generations, cfg.sigma), (20, 20, 100));
        assert_eq!(cfg.eval_timeout(), Duration::from_secs(60));
    }

    #[test]
    fn toml_overrides_and_checks() {
        let cfg = EngineConfig::from_toml("schema_version = 1\npopulation_size = 4\nepsilon = 0.5\n").unwrap();
        assert_eq!(cfg.population_size, 4);
        assert_eq!(cfg.epsilon, Some(0.5));
        assert_eq!(cfg.top_l, 3);
        assert!(matches!(EngineConfig::from_toml("population_size = 1"), Err(ConfigError::PopulationTooSmall(1))));
        assert!(matches!(EngineConfig::from_toml("epsilon = 1.5"), Err(ConfigError::EpsilonRange(_))));
        assert!(matches!(EngineConfig::from_toml("population_size = 2"), Err(ConfigError::TopTooLarge { .. })));
        assert!(matches!(EngineConfig::from_toml("schema_version = 2"), Err(ConfigError::Schema(2))));
        assert!(EngineConfig::from_toml("bogus = 1").is_err());
    }
}
