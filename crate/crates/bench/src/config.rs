use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cre_pinn::elasticity::Material;
use cre_pinn::network::NetworkShape;
use cre_pinn::pinn::{AdamConfig, CollocationSet, LossConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config is for scenario `{found}` but `{expected}` was requested")]
    ScenarioMismatch { expected: Scenario, found: Scenario },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Forward solve from physics only (`alpha = 0`).
    Bvp,
    /// Fit to exact data with physics terms (`alpha = 1`).
    Regression,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Bvp => "bvp",
            Scenario::Regression => "regression",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bvp" => Ok(Scenario::Bvp),
            "regression" => Ok(Scenario::Regression),
            _ => Err(format!("unknown scenario `{s}` (expected bvp or regression)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollocationSection {
    pub n_interior: usize,
    pub n_boundary: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub epochs: usize,
    pub log_every: usize,
    pub adam: AdamConfig<f64>,
}

/// Everything that determines the outcome of one training run.
///
/// Serialized as TOML; the SHA-256 of that text is the run's config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    /// Cells per side of the evaluation grid.
    pub test_grid: usize,
    pub material: Material<f64>,
    pub network: NetworkShape,
    pub loss: LossConfig<f64>,
    pub collocation: CollocationSection,
    pub train: TrainSection,
}

impl RunConfig {
    pub fn default_for(scenario: Scenario) -> Self {
        let (loss, n, epochs) = match scenario {
            Scenario::Bvp => (LossConfig::boundary_value(), 100, 50_000),
            Scenario::Regression => (LossConfig::regression(), 40, 20_000),
        };
        RunConfig {
            scenario,
            seed: 0,
            test_grid: 200,
            material: Material::default(),
            network: NetworkShape::default(),
            loss,
            collocation: CollocationSection {
                n_interior: n,
                n_boundary: n,
            },
            train: TrainSection {
                epochs,
                log_every: 1000,
                adam: AdamConfig::default(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        Material::new(self.material.lambda, self.material.mu).map_err(|e| invalid(&e))?;
        NetworkShape::new(self.network.hidden_layers, self.network.width).map_err(|e| invalid(&e))?;
        self.loss.validate().map_err(|e| invalid(&e))?;
        let expected_alpha = match self.scenario {
            Scenario::Bvp => 0,
            Scenario::Regression => 1,
        };
        if self.loss.alpha != expected_alpha {
            return Err(ConfigError::Invalid(format!(
                "scenario {} requires alpha = {expected_alpha}",
                self.scenario
            )));
        }
        CollocationSet::<f64>::new(self.collocation.n_interior, self.collocation.n_boundary)
            .map_err(|e| invalid(&e))?;
        if self.test_grid == 0 {
            return Err(ConfigError::Invalid("test_grid must be >= 1".into()));
        }
        let adam = &self.train.adam;
        if !(adam.learning_rate > 0.0 && adam.learning_rate.is_finite()) {
            return Err(ConfigError::Invalid("learning rate must be > 0".into()));
        }
        if !((0.0..1.0).contains(&adam.beta1) && (0.0..1.0).contains(&adam.beta2)) {
            return Err(ConfigError::Invalid("Adam betas must lie in [0, 1)".into()));
        }
        if !(adam.epsilon > 0.0) {
            return Err(ConfigError::Invalid("Adam epsilon must be > 0".into()));
        }
        self.train_config().validate().map_err(|e| invalid(&e))
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            adam: self.train.adam,
            epochs: self.train.epochs,
            seed: self.seed,
            log_every: self.train.log_every,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`RunConfig::to_toml`].
    pub fn hash(&self) -> String {
        hash_text(&self.to_toml())
    }

    /// Parses a full or partial config. Missing keys take the defaults of the
    /// scenario named in the text, or of `scenario` when the text names none.
    pub fn from_toml(text: &str, scenario: Option<Scenario>) -> Result<Self, ConfigError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let named = match user.get("scenario") {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| ConfigError::Parse("scenario must be a string".into()))?
                    .parse::<Scenario>()
                    .map_err(ConfigError::Parse)?,
            ),
            None => None,
        };
        let scenario = match (named, scenario) {
            (Some(found), Some(expected)) if found != expected => {
                return Err(ConfigError::ScenarioMismatch { expected, found })
            }
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => return Err(ConfigError::Parse("config does not name a scenario".into())),
        };
        let mut merged: toml::Table = toml::from_str(&Self::default_for(scenario).to_toml()).expect("defaults parse");
        merge(&mut merged, user, "")?;
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, scenario: Option<Scenario>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, scenario)
    }
}

pub fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Overlays `user` onto `base`, rejecting keys that `base` does not have.
fn merge(base: &mut toml::Table, user: toml::Table, prefix: &str) -> Result<(), ConfigError> {
    for (key, value) in user {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(ConfigError::UnknownKey(path)),
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u, &path)?,
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}
