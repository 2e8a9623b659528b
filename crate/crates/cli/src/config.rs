//! Run configuration: TOML file plus `DIALEVAL_*` environment variables.
//! Precedence is flag, then config file, then environment.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use dialeval::corpus::Grouping;
use dialeval::featurize::Normalization;
use dialeval::llm::GatewayConfig;
use dialeval::models::{FeaturesPerSplit, ModelKind, TrainConfig};
use dialeval::{Error, Result};

pub const CONFIG_ENV: &str = "DIALEVAL_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Text,
    Machine,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub spans: Option<PathBuf>,
    pub macro_labels: Option<PathBuf>,
    pub overall: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratio: Option<String>,
    pub seed: Option<u64>,
    pub grouping: Option<Grouping>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSection {
    pub learning_rate: Option<f64>,
    pub l2_penalty: Option<f64>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub features_per_split: Option<FeaturesPerSplit>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub logistic: LogisticSection,
    pub forest: ForestSection,
    pub variance_floor: Option<f64>,
    pub permutation_rounds: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub temperature: Option<f64>,
    pub api_key_env: Option<String>,
    pub backoff_base_ms: Option<u64>,
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub step1: Option<String>,
    pub step2: Option<String>,
    pub step3: Option<String>,
    pub normalization: Option<Normalization>,
    pub mock_script: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
    pub verbosity: Option<u8>,
    pub paths: Paths,
    pub split: SplitSection,
    pub train: TrainSection,
    pub gateway: GatewaySection,
    pub run: RunSection,
}

impl RunConfig {
    /// Loads `explicit`, else the file named by `DIALEVAL_CONFIG`, else an
    /// empty configuration.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => env_value::<PathBuf>(CONFIG_ENV)?,
        };
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
    }

    /// Training configuration with `model` and `seed` already resolved.
    pub fn train_config(&self, model: ModelKind, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(model, seed);
        let t = &self.train;
        set(&mut cfg.logistic.learning_rate, t.logistic.learning_rate);
        set(&mut cfg.logistic.l2_penalty, t.logistic.l2_penalty);
        set(&mut cfg.logistic.epochs, t.logistic.epochs);
        set(&mut cfg.forest.n_trees, t.forest.n_trees);
        set(&mut cfg.forest.max_depth, t.forest.max_depth);
        set(&mut cfg.forest.min_leaf, t.forest.min_leaf);
        set(&mut cfg.forest.features_per_split, t.forest.features_per_split);
        set(&mut cfg.variance_floor, t.variance_floor);
        set(&mut cfg.permutation_rounds, t.permutation_rounds);
        cfg
    }

    /// Gateway settings: config file, then `DIALEVAL_GATEWAY_*`, then
    /// defaults. The key itself is read from the named variable at call
    /// time and never stored.
    pub fn gateway_config(&self) -> Result<GatewayConfig> {
        let mut cfg = GatewayConfig::default();
        let g = &self.gateway;
        set(&mut cfg.endpoint, pick(None, g.endpoint.clone(), "DIALEVAL_GATEWAY_ENDPOINT")?);
        set(&mut cfg.model, pick(None, g.model.clone(), "DIALEVAL_GATEWAY_MODEL")?);
        set(&mut cfg.timeout_ms, g.timeout_ms);
        set(&mut cfg.max_retries, g.max_retries);
        set(&mut cfg.temperature, g.temperature);
        set(&mut cfg.backoff_base_ms, g.backoff_base_ms);
        set(&mut cfg.max_in_flight, g.max_in_flight);
        if g.api_key_env.is_some() {
            cfg.api_key_env = g.api_key_env.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn env_value<T: FromStr>(name: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    match std::env::var(name) {
        Ok(raw) if !raw.trim().is_empty() => raw
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| Error::Config(format!("environment variable {name}: {e}"))),
        _ => Ok(None),
    }
}

/// First of flag, config value, environment variable `env`.
pub fn pick<T: FromStr>(flag: Option<T>, config: Option<T>, env: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    match flag.or(config) {
        Some(v) => Ok(Some(v)),
        None => env_value(env),
    }
}

/// Like [`pick`] but the value is mandatory.
pub fn require<T: FromStr>(flag: Option<T>, config: Option<T>, env: &str, what: &str) -> Result<T>
where
    T::Err: Display,
{
    pick(flag, config, env)?.ok_or_else(|| {
        Error::Config(format!("{what} is required (flag, config file or {env})"))
    })
}
