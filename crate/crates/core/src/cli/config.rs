use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::SamplerConfig;
use crate::model::ModelSpec;

/// Column roles of a long-format CSV file: one row per level-1 unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub cluster: String,
    pub outcome: String,
    /// Token marking a missing cell.
    pub na: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema { cluster: "cluster".into(), outcome: "y".into(), na: "NA".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    #[serde(default = "default_cluster")]
    pub cluster: String,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default = "default_na")]
    pub na: String,
}

fn default_cluster() -> String {
    CsvSchema::default().cluster
}

fn default_outcome() -> String {
    CsvSchema::default().outcome
}

fn default_na() -> String {
    CsvSchema::default().na
}

impl DataSource {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema { cluster: self.cluster.clone(), outcome: self.outcome.clone(), na: self.na.clone() }
    }
}

/// Subtract observed-value means before fitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Centering {
    pub continuous: bool,
    pub level1: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Also write every kept draw to `chains.csv`.
    pub chains: bool,
}

/// Configuration of the `fit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: DataSource,
    pub model: ModelSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub centering: Centering,
    #[serde(default)]
    pub output: OutputOptions,
}

/// Reads a TOML file into `T`.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loads a fit configuration and resolves its data path.
pub fn load_fit_config(path: &Path) -> Result<FitConfig> {
    let mut cfg: FitConfig = read_toml(path)?;
    if cfg.data.path.is_relative() {
        if let Some(dir) = path.parent() {
            cfg.data.path = dir.join(&cfg.data.path);
        }
    }
    cfg.model.validate()?;
    Ok(cfg)
}
