use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hsgcn::corpus::SplitConfig;
use hsgcn::eval::EvalOptions;
use hsgcn::training::TrainConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.toml";
pub const DEFAULT_OUT: &str = "hsgcn-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// `csv`, `tsv` or `dat`; guessed from the extension when absent.
    pub format: Option<String>,
    /// Keep only rows whose rating is at least this value.
    pub threshold: Option<f64>,
    /// Minimum degree on both sides; 0 or 1 disables filtering.
    pub k_core: usize,
}

/// Everything a pipeline run needs. Values come from built-in defaults,
/// then a TOML file, then command-line flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub precision: Precision,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        hsgcn::io::write_atomic(path, self.to_toml()?.as_bytes())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            anyhow::bail!("eval cutoffs must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert_eq!(c.train.adam.lr, 3e-4);
        assert_eq!(c.train.batch_size, 3000);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml(
            "precision = \"f64\"\n[train]\nwidth = 32\n[train.loss]\nlambda1 = 0.3\n[data]\nk_core = 10\n",
        )
        .unwrap();
        assert_eq!(c.precision, Precision::F64);
        assert_eq!(c.train.width, 32);
        assert_eq!(c.train.loss.lambda1, 0.3);
        assert_eq!(c.train.loss.alpha, 0.2);
        assert_eq!(c.data.k_core, 10);
        assert_eq!(c.split.test_frac, 0.3);
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }
}
