use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use setmatch_core::hypergraph::FilterSpec;
use setmatch_core::sampling::SplitSpec;
use setmatch_core::train::TrainConfig;

/// Everything an experiment run reads. Written back to the output directory
/// after flag overrides so a rerun from the echo reproduces the outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_proportions")]
    pub proportions: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_proportions() -> Vec<f64> {
    vec![0.8, 0.2]
}

fn default_repetitions() -> usize {
    5
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            filter: FilterSpec::identity(),
            seed: 0,
            proportions: default_proportions(),
            repetitions: default_repetitions(),
            train: TrainConfig::default(),
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        Ok(SplitSpec::from_proportions(
            &self.proportions,
            self.repetitions,
            self.seed,
        )?)
    }

    pub fn dataset(&self) -> Result<&Path> {
        match &self.dataset {
            Some(p) if p.exists() => Ok(p),
            Some(p) => bail!("dataset {} does not exist", p.display()),
            None => bail!("no dataset given (config key `dataset` or --dataset)"),
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .context("no output directory given (config key `out_dir` or --out-dir)")
    }

    /// The root seed drives every derived stream.
    pub fn sync_seed(&mut self) {
        self.train.seed = self.seed;
    }
}
