//! Everything needed to repeat a `tune` run.

use std::path::{Path, PathBuf};

use hyperband_core::evaluator::Accounting;
use hyperband_core::sha::IncumbentPolicy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub params: RunParams,
    /// Search space document; optional with a replay backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<PathBuf>,
    /// Replay table used instead of a trainer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<PathBuf>,
    /// Trainer program and arguments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer: Option<Vec<String>>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub max_resource: u64,
    pub eta: f64,
    #[serde(default)]
    pub n_max: Option<u64>,
    #[serde(default)]
    pub n_min: Option<u64>,
    pub seed: u64,
    /// Ledger cap in resource units.
    #[serde(default)]
    pub budget: Option<u64>,
    /// Outer loops; `None` runs until the cap.
    #[serde(default)]
    pub outer_loops: Option<u64>,
    #[serde(default)]
    pub accounting: Accounting,
    #[serde(default)]
    pub incumbent_policy: IncumbentPolicy,
    #[serde(default = "one")]
    pub max_parallel: usize,
    #[serde(default)]
    pub parallel_brackets: bool,
    #[serde(default)]
    pub timeout_secs: Option<f64>,
    /// Passed to trainers verbatim.
    #[serde(default = "unit")]
    pub resource_unit: String,
}

fn one() -> usize {
    1
}

fn unit() -> String {
    "unit".into()
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
