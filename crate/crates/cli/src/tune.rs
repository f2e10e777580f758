use std::path::PathBuf;
use std::time::Duration;

use anyhow::anyhow;
use clap::Args;
use hyperband_core::evaluator::{
    load_replay, Accounting, BudgetLedger, Evaluator, LossOracle, TrainerOracle, TrialLog,
};
use hyperband_core::hyperband::{hyperband_practical, ArmSource, HyperbandError, HyperbandParams, SampledArms, SyntheticArms};
use hyperband_core::search_space::{parse_space, Configuration};
use hyperband_core::sha::IncumbentPolicy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::{RunManifest, RunParams};
use crate::{failed, parse_enum, read_file, usage, CliError, Outcome, ShapeArgs};

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BEST_FILE: &str = "best.json";
pub const TRAJECTORY_FILE: &str = "trajectory.json";

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    /// Read every setting from a manifest written by an earlier run.
    #[arg(long, conflicts_with_all = ["space", "replay", "trainer"])]
    pub manifest: Option<PathBuf>,
    /// Search space document.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Replay table `{arm: {level: loss}}` used instead of a trainer.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Maximum resource per configuration.
    #[arg(long = "R", default_value_t = 81)]
    pub max_resource: u64,
    #[arg(long, default_value_t = 3.0)]
    pub eta: f64,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ledger cap in resource units.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Outer loops (default: 1 without a budget, until the cap with one).
    #[arg(long)]
    pub loops: Option<u64>,
    #[arg(long, default_value = "full", value_parser = parse_enum::<Accounting>)]
    pub accounting: Accounting,
    #[arg(long, default_value = "max_resource", value_parser = parse_enum::<IncumbentPolicy>)]
    pub incumbent: IncumbentPolicy,
    #[arg(long = "max-parallel", default_value_t = 1)]
    pub max_parallel: usize,
    /// Run the brackets of each outer loop concurrently.
    #[arg(long = "parallel-brackets")]
    pub parallel_brackets: bool,
    #[arg(long = "timeout-secs")]
    pub timeout_secs: Option<f64>,
    /// Passed to the trainer with every request.
    #[arg(long = "resource-unit", default_value = "unit")]
    pub resource_unit: String,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trainer command, after `--`.
    #[arg(last = true)]
    pub trainer: Vec<String>,
}

impl TuneArgs {
    pub fn manifest(&self) -> Result<RunManifest, CliError> {
        if let Some(path) = &self.manifest {
            let mut m = RunManifest::load(path).map_err(usage)?;
            if let Some(out) = &self.out {
                m.out_dir = out.clone();
            }
            return Ok(m);
        }
        let out_dir = self.out.clone().ok_or_else(|| usage(anyhow!("--out is required")))?;
        Ok(RunManifest {
            command: "tune".into(),
            params: RunParams {
                max_resource: self.max_resource,
                eta: self.eta,
                n_max: self.shape.n_max(self.max_resource),
                n_min: self.shape.n_min,
                seed: self.seed,
                budget: self.budget,
                outer_loops: match (self.loops, self.budget) {
                    (Some(l), _) => Some(l),
                    (None, Some(_)) => None,
                    (None, None) => Some(1),
                },
                accounting: self.accounting,
                incumbent_policy: self.incumbent,
                max_parallel: self.max_parallel,
                parallel_brackets: self.parallel_brackets,
                timeout_secs: self.timeout_secs,
                resource_unit: self.resource_unit.clone(),
            },
            space: self.space.clone(),
            replay: self.replay.clone(),
            trainer: (!self.trainer.is_empty()).then(|| self.trainer.clone()),
            out_dir,
        })
    }
}

/// Contents of `best.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestConfig {
    pub arm_id: u64,
    pub loss: f64,
    pub resource: u64,
    pub config: Option<Configuration>,
    pub ledger_consumed: u64,
    pub truncated: bool,
}

pub fn run(a: &TuneArgs) -> Result<Outcome, CliError> {
    let manifest = a.manifest()?;
    execute(&manifest)
}

pub fn execute(m: &RunManifest) -> Result<Outcome, CliError> {
    let p = &m.params;
    let space = match &m.space {
        Some(path) => Some(parse_space(&read_file(path)?).map_err(|e| usage(anyhow!("{}: {e}", path.display())))?),
        None => None,
    };
    let oracle: Box<dyn LossOracle> = match (&m.replay, &m.trainer) {
        (Some(path), None) => Box::new(load_replay(&read_file(path)?).map_err(|e| usage(anyhow!("{}: {e}", path.display())))?),
        (None, Some(cmd)) => {
            if space.is_none() {
                return Err(usage(anyhow!("a trainer needs a search space (--space)")));
            }
            let timeout = match p.timeout_secs {
                Some(t) if t > 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
                Some(t) => return Err(usage(anyhow!("timeout must be positive, got {t}"))),
                None => None,
            };
            Box::new(
                TrainerOracle::new(cmd, m.out_dir.join("checkpoints"))
                    .map_err(usage)?
                    .resource_unit(p.resource_unit.clone())
                    .timeout(timeout),
            )
        }
        (None, None) => return Err(usage(anyhow!("give a trainer command after `--` or --replay"))),
        (Some(_), Some(_)) => return Err(usage(anyhow!("--replay and a trainer command are exclusive"))),
    };
    let params = HyperbandParams {
        max_resource: p.max_resource,
        eta: p.eta,
        n_max: p.n_max,
        n_min: p.n_min,
        outer_loops: p.outer_loops,
        incumbent_policy: p.incumbent_policy,
        parallel_brackets: p.parallel_brackets,
        only_bracket: None,
    };
    params.validate().map_err(usage)?;
    if p.outer_loops.is_none() && p.budget.is_none() {
        return Err(usage(anyhow!("running until the cap needs --budget")));
    }

    std::fs::create_dir_all(&m.out_dir).map_err(|e| failed(anyhow!("creating {}: {e}", m.out_dir.display())))?;
    std::fs::write(m.out_dir.join(MANIFEST_FILE), m.to_json()).map_err(failed)?;
    let log_path = m.out_dir.join(TRIALS_FILE);
    if log_path.exists() {
        std::fs::remove_file(&log_path).map_err(failed)?;
    }
    let log = TrialLog::to_file(&log_path).map_err(failed)?;
    let ledger = match p.budget {
        Some(cap) => BudgetLedger::with_cap(cap),
        None => BudgetLedger::unlimited(),
    };
    let ev = Evaluator::new(oracle.as_ref(), &ledger, &log)
        .max_parallel(p.max_parallel)
        .accounting(p.accounting);

    let mut sampled;
    let mut synthetic = SyntheticArms;
    let source: &mut dyn ArmSource = match &space {
        Some(space) => {
            sampled = SampledArms::new(space, ChaCha8Rng::seed_from_u64(p.seed));
            &mut sampled
        }
        None => &mut synthetic,
    };

    let run = match hyperband_practical(&params, source, &ev) {
        Ok(run) => run,
        Err(e @ (HyperbandError::Params(_) | HyperbandError::EmptyBracketRange { .. } | HyperbandError::Unbounded)) => {
            return Err(usage(e));
        }
        Err(e) => return Err(failed(e)),
    };
    std::fs::write(
        m.out_dir.join(TRAJECTORY_FILE),
        serde_json::to_string_pretty(&run.trajectory).expect("trajectory serializes"),
    )
    .map_err(failed)?;

    let Some(inc) = &run.incumbent else {
        eprintln!("no bracket completed; consumed {} units", ledger.consumed());
        return if run.truncated {
            Ok(Outcome::Truncated)
        } else {
            Err(failed(anyhow!("no bracket completed")))
        };
    };
    let best = BestConfig {
        arm_id: inc.arm.id,
        loss: inc.loss,
        resource: inc.resource,
        config: inc.arm.config.clone(),
        ledger_consumed: ledger.consumed(),
        truncated: run.truncated,
    };
    std::fs::write(
        m.out_dir.join(BEST_FILE),
        serde_json::to_string_pretty(&best).expect("best config serializes"),
    )
    .map_err(failed)?;
    crate::emit(&(format!(
        "best arm {} loss {} at resource {}; {} brackets, {} units{}",
        best.arm_id,
        best.loss,
        best.resource,
        run.brackets.len(),
        best.ledger_consumed,
        if run.truncated { " (stopped by budget cap)" } else { "" }
    ) + "\n"));
    Ok(if run.truncated { Outcome::Truncated } else { Outcome::Done })
}
