use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, Subcommand};
use hyperband_core::evaluator::{load_replay, ArmState, EvalRequest, LossOracle};
use hyperband_core::niab_sim::{Family, SimulatedOracle};
use hyperband_core::theory_oracles::{
    h_complexity_at_boundary, lower_budget, lower_target, scaling_predictions, uniform_budget, uniform_target,
    ScalingPrediction,
};
use serde::Serialize;

use crate::simulate::InstanceArgs;
use crate::{read_file, usage, CliError, Outcome};

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(subcommand)]
    pub query: Query,
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Query {
    /// Losses of one simulated arm.
    Sim {
        #[command(flatten)]
        population: InstanceArgs,
        /// Population seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        arm: u64,
        /// Resource levels, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<u64>,
    },
    /// Losses of one arm of a replay table.
    Replay {
        table: PathBuf,
        #[arg(long)]
        arm: u64,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<u64>,
    },
    /// Budgets and complexities for a continuous population.
    Theory {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 100)]
        n: u64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Target regret for the scaling predictions.
        #[arg(long)]
        gap: Option<f64>,
    },
}

/// JSON shape of every query: what was asked, with which inputs, and the answer.
#[derive(Debug, Serialize)]
struct Answer<'a, I, V> {
    quantity: &'a str,
    inputs: I,
    value: V,
}

#[derive(Debug, Serialize)]
struct LossInputs<'a> {
    source: &'a str,
    arm: u64,
    levels: &'a [u64],
}

#[derive(Debug, Serialize)]
struct ArmLosses {
    arm: u64,
    limit: Option<f64>,
    losses: Vec<(u64, Option<f64>)>,
}

#[derive(Debug, Serialize)]
struct TheoryInputs {
    alpha: f64,
    beta: f64,
    n: u64,
    delta: f64,
    gap: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TheoryReport {
    uniform_target: f64,
    uniform_budget: u64,
    lower_target: f64,
    lower_budget: u64,
    complexity_epsilon: f64,
    complexity: f64,
    scaling: Option<ScalingPrediction>,
}

fn query_losses(oracle: &dyn LossOracle, arm: u64, levels: &[u64]) -> Vec<(u64, Option<f64>)> {
    let state = ArmState::synthetic(arm);
    levels
        .iter()
        .map(|&level| {
            let loss = oracle
                .evaluate(&EvalRequest {
                    trial_id: 0,
                    arm: &state,
                    resource: level,
                })
                .ok();
            (level, loss)
        })
        .collect()
}

pub fn run(a: &OracleArgs) -> Result<Outcome, CliError> {
    let text = match &a.query {
        Query::Sim {
            population,
            seed,
            arm,
            levels,
        } => {
            let inst = population.instance()?.with_seed(*seed);
            if inst.family == Family::Adversarial {
                return Err(usage(anyhow!("adversarial populations are built by `simulate`")));
            }
            let oracle = SimulatedOracle::new(inst).map_err(usage)?;
            let mut sorted = levels.clone();
            sorted.sort_unstable();
            let out = ArmLosses {
                arm: *arm,
                limit: oracle.limit(*arm),
                losses: sorted
                    .iter()
                    .map(|&l| (l, oracle.recall(&ArmState::synthetic(*arm), l)))
                    .collect(),
            };
            render_losses(&out, a.json, &table_source(population))
        }
        Query::Replay { table, arm, levels } => {
            let oracle = load_replay(&read_file(table)?).map_err(|e| usage(anyhow!("{}: {e}", table.display())))?;
            let out = ArmLosses {
                arm: *arm,
                limit: None,
                losses: query_losses(&oracle, *arm, levels),
            };
            render_losses(&out, a.json, &table.display().to_string())
        }
        Query::Theory {
            alpha,
            beta,
            n,
            delta,
            gap,
        } => {
            let inst = hyperband_core::niab_sim::TheoryInstance::beta_continuous(*alpha, *beta, 0);
            let (complexity_epsilon, complexity) = h_complexity_at_boundary(&inst, *n, *delta).map_err(usage)?;
            let report = TheoryReport {
                uniform_target: uniform_target(&inst, *n, *delta).map_err(usage)?,
                uniform_budget: uniform_budget(&inst, *n, *delta).map_err(usage)?,
                lower_target: lower_target(&inst, *n, *delta).map_err(usage)?,
                lower_budget: lower_budget(&inst, *n, *delta).map_err(usage)?,
                complexity_epsilon,
                complexity,
                scaling: gap
                    .map(|g| scaling_predictions(*alpha, *beta, g, *delta))
                    .transpose()
                    .map_err(usage)?,
            };
            if a.json {
                let answer = Answer {
                    quantity: "theory",
                    inputs: TheoryInputs {
                        alpha: *alpha,
                        beta: *beta,
                        n: *n,
                        delta: *delta,
                        gap: *gap,
                    },
                    value: &report,
                };
                serde_json::to_string_pretty(&answer).expect("report serializes") + "\n"
            } else {
                let mut s = String::new();
                let _ = writeln!(s, "uniform allocation: target {:.6}, budget {}", report.uniform_target, report.uniform_budget);
                let _ = writeln!(s, "lower bound:        target {:.6}, budget {}", report.lower_target, report.lower_budget);
                let _ = writeln!(s, "complexity H at eps = {:.6}: {:.3}", report.complexity_epsilon, report.complexity);
                if let Some(p) = report.scaling {
                    let _ = writeln!(
                        s,
                        "scaling at gap {}: uniform {:.3e}, successive halving {:.3e}",
                        gap.unwrap_or_default(),
                        p.uniform_budget,
                        p.sha_budget
                    );
                }
                s
            }
        }
    };
    crate::emit(&text);
    Ok(Outcome::Done)
}

fn table_source(population: &InstanceArgs) -> String {
    match &population.instance {
        Some(path) => path.display().to_string(),
        None => "simulator".into(),
    }
}

fn render_losses(out: &ArmLosses, json: bool, source: &str) -> String {
    if json {
        let levels: Vec<u64> = out.losses.iter().map(|(l, _)| *l).collect();
        let answer = Answer {
            quantity: "losses",
            inputs: LossInputs {
                source,
                arm: out.arm,
                levels: &levels,
            },
            value: out,
        };
        return serde_json::to_string_pretty(&answer).expect("losses serialize") + "\n";
    }
    let mut s = String::new();
    if let Some(limit) = out.limit {
        let _ = writeln!(s, "arm {} limit {limit}", out.arm);
    }
    for (level, loss) in &out.losses {
        match loss {
            Some(v) => {
                let _ = writeln!(s, "{level:>10} {v}");
            }
            None => {
                let _ = writeln!(s, "{level:>10} -");
            }
        }
    }
    s
}
