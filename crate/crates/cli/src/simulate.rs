use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, ValueEnum};
use hyperband_core::baselines::{random_search, uniform_allocation};
use hyperband_core::evaluator::{ArmState, BudgetLedger, Evaluator, RungTag, TrialLog};
use hyperband_core::hyperband::{
    hyperband_infinite, hyperband_practical, HyperbandParams, RoundIncumbent, SyntheticArms,
};
use hyperband_core::niab_sim::{
    child_seed, make_adversarial_instance, EnvelopeSign, Family, Noise, SimulatedOracle, TheoryInstance,
};
use hyperband_core::sha::{sha_finite_theoretical, sha_infinite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{parse_enum, read_file, usage, CliError, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Hyperband,
    #[value(name = "hyperband_inf")]
    HyperbandInf,
    Sha,
    #[value(name = "sha_inf")]
    ShaInf,
    Uniform,
    Random,
}

/// A synthetic population, from a JSON file or from flags.
#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Population as JSON; otherwise built from the flags below.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, default_value = "beta_continuous", value_parser = parse_enum::<Family>)]
    pub family: Family,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long = "nu-star", default_value_t = 0.0)]
    pub nu_star: f64,
    /// Means of the discrete family, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub means: Option<Vec<f64>>,
    #[arg(long, default_value = "none", value_parser = parse_enum::<Noise>)]
    pub noise: Noise,
    #[arg(long, default_value = "plus", value_parser = parse_enum::<EnvelopeSign>)]
    pub sign: EnvelopeSign,
    /// Envelope horizon: losses equal their limits from this level on.
    #[arg(long)]
    pub horizon: Option<u64>,
}

impl InstanceArgs {
    pub fn instance(&self) -> Result<TheoryInstance, CliError> {
        match &self.instance {
            Some(path) => {
                serde_json::from_str(&read_file(path)?).map_err(|e| usage(anyhow!("{}: {e}", path.display())))
            }
            None => Ok(TheoryInstance {
                family: self.family,
                alpha: self.alpha,
                beta: self.beta,
                nu_star: self.nu_star,
                means: self.means.clone().unwrap_or_default(),
                noise: self.noise,
                envelope_sign: self.sign,
                horizon: self.horizon,
                ..TheoryInstance::default()
            }),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub algo: Algo,
    #[command(flatten)]
    pub population: InstanceArgs,
    /// Failure probability for the adversarial construction.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: u64,
    /// Budgets, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Arms for sha, sha_inf and uniform.
    #[arg(long, default_value_t = 64)]
    pub n: u64,
    #[arg(long = "R", default_value_t = 81)]
    pub max_resource: u64,
    #[arg(long, default_value_t = 3.0)]
    pub eta: f64,
    /// Restrict hyperband to one bracket.
    #[arg(long = "only-bracket")]
    pub only_bracket: Option<u32>,
    /// Write per-trial rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    pub algo: Algo,
    pub instance: TheoryInstance,
    pub delta: f64,
    pub trials: u64,
    pub budgets: Vec<u64>,
    pub seed: u64,
    pub n: u64,
    pub max_resource: u64,
    pub eta: f64,
    pub only_bracket: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub algo: Algo,
    pub budget: u64,
    pub trial: u64,
    pub instance_seed: u64,
    pub consumed: u64,
    pub regret: Option<f64>,
    pub arm_id: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub budget: u64,
    pub trials: u64,
    pub completed: u64,
    pub mean_regret: Option<f64>,
    pub min_regret: Option<f64>,
    pub max_regret: Option<f64>,
    pub mean_consumed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResults {
    pub rows: Vec<SimRow>,
    pub summary: Vec<SimSummary>,
}

impl SimulateArgs {
    pub fn setup(&self) -> Result<SimSetup, CliError> {
        let instance = self.population.instance()?;
        Ok(SimSetup {
            algo: self.algo,
            instance,
            delta: self.delta,
            trials: self.trials,
            budgets: self.budgets.clone(),
            seed: self.seed,
            n: self.n,
            max_resource: self.max_resource,
            eta: self.eta,
            only_bracket: self.only_bracket,
        })
    }
}

fn check(setup: &SimSetup) -> Result<(), CliError> {
    let inst = &setup.instance;
    if inst.family == Family::Adversarial {
        if !matches!(setup.algo, Algo::Uniform | Algo::Random | Algo::Sha) {
            return Err(usage(anyhow!(
                "the adversarial family has a fixed set of n arms; use uniform, random or sha"
            )));
        }
    } else {
        inst.validate().map_err(usage)?;
    }
    if matches!(setup.algo, Algo::Sha | Algo::ShaInf | Algo::Uniform) && setup.n == 0 {
        return Err(usage(anyhow!("--n must be positive")));
    }
    if setup.algo == Algo::Hyperband {
        let mut p = HyperbandParams::new(setup.max_resource).eta(setup.eta);
        p.only_bracket = setup.only_bracket;
        p.validate().map_err(usage)?;
    }
    Ok(())
}

/// Run every (trial, budget) pair. Trial `t` uses the same population for
/// all budgets.
pub fn simulate(setup: &SimSetup) -> Result<SimResults, CliError> {
    check(setup)?;
    let mut master = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut rows = Vec::new();
    for trial in 0..setup.trials {
        let instance_seed = child_seed(&mut master);
        for &budget in &setup.budgets {
            rows.push(one_trial(setup, trial, instance_seed, budget)?);
        }
    }
    let summary = setup
        .budgets
        .iter()
        .map(|&b| summarize(b, rows.iter().filter(|r| r.budget == b)))
        .collect();
    Ok(SimResults { rows, summary })
}

fn summarize<'a>(budget: u64, rows: impl Iterator<Item = &'a SimRow>) -> SimSummary {
    let rows: Vec<&SimRow> = rows.collect();
    let regrets: Vec<f64> = rows.iter().filter_map(|r| r.regret).collect();
    let n = regrets.len();
    SimSummary {
        budget,
        trials: rows.len() as u64,
        completed: n as u64,
        mean_regret: (n > 0).then(|| regrets.iter().sum::<f64>() / n as f64),
        min_regret: regrets.iter().copied().reduce(f64::min),
        max_regret: regrets.iter().copied().reduce(f64::max),
        mean_consumed: if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.consumed as f64).sum::<f64>() / rows.len() as f64
        },
    }
}

fn arms(n: u64) -> Vec<ArmState> {
    (0..n).map(ArmState::synthetic).collect()
}

fn one_trial(setup: &SimSetup, trial: u64, instance_seed: u64, budget: u64) -> Result<SimRow, CliError> {
    let oracle = if setup.instance.family == Family::Adversarial {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
        let adv = make_adversarial_instance(
            setup.n as usize,
            setup.delta,
            setup.instance.alpha,
            setup.instance.beta,
            &mut rng,
        )
        .map_err(usage)?;
        SimulatedOracle::adversarial(&adv)
    } else {
        SimulatedOracle::new(setup.instance.clone().with_seed(instance_seed)).map_err(usage)?
    };
    let ledger = BudgetLedger::with_cap(budget);
    let log = TrialLog::disabled();
    let ev = Evaluator::new(&oracle, &ledger, &log);
    let r = setup.max_resource;

    let picked: Result<Option<u64>, String> = match setup.algo {
        Algo::Hyperband => {
            let mut p = HyperbandParams::new(r).eta(setup.eta);
            p.outer_loops = None;
            p.only_bracket = setup.only_bracket;
            hyperband_practical(&p, &mut SyntheticArms, &ev)
                .map(|run| run.incumbent.map(|i| i.arm.id))
                .map_err(|e| e.to_string())
        }
        Algo::HyperbandInf => hyperband_infinite(&mut SyntheticArms, 62, &ev, RoundIncumbent::default())
            .map(|run| run.trajectory.last().map(|p| p.arm_id))
            .map_err(|e| e.to_string()),
        Algo::Sha => sha_finite_theoretical(arms(setup.n), budget, r, setup.eta, &ev, RungTag::default())
            .map(|res| Some(res.best_arm.id))
            .map_err(|e| e.to_string()),
        Algo::ShaInf => sha_infinite(arms(setup.n), budget, &ev, RungTag::default())
            .map(|res| Some(res.best_arm.id))
            .map_err(|e| e.to_string()),
        Algo::Uniform => uniform_allocation(arms(setup.n), budget, setup.instance.horizon, &ev)
            .map(|res| Some(res.best_arm.id))
            .map_err(|e| e.to_string()),
        Algo::Random => {
            let n = if setup.instance.family == Family::Adversarial {
                setup.n.min(budget / r)
            } else {
                budget / r
            };
            if n == 0 {
                Err(format!("budget {budget} is below one evaluation at R = {r}"))
            } else {
                random_search(arms(n), r, &ev)
                    .map(|res| Some(res.best_arm.id))
                    .map_err(|e| e.to_string())
            }
        }
    };
    let (arm_id, error) = match picked {
        Ok(id) => (id, None),
        Err(e) => (None, Some(e)),
    };
    Ok(SimRow {
        algo: setup.algo,
        budget,
        trial,
        instance_seed,
        consumed: ledger.consumed(),
        regret: arm_id.and_then(|id| oracle.regret(id)),
        arm_id,
        error,
    })
}

pub fn render(res: &SimResults) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>12} {:>7} {:>10} {:>12} {:>12} {:>12} {:>14}",
        "budget", "trials", "completed", "mean", "min", "max", "mean consumed"
    );
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    for s in &res.summary {
        let _ = writeln!(
            out,
            "{:>12} {:>7} {:>10} {:>12} {:>12} {:>12} {:>14.1}",
            s.budget,
            s.trials,
            s.completed,
            f(s.mean_regret),
            f(s.min_regret),
            f(s.max_regret),
            s.mean_consumed
        );
    }
    out
}

pub fn write_csv(path: &PathBuf, rows: &[SimRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: &SimulateArgs) -> Result<Outcome, CliError> {
    let setup = a.setup()?;
    let res = simulate(&setup)?;
    if let Some(path) = &a.csv {
        write_csv(path, &res.rows).map_err(crate::failed)?;
    }
    if a.json {
        crate::emit(&(serde_json::to_string_pretty(&res).expect("results serialize") + "\n"));
    } else {
        crate::emit(&render(&res));
    }
    Ok(Outcome::Done)
}
