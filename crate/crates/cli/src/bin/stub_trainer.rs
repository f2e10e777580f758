//! Test trainer for `hyperband tune`.
//!
//! Reads one request line from stdin and answers according to its mode:
//!
//! - `sum`: loss is the sum of the configuration's parameters normalized to
//!   `[0, 1]` by the space given with `--space`, plus `1/resource`.
//! - `fail`: exits with status 1.
//! - `garbage`: prints a line that is not JSON.
//! - `nan`: prints `{"loss": NaN}`.
//! - `sleep`: sleeps for `--sleep-secs` before answering like `sum`.
//! - `mixed`: picks `sum`, `fail`, `garbage` or `sleep` by `arm_id % 4`.
//!
//! In `sum` mode the last level reached is kept in `progress` inside the
//! request's checkpoint directory.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, ValueEnum};
use hyperband_core::evaluator::TrainerRequest;
use hyperband_core::search_space::{parse_space, Bound, ParamKind, ParamValue, Scale, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Sum,
    Fail,
    Garbage,
    Nan,
    Sleep,
    Mixed,
}

#[derive(Debug, Parser)]
struct Args {
    #[arg(long, value_enum, default_value = "sum")]
    mode: Mode,
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long = "sleep-secs", default_value_t = 5.0)]
    sleep_secs: f64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match answer(&args) {
        Ok(Some(line)) => {
            println!("{line}");
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("stub trainer: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn answer(args: &Args) -> anyhow::Result<Option<String>> {
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line)?;
    let req: TrainerRequest = serde_json::from_str(line.trim()).context("parsing request")?;
    let mode = match args.mode {
        Mode::Mixed => [Mode::Sum, Mode::Fail, Mode::Garbage, Mode::Sleep][(req.arm_id % 4) as usize],
        m => m,
    };
    match mode {
        Mode::Fail => {
            eprintln!("stub trainer: failing on purpose");
            Ok(None)
        }
        Mode::Garbage => Ok(Some("loss is about 0.3".into())),
        Mode::Nan => Ok(Some(r#"{"loss": NaN}"#.into())),
        Mode::Sleep => {
            std::thread::sleep(Duration::from_secs_f64(args.sleep_secs));
            sum(args, &req).map(Some)
        }
        Mode::Sum | Mode::Mixed => sum(args, &req).map(Some),
    }
}

fn sum(args: &Args, req: &TrainerRequest) -> anyhow::Result<String> {
    let mut loss = 1.0 / req.resource.max(1) as f64;
    if let (Some(path), Some(config)) = (&args.space, &req.config) {
        let space = parse_space(&std::fs::read_to_string(path)?)?;
        for (name, value) in config.iter() {
            loss += normalized(&space, config, name, value)?;
        }
    }
    std::fs::create_dir_all(&req.checkpoint_dir)?;
    std::fs::write(req.checkpoint_dir.join("progress"), req.resource.to_string())?;
    Ok(format!("{{\"loss\": {loss}}}"))
}

/// Position of a value within its range, on the parameter's scale.
fn normalized(
    space: &SearchSpace,
    config: &hyperband_core::search_space::Configuration,
    name: &str,
    value: &ParamValue,
) -> anyhow::Result<f64> {
    let spec = space.param(name).ok_or_else(|| anyhow!("unknown parameter {name}"))?;
    if spec.kind == ParamKind::Categorical {
        let label = value.as_label().unwrap_or_default();
        let idx = spec.choices.iter().position(|c| c == label).unwrap_or(0);
        return Ok(idx as f64 / spec.choices.len().saturating_sub(1).max(1) as f64);
    }
    let bound = |b: &Option<Bound>| -> anyhow::Result<f64> {
        match b {
            Some(Bound::Literal(v)) => Ok(*v),
            Some(Bound::Ref(other)) => config
                .get(other)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| anyhow!("{name}: bound {other} unresolved")),
            None => Err(anyhow!("{name} has no bounds")),
        }
    };
    let (lo, hi) = (bound(&spec.lower)?, bound(&spec.upper)?);
    let v = value.as_f64().ok_or_else(|| anyhow!("{name} is not numeric"))?;
    let t = |x: f64| if spec.scale == Scale::Log { x.ln() } else { x };
    if hi <= lo {
        return Ok(0.0);
    }
    Ok(((t(v) - t(lo)) / (t(hi) - t(lo))).clamp(0.0, 1.0))
}
