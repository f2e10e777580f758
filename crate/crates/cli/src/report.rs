use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use hyperband_core::evaluator::{parse_log, IncumbentRecord, LogLine, TrialStatus};
use serde::{Deserialize, Serialize};

use crate::{read_file, CliError, Outcome};

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Trial log written by `tune`.
    pub log: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketUsage {
    pub round: Option<u32>,
    pub bracket_s: Option<u32>,
    pub trials: u64,
    pub charged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: u64,
    pub completed: u64,
    pub failed: u64,
    pub timed_out: u64,
    pub total_charged: u64,
    pub brackets: Vec<BracketUsage>,
    pub trajectory: Vec<IncumbentRecord>,
    pub best: Option<IncumbentRecord>,
    /// Line numbers (1-based) and messages of lines that did not parse.
    pub corrupt_lines: Vec<(usize, String)>,
}

pub fn summarize(text: &str) -> Summary {
    let (lines, corrupt_lines) = parse_log(text);
    let mut s = Summary {
        trials: 0,
        completed: 0,
        failed: 0,
        timed_out: 0,
        total_charged: 0,
        brackets: Vec::new(),
        trajectory: Vec::new(),
        best: None,
        corrupt_lines,
    };
    let mut usage: BTreeMap<(Option<u32>, Option<u32>), (u64, u64)> = BTreeMap::new();
    for line in lines {
        match line {
            LogLine::Trial(t) => {
                s.trials += 1;
                match t.status {
                    TrialStatus::Completed => s.completed += 1,
                    TrialStatus::Failed => s.failed += 1,
                    TrialStatus::Timeout => s.timed_out += 1,
                }
                s.total_charged += t.charged;
                // Larger bracket indices run first, so sort them first.
                let slot = usage.entry((t.round, t.bracket_s.map(|b| u32::MAX - b))).or_default();
                slot.0 += 1;
                slot.1 += t.charged;
            }
            LogLine::Incumbent(r) => s.trajectory.push(r),
        }
    }
    s.brackets = usage
        .into_iter()
        .map(|((round, key), (trials, charged))| BracketUsage {
            round,
            bracket_s: key.map(|k| u32::MAX - k),
            trials,
            charged,
        })
        .collect();
    s.best = s
        .trajectory
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss))
        .cloned();
    s
}

pub fn render(s: &Summary) -> String {
    let mut out = String::new();
    if s.trials == 0 {
        out.push_str("no trials\n");
        return out;
    }
    let _ = writeln!(
        out,
        "{} trials ({} completed, {} failed, {} timed out), {} units charged",
        s.trials, s.completed, s.failed, s.timed_out, s.total_charged
    );
    out.push_str("\nper bracket:\n");
    for b in &s.brackets {
        let _ = writeln!(
            out,
            "  loop {:>3}  s = {:>3}  {:>6} trials  {:>10} units",
            fmt_opt(b.round),
            fmt_opt(b.bracket_s),
            b.trials,
            b.charged
        );
    }
    if !s.trajectory.is_empty() {
        out.push_str("\nincumbent trajectory:\n");
        for r in &s.trajectory {
            let _ = writeln!(
                out,
                "  {:>10} units  loss {:<12}  arm {:>6}  resource {}",
                r.ledger_consumed, r.loss, r.arm_id, r.resource
            );
        }
    }
    if let Some(best) = &s.best {
        let _ = writeln!(out, "\nbest: arm {} loss {} at resource {}", best.arm_id, best.loss, best.resource);
        if let Some(cfg) = &best.config {
            for (k, v) in cfg.iter() {
                let _ = writeln!(out, "  {k} = {v}");
            }
        }
    }
    out
}

fn fmt_opt(v: Option<u32>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

pub fn run(a: &ReportArgs) -> Result<Outcome, CliError> {
    let text = read_file(&a.log)?;
    let s = summarize(&text);
    for (line, err) in &s.corrupt_lines {
        eprintln!("warning: {}:{line}: skipped corrupt line: {err}", a.log.display());
    }
    if a.json {
        crate::emit(&(serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"));
    } else {
        crate::emit(&render(&s));
    }
    Ok(Outcome::Done)
}
