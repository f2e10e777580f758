use std::fmt::Write as _;

use clap::Args;
use hyperband_core::hyperband::{compute_brackets, HyperbandParams};
use serde::{Deserialize, Serialize};

use crate::{usage, CliError, Outcome, ShapeArgs};

#[derive(Debug, Clone, Args)]
pub struct BracketsArgs {
    /// Maximum resource per configuration.
    #[arg(value_name = "R")]
    pub max_resource: u64,
    /// Downsampling rate.
    #[arg(value_name = "ETA", default_value_t = 3.0)]
    pub eta: f64,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketTable {
    pub max_resource: u64,
    pub eta: f64,
    pub s_max: u32,
    /// Budget of one bracket.
    pub bracket_budget: u64,
    pub brackets: Vec<BracketColumn>,
    /// `Σ n_i r_i` over every bracket.
    pub total_cost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketColumn {
    pub s: u32,
    pub n: u64,
    pub r: f64,
    pub rungs: Vec<RungRow>,
    pub cost: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RungRow {
    pub i: u32,
    pub n_i: u64,
    pub r_i: u64,
}

pub fn table(params: &HyperbandParams) -> Result<BracketTable, CliError> {
    let plans = compute_brackets(params).map_err(usage)?;
    let brackets: Vec<BracketColumn> = plans
        .iter()
        .map(|p| BracketColumn {
            s: p.s,
            n: p.n,
            r: p.r,
            rungs: p
                .schedule
                .entries
                .iter()
                .map(|r| RungRow {
                    i: r.rung_i,
                    n_i: r.arms,
                    r_i: r.resource,
                })
                .collect(),
            cost: p.schedule.full_cost(),
        })
        .collect();
    Ok(BracketTable {
        max_resource: params.max_resource,
        eta: params.eta,
        s_max: params.s_max(),
        bracket_budget: params.bracket_budget(),
        total_cost: brackets.iter().map(|b| b.cost).sum(),
        brackets,
    })
}

/// One column per bracket, one row per rung.
pub fn render(t: &BracketTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "R = {}, eta = {}, s_max = {}, B = {}", t.max_resource, t.eta, t.s_max, t.bracket_budget);
    let depth = t.brackets.iter().map(|b| b.rungs.len()).max().unwrap_or(0);
    let _ = write!(out, "{:>4}", "");
    for b in &t.brackets {
        let _ = write!(out, " | {:^17}", format!("s = {}", b.s));
    }
    out.push('\n');
    let _ = write!(out, "{:>4}", "i");
    for _ in &t.brackets {
        let _ = write!(out, " | {:>8} {:>8}", "n_i", "r_i");
    }
    out.push('\n');
    for i in 0..depth {
        let _ = write!(out, "{i:>4}");
        for b in &t.brackets {
            match b.rungs.get(i) {
                Some(r) => {
                    let _ = write!(out, " | {:>8} {:>8}", r.n_i, r.r_i);
                }
                None => {
                    let _ = write!(out, " | {:>17}", "");
                }
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "{:>4}", "cost");
    for b in &t.brackets {
        let _ = write!(out, " | {:>17}", b.cost);
    }
    out.push('\n');
    let _ = writeln!(out, "total cost: {}", t.total_cost);
    out
}

pub fn run(a: &BracketsArgs) -> Result<Outcome, CliError> {
    let mut params = HyperbandParams::new(a.max_resource).eta(a.eta);
    params.n_max = a.shape.n_max(a.max_resource);
    params.n_min = a.shape.n_min;
    let t = table(&params)?;
    if a.json {
        crate::emit(&(serde_json::to_string_pretty(&t).expect("table serializes") + "\n"));
    } else {
        crate::emit(&render(&t));
    }
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trips() {
        let t = table(&HyperbandParams::new(81)).unwrap();
        let back: BracketTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.brackets[1].n, 34);
    }

    #[test]
    fn render_has_one_column_per_bracket() {
        let text = render(&table(&HyperbandParams::new(81)).unwrap());
        assert_eq!(text.matches("s = ").count(), 5);
        assert!(text.contains("total cost: 1902"));
    }
}
