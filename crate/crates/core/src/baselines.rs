//! Non-adaptive comparators: uniform allocation and random search.

use thiserror::Error;

use crate::evaluator::{rank, ArmState, EvalError, Evaluator, RungTag};
use crate::sha::{RungOutcome, ShaResult};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("budget {budget} gives less than one unit to each of {n} arms")]
    BudgetBelowOneUnit { budget: u64, n: usize },
    #[error("no arms to evaluate")]
    NoArms,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Level used by uniform allocation: `min(⌊B/n⌋, R)`.
pub fn uniform_level(n: u64, budget: u64, max_resource: Option<u64>) -> u64 {
    let j = budget / n.max(1);
    max_resource.map_or(j, |r| j.min(r))
}

/// Train every arm to `min(⌊B/n⌋, R)` and return the best.
pub fn uniform_allocation(
    arms: Vec<ArmState>,
    budget: u64,
    max_resource: Option<u64>,
    ev: &Evaluator<'_>,
) -> Result<ShaResult, BaselineError> {
    if arms.is_empty() {
        return Err(BaselineError::NoArms);
    }
    let n = arms.len();
    let level = uniform_level(n as u64, budget, max_resource);
    if level == 0 {
        return Err(BaselineError::BudgetBelowOneUnit { budget, n });
    }
    single_rung(arms, level, ev)
}

/// Train every arm to `R` and return the best.
pub fn random_search(arms: Vec<ArmState>, max_resource: u64, ev: &Evaluator<'_>) -> Result<ShaResult, BaselineError> {
    if arms.is_empty() {
        return Err(BaselineError::NoArms);
    }
    if max_resource == 0 {
        return Err(BaselineError::BudgetBelowOneUnit {
            budget: 0,
            n: arms.len(),
        });
    }
    single_rung(arms, max_resource, ev)
}

fn single_rung(mut arms: Vec<ArmState>, level: u64, ev: &Evaluator<'_>) -> Result<ShaResult, BaselineError> {
    let charged: u64 = arms
        .iter()
        .map(|a| ev.accounting.charge(level, a.max_observed_resource))
        .sum();
    let losses = ev.evaluate_rung(&mut arms, level, RungTag::default())?;
    let best = rank(&arms, &losses)[0];
    let ids: Vec<u64> = arms.iter().map(|a| a.id).collect();
    Ok(ShaResult {
        best_arm: arms[best].clone(),
        best_loss: losses[best],
        loss_resource_level: level,
        ledger_consumed: charged,
        rungs: vec![RungOutcome {
            resource: level,
            evaluated: ids,
            kept: vec![arms[best].id],
        }],
        arms,
    })
}
