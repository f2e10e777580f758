//! SuccessiveHalving.
//!
//! Three variants share the evaluator's rung contract:
//!
//! - [`sha_practical`] runs a precomputed [`RungSchedule`] and keeps
//!   `⌊n_i/η⌋` arms after each rung; this is the inner loop of Hyperband.
//! - [`sha_infinite`] splits a budget of pulls evenly across `⌈log2 n⌉`
//!   halving rounds, for sequences without a maximum resource.
//! - [`sha_finite_theoretical`] picks the number of rungs from the budget
//!   and trains survivors up to a maximum resource `R`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{rank, Accounting, ArmState, ArmStatus, EvalError, Evaluator, Loss, RungTag};
use crate::theory_oracles::ceil_log2;

#[derive(Debug, Error)]
pub enum ShaError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("expected {expected} arms, got {got}")]
    ArmCount { expected: u64, got: usize },
    #[error("budget {budget} is too small: {detail}")]
    BudgetTooSmall { budget: u64, detail: String },
    #[error("no admissible number of rungs for n = {n}, B = {budget}, R = {max_resource}")]
    NoAdmissibleRungs { n: u64, budget: u64, max_resource: u64 },
    #[error("every arm failed at resource {resource}")]
    AllArmsFailed { resource: u64, consumed: u64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl ShaError {
    /// Whether the run stopped because the ledger cap was reached.
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(self, ShaError::Eval(EvalError::Budget(_)))
    }

    /// Units charged before the error, when known.
    pub fn consumed(&self) -> Option<u64> {
        match self {
            ShaError::AllArmsFailed { consumed, .. } => Some(*consumed),
            _ => None,
        }
    }
}

/// `floor` that forgives float error just below an integer
/// (`81 · 3^-4 · 3^2` must give 9, not 8).
pub(crate) fn tolerant_floor(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest.max(0.0) as u64
    } else {
        x.floor().max(0.0) as u64
    }
}

/// One rung of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub rung_i: u32,
    /// Arms evaluated at this rung.
    pub arms: u64,
    /// Cumulative resource level.
    pub resource: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RungSchedule {
    pub entries: Vec<Rung>,
}

impl RungSchedule {
    /// `Σ n_i r_i`: cost under full-level accounting.
    pub fn full_cost(&self) -> u64 {
        self.entries.iter().map(|r| r.arms * r.resource).sum()
    }

    pub fn first(&self) -> &Rung {
        &self.entries[0]
    }

    pub fn last(&self) -> &Rung {
        self.entries.last().expect("schedules are non-empty")
    }

    /// Total evaluations if no arm fails.
    pub fn evaluations(&self) -> u64 {
        self.entries.iter().map(|r| r.arms).sum()
    }
}

/// Rungs `i = 0..=s` with `n_i = ⌊n η^{-i}⌋` and `r_i = ⌊r η^i⌋`.
pub fn rung_schedule(n: u64, r: f64, s: u32, eta: f64) -> Result<RungSchedule, ShaError> {
    build_schedule(n, r, s, eta, None)
}

/// As [`rung_schedule`], with the last rung's resource set to exactly
/// `max_resource` (a Hyperband bracket always trains one arm to `R`).
pub fn rung_schedule_to(n: u64, r: f64, s: u32, eta: f64, max_resource: u64) -> Result<RungSchedule, ShaError> {
    build_schedule(n, r, s, eta, Some(max_resource))
}

fn build_schedule(n: u64, r: f64, s: u32, eta: f64, clamp: Option<u64>) -> Result<RungSchedule, ShaError> {
    if !(eta >= 2.0 && eta.is_finite()) {
        return Err(ShaError::Schedule(format!("eta must be at least 2, got {eta}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(ShaError::Schedule(format!("initial resource must be positive, got {r}")));
    }
    let mut entries = Vec::with_capacity(s as usize + 1);
    for i in 0..=s {
        let arms = tolerant_floor(n as f64 * eta.powi(-(i as i32)));
        let mut resource = tolerant_floor(r * eta.powi(i as i32));
        if i == s {
            if let Some(max) = clamp {
                resource = max;
            }
        }
        if arms == 0 {
            return Err(ShaError::Schedule(format!("rung {i} would have no arms (n = {n}, s = {s})")));
        }
        if resource == 0 {
            return Err(ShaError::Schedule(format!("rung {i} would have zero resource (r = {r})")));
        }
        if let Some(prev) = entries.last() {
            let prev: &Rung = prev;
            if arms >= prev.arms || resource <= prev.resource {
                return Err(ShaError::Schedule(format!(
                    "rung {i} does not shrink arms and grow resource ({} → {arms}, {} → {resource})",
                    prev.arms, prev.resource
                )));
            }
        }
        entries.push(Rung {
            rung_i: i,
            arms,
            resource,
        });
    }
    Ok(RungSchedule { entries })
}

/// Which evaluation a bracket reports as its best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncumbentPolicy {
    /// Smallest loss among evaluations at the highest level reached.
    #[default]
    MaxResource,
    /// Smallest loss seen at any level. Written `paper` on the command line.
    #[serde(rename = "paper", alias = "any_level")]
    AnyLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungOutcome {
    pub resource: u64,
    pub evaluated: Vec<u64>,
    pub kept: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShaResult {
    pub best_arm: ArmState,
    pub best_loss: Loss,
    pub loss_resource_level: u64,
    /// Units charged by this run.
    pub ledger_consumed: u64,
    pub rungs: Vec<RungOutcome>,
    /// Every arm's final state, in input order.
    pub arms: Vec<ArmState>,
}

/// Best (loss, arm index, level) seen so far; ties go to the smaller arm id.
#[derive(Default)]
struct BestSeen {
    best: Option<(Loss, u64, usize, u64)>,
}

impl BestSeen {
    fn offer(&mut self, loss: Loss, arm_id: u64, idx: usize, level: u64) {
        if loss.is_failed() {
            return;
        }
        let better = match self.best {
            None => true,
            Some((l, id, _, _)) => loss.total_cmp(&l).then(arm_id.cmp(&id)).is_lt(),
        };
        if better {
            self.best = Some((loss, arm_id, idx, level));
        }
    }
}

/// Run a schedule: evaluate survivors at each `r_i`, keep the best `⌊n_i/η⌋`
/// (exactly one after the last rung). Failed arms never advance.
pub fn sha_practical(
    arms: Vec<ArmState>,
    schedule: &RungSchedule,
    eta: f64,
    ev: &Evaluator<'_>,
    policy: IncumbentPolicy,
    tag: RungTag,
) -> Result<ShaResult, ShaError> {
    let first = schedule.first();
    if arms.len() as u64 != first.arms {
        return Err(ShaError::ArmCount {
            expected: first.arms,
            got: arms.len(),
        });
    }
    let mut arms = arms;
    let mut survivors: Vec<usize> = (0..arms.len()).collect();
    let mut consumed = 0;
    let mut rungs = Vec::with_capacity(schedule.entries.len());
    let mut seen = BestSeen::default();
    let mut final_pick = None;
    let last = schedule.entries.len() - 1;

    for (i, rung) in schedule.entries.iter().enumerate() {
        let losses = run_rung(&mut arms, &survivors, rung.resource, ev, RungTag {
            rung_i: rung.rung_i,
            ..tag
        }, &mut consumed)?;
        for (&idx, &loss) in survivors.iter().zip(&losses) {
            seen.offer(loss, arms[idx].id, idx, rung.resource);
        }
        let keep = if i == last {
            1
        } else {
            tolerant_floor(survivors.len() as f64 / eta).max(1) as usize
        };
        let kept = select(&mut arms, &survivors, &losses, keep);
        rungs.push(RungOutcome {
            resource: rung.resource,
            evaluated: survivors.iter().map(|&i| arms[i].id).collect(),
            kept: kept.iter().map(|&i| arms[i].id).collect(),
        });
        if i == last {
            final_pick = kept.first().map(|&idx| {
                let loss = arms[idx].loss_at[&rung.resource];
                (idx, loss, rung.resource)
            });
        }
        survivors = kept;
    }

    let (idx, best_loss, level) = match policy {
        IncumbentPolicy::MaxResource => final_pick,
        IncumbentPolicy::AnyLevel => seen.best.map(|(l, _, idx, level)| (idx, l, level)),
    }
    .expect("a rung with a finite loss always yields a pick");
    Ok(ShaResult {
        best_arm: arms[idx].clone(),
        best_loss,
        loss_resource_level: level,
        ledger_consumed: consumed,
        rungs,
        arms,
    })
}

/// Evaluate `arms[idx]` for each idx in `members`; returns losses aligned
/// with `members` and adds the units charged to `consumed`.
fn run_rung(
    arms: &mut [ArmState],
    members: &[usize],
    resource: u64,
    ev: &Evaluator<'_>,
    tag: RungTag,
    consumed: &mut u64,
) -> Result<Vec<Loss>, ShaError> {
    let mut batch: Vec<ArmState> = members
        .iter()
        .map(|&i| std::mem::replace(&mut arms[i], ArmState::synthetic(0)))
        .collect();
    let charged: u64 = batch
        .iter()
        .map(|a| ev.accounting.charge(resource, a.max_observed_resource))
        .sum();
    let result = ev.evaluate_rung(&mut batch, resource, tag);
    for (&i, arm) in members.iter().zip(batch) {
        arms[i] = arm;
    }
    match result {
        Ok(losses) => {
            *consumed += charged;
            Ok(losses)
        }
        Err(EvalError::AllArmsFailed { resource, .. }) => {
            *consumed += charged;
            Err(ShaError::AllArmsFailed {
                resource,
                consumed: *consumed,
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Keep the best `keep` non-failed members; mark the rest eliminated.
fn select(arms: &mut [ArmState], members: &[usize], losses: &[Loss], keep: usize) -> Vec<usize> {
    let subset: Vec<ArmState> = members.iter().map(|&i| arms[i].clone()).collect();
    let order = rank(&subset, losses);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| !losses[k].is_failed())
        .take(keep)
        .map(|k| members[k])
        .collect();
    for &i in members {
        if !kept.contains(&i) && arms[i].status == ArmStatus::Active {
            arms[i].status = ArmStatus::Eliminated;
        }
    }
    kept
}

/// Infinite-horizon SuccessiveHalving on `n ≥ 2` arms with a budget of `B`
/// pulls.
///
/// Round `k` pulls each surviving arm `⌊B / (|S_k| ⌈log2 n⌉)⌋` more times and
/// keeps the best half, ranked by each arm's loss at its cumulative pull
/// count. Charges are per pull (incremental), so the total never exceeds
/// `B`. The reported loss is the winner's loss at level
/// `⌊(B/2)/⌈log2 n⌉⌋`, recalled from the oracle when the winner has already
/// passed that level.
pub fn sha_infinite(arms: Vec<ArmState>, budget: u64, ev: &Evaluator<'_>, tag: RungTag) -> Result<ShaResult, ShaError> {
    let n = arms.len() as u64;
    if n < 2 {
        return Err(ShaError::ArmCount { expected: 2, got: arms.len() });
    }
    let rounds = ceil_log2(n) as u64;
    if budget < n * rounds {
        return Err(ShaError::BudgetTooSmall {
            budget,
            detail: format!("need at least n⌈log2 n⌉ = {} for one pull per arm per round", n * rounds),
        });
    }
    let ev = ev.accounting(Accounting::Delta);
    let mut arms = arms;
    let mut survivors: Vec<usize> = (0..arms.len()).collect();
    let mut consumed = 0;
    let mut rungs = Vec::with_capacity(rounds as usize);

    for k in 0..rounds {
        let pulls = budget / (survivors.len() as u64 * rounds);
        let level = arms[survivors[0]].max_observed_resource + pulls;
        let losses = run_rung(&mut arms, &survivors, level, &ev, RungTag {
            rung_i: k as u32,
            ..tag
        }, &mut consumed)?;
        let keep = (survivors.len() / 2).max(1);
        let kept = select(&mut arms, &survivors, &losses, keep);
        rungs.push(RungOutcome {
            resource: level,
            evaluated: survivors.iter().map(|&i| arms[i].id).collect(),
            kept: kept.iter().map(|&i| arms[i].id).collect(),
        });
        survivors = kept;
    }

    let winner = survivors[0];
    let output_level = (budget / 2) / rounds;
    let observed = arms[winner].max_observed_resource;
    let (best_loss, loss_resource_level) = if let Some(&loss) = arms[winner].loss_at.get(&output_level) {
        (loss, output_level)
    } else if observed > output_level {
        match ev.oracle.recall(&arms[winner], output_level) {
            Some(v) if v.is_finite() => (Loss::Finite(v), output_level),
            Some(_) => (Loss::Failed, output_level),
            // Backends that cannot look back report the latest observation.
            None => (arms[winner].last_loss().expect("winner was evaluated"), observed),
        }
    } else {
        let losses = run_rung(&mut arms, &[winner], output_level, &ev, RungTag {
            rung_i: rounds as u32,
            ..tag
        }, &mut consumed)?;
        (losses[0], output_level)
    };
    Ok(ShaResult {
        best_arm: arms[winner].clone(),
        best_loss,
        loss_resource_level,
        ledger_consumed: consumed,
        rungs,
        arms,
    })
}

/// `s = min{t : n R (t+1) η^{-t} ≤ B, η^t ≤ min(R, n)}`, if any.
pub fn finite_rung_count(n: u64, budget: u64, max_resource: u64, eta: f64) -> Option<u32> {
    if n == 0 || max_resource == 0 {
        return None;
    }
    let cap = n.min(max_resource) as f64;
    let slack = 1.0 + 1e-12;
    (0u32..)
        .take_while(|&t| eta.powi(t as i32) <= cap * slack)
        .find(|&t| {
            let cost = n as f64 * max_resource as f64 * (t as f64 + 1.0) * eta.powi(-(t as i32));
            cost <= budget as f64 * slack
        })
}

/// Finite-horizon SuccessiveHalving: `s` from [`finite_rung_count`], rungs
/// `n_k = ⌊n η^{-k}⌋` at `r_k = ⌊R η^{k-s}⌋`, winner is the best at `R`.
pub fn sha_finite_theoretical(
    arms: Vec<ArmState>,
    budget: u64,
    max_resource: u64,
    eta: f64,
    ev: &Evaluator<'_>,
    tag: RungTag,
) -> Result<ShaResult, ShaError> {
    let n = arms.len() as u64;
    if !(eta >= 2.0) {
        return Err(ShaError::Schedule(format!("eta must be at least 2, got {eta}")));
    }
    let s = finite_rung_count(n, budget, max_resource, eta).ok_or(ShaError::NoAdmissibleRungs {
        n,
        budget,
        max_resource,
    })?;
    let schedule = finite_schedule(n, s, max_resource, eta)?;
    let mut arms = arms;
    let mut survivors: Vec<usize> = (0..arms.len()).collect();
    let mut consumed = 0;
    let mut rungs = Vec::with_capacity(schedule.entries.len());
    for (k, rung) in schedule.entries.iter().enumerate() {
        let losses = run_rung(&mut arms, &survivors, rung.resource, ev, RungTag {
            rung_i: rung.rung_i,
            ..tag
        }, &mut consumed)?;
        let keep = tolerant_floor(n as f64 * eta.powi(-(k as i32 + 1))).max(1) as usize;
        let kept = select(&mut arms, &survivors, &losses, keep);
        rungs.push(RungOutcome {
            resource: rung.resource,
            evaluated: survivors.iter().map(|&i| arms[i].id).collect(),
            kept: kept.iter().map(|&i| arms[i].id).collect(),
        });
        survivors = kept;
    }
    // Survivors of the last rung are ranked by their loss at R.
    let winner = survivors[0];
    let best_loss = arms[winner].loss_at[&max_resource];
    Ok(ShaResult {
        best_arm: arms[winner].clone(),
        best_loss,
        loss_resource_level: max_resource,
        ledger_consumed: consumed,
        rungs,
        arms,
    })
}

/// Rungs of finite-horizon SuccessiveHalving with `s` halvings.
pub fn finite_schedule(n: u64, s: u32, max_resource: u64, eta: f64) -> Result<RungSchedule, ShaError> {
    let entries = (0..=s)
        .map(|k| Rung {
            rung_i: k,
            arms: tolerant_floor(n as f64 * eta.powi(-(k as i32))),
            resource: tolerant_floor(max_resource as f64 * eta.powi(k as i32 - s as i32)),
        })
        .collect::<Vec<_>>();
    if entries.iter().any(|r| r.arms == 0 || r.resource == 0) {
        return Err(ShaError::Schedule(format!("s = {s} leaves an empty rung for n = {n}, R = {max_resource}")));
    }
    Ok(RungSchedule { entries })
}
