//! Hyperband: bracket planning and the outer loops.
//!
//! [`hyperband_practical`] is the finite-horizon loop used for tuning: each
//! bracket runs [`sha_practical`] on freshly sampled configurations, from the
//! most exploratory bracket (many arms, little resource each) down to plain
//! random search at the maximum resource. [`hyperband_infinite`] and
//! [`hyperband_finite_theoretical`] are the doubling-budget loops used by the
//! simulator experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{ArmState, Evaluator, IncumbentRecord, LogLine, Loss, RungTag, TrialLog};
use crate::search_space::SearchSpace;
use crate::sha::{
    finite_rung_count, rung_schedule_to, sha_finite_theoretical, sha_infinite, sha_practical, tolerant_floor,
    IncumbentPolicy, RungSchedule, ShaError, ShaResult,
};

#[derive(Debug, Error)]
pub enum HyperbandError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("no brackets between s = {high} and s = {low}")]
    EmptyBracketRange { high: u32, low: u32 },
    #[error("an unbounded number of outer loops needs a budget cap")]
    Unbounded,
    #[error("every bracket failed; last error: {0}")]
    AllBracketsFailed(ShaError),
    #[error(transparent)]
    Sha(#[from] ShaError),
    #[error("writing trial log: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbandParams {
    /// Maximum resource per configuration.
    pub max_resource: u64,
    pub eta: f64,
    /// Cap on the number of configurations in one bracket.
    pub n_max: Option<u64>,
    /// Skip brackets with fewer than this many configurations.
    pub n_min: Option<u64>,
    /// `None` repeats until the ledger cap is hit.
    pub outer_loops: Option<u64>,
    pub incumbent_policy: IncumbentPolicy,
    /// Run the brackets of one outer loop concurrently.
    pub parallel_brackets: bool,
    /// Run only this bracket in every loop.
    pub only_bracket: Option<u32>,
}

impl HyperbandParams {
    pub fn new(max_resource: u64) -> Self {
        Self {
            max_resource,
            eta: 3.0,
            n_max: None,
            n_min: None,
            outer_loops: Some(1),
            incumbent_policy: IncumbentPolicy::default(),
            parallel_brackets: false,
            only_bracket: None,
        }
    }

    pub fn eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<(), HyperbandError> {
        let bad = |m: String| Err(HyperbandError::Params(m));
        if self.max_resource == 0 {
            return bad("R must be at least 1".into());
        }
        if !(self.eta >= 2.0 && self.eta.is_finite()) {
            return bad(format!("eta must be at least 2, got {}", self.eta));
        }
        if self.n_max == Some(0) || self.n_min == Some(0) {
            return bad("n_max and n_min must be positive".into());
        }
        if let (Some(lo), Some(hi)) = (self.n_min, self.n_max) {
            if lo > hi {
                return bad(format!("n_min = {lo} exceeds n_max = {hi}"));
            }
        }
        if self.outer_loops == Some(0) {
            return bad("outer_loops must be positive".into());
        }
        Ok(())
    }

    /// Largest bracket index: `⌊log_η R⌋`, lowered to `⌊log_η n_max⌋` when set.
    pub fn s_max(&self) -> u32 {
        let s = floor_log(self.max_resource, self.eta);
        match self.n_max {
            Some(n) => s.min(floor_log(n, self.eta)),
            None => s,
        }
    }

    /// Smallest bracket index: `⌊log_η n_min⌋`, or 0.
    pub fn s_min(&self) -> u32 {
        self.n_min.map_or(0, |n| floor_log(n, self.eta))
    }

    /// Budget of one bracket, `(s_max + 1) R`.
    pub fn bracket_budget(&self) -> u64 {
        (self.s_max() as u64 + 1) * self.max_resource
    }
}

/// `⌊log_base x⌋` for `x ≥ 1`, exact at powers of the base.
pub fn floor_log(x: u64, base: f64) -> u32 {
    let mut s = 0;
    while base.powi(s as i32 + 1) <= x as f64 * (1.0 + 1e-12) {
        s += 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketPlan {
    pub s: u32,
    pub n: u64,
    pub r: f64,
    pub schedule: RungSchedule,
}

/// Brackets `s = s_max, …, s_min` with `n = ⌈(B/R) η^s / (s+1)⌉` and
/// `r = R η^{-s}`; the last rung of each trains one arm to `R`.
pub fn compute_brackets(params: &HyperbandParams) -> Result<Vec<BracketPlan>, HyperbandError> {
    params.validate()?;
    let (high, low) = (params.s_max(), params.s_min());
    if low > high {
        return Err(HyperbandError::EmptyBracketRange { high, low });
    }
    let budget = params.bracket_budget() as f64;
    let big_r = params.max_resource as f64;
    (low..=high)
        .rev()
        .map(|s| {
            let exact = budget / big_r * params.eta.powi(s as i32) / (s as f64 + 1.0);
            let n = ceil_tolerant(exact);
            let r = big_r * params.eta.powi(-(s as i32));
            let schedule = rung_schedule_to(n, r, s, params.eta, params.max_resource)?;
            Ok(BracketPlan { s, n, r, schedule })
        })
        .collect()
}

fn ceil_tolerant(x: f64) -> u64 {
    let f = tolerant_floor(x);
    if (f as f64) < x * (1.0 - 1e-12) {
        f + 1
    } else {
        f
    }
}

/// Supplies the arms of a bracket.
pub trait ArmSource {
    fn next_arm(&mut self, id: u64) -> ArmState;
}

/// Arms without a configuration; an oracle tells them apart by id.
#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticArms;

impl ArmSource for SyntheticArms {
    fn next_arm(&mut self, id: u64) -> ArmState {
        ArmState::synthetic(id)
    }
}

/// Arms whose configurations are drawn from a search space.
pub struct SampledArms<'s, R> {
    pub space: &'s SearchSpace,
    pub rng: R,
}

impl<'s, R: Rng> SampledArms<'s, R> {
    pub fn new(space: &'s SearchSpace, rng: R) -> Self {
        Self { space, rng }
    }
}

impl<R: Rng> ArmSource for SampledArms<'_, R> {
    fn next_arm(&mut self, id: u64) -> ArmState {
        ArmState::new(id, Some(self.space.sample_one(&mut self.rng)))
    }
}

fn draw(source: &mut dyn ArmSource, next_id: &mut u64, n: u64) -> Vec<ArmState> {
    (0..n)
        .map(|_| {
            let arm = source.next_arm(*next_id);
            *next_id += 1;
            arm
        })
        .collect()
}

/// Best configuration found so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub arm: ArmState,
    pub loss: f64,
    pub resource: u64,
    pub bracket_s: u32,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketOutcome {
    pub round: u32,
    pub s: u32,
    pub n: u64,
    pub consumed: u64,
    /// `None` when every arm failed or the bracket was cut short.
    pub best_arm: Option<u64>,
    pub best_loss: Loss,
    pub resource: u64,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbandRun {
    /// One record per completed bracket.
    pub trajectory: Vec<IncumbentRecord>,
    pub brackets: Vec<BracketOutcome>,
    pub incumbent: Option<Incumbent>,
    /// The ledger cap stopped the run.
    pub truncated: bool,
    /// Units charged by this run.
    pub consumed: u64,
}

struct BracketRun {
    plan_index: usize,
    result: Result<ShaResult, ShaError>,
    lines: Vec<LogLine>,
}

/// Practical finite-horizon Hyperband.
///
/// Each outer loop runs every bracket of [`compute_brackets`] (or only
/// `params.only_bracket`) on fresh arms, in decreasing `s`. Arm ids increase
/// across the whole run; each bracket reserves a block of trial ids large
/// enough for its schedule, so ids do not depend on whether brackets run
/// concurrently. After every completed bracket the incumbent is updated and
/// an incumbent record is appended to the log.
///
/// A bracket whose arms all fail is recorded and skipped. The run fails
/// only if no bracket completes. Reaching the ledger cap ends the run with
/// `truncated` set.
pub fn hyperband_practical(
    params: &HyperbandParams,
    source: &mut dyn ArmSource,
    ev: &Evaluator<'_>,
) -> Result<HyperbandRun, HyperbandError> {
    let mut plans = compute_brackets(params)?;
    if let Some(only) = params.only_bracket {
        plans.retain(|p| p.s == only);
        if plans.is_empty() {
            return Err(HyperbandError::Params(format!(
                "bracket {only} is outside s = {}..={}",
                params.s_min(),
                params.s_max()
            )));
        }
    }
    if params.outer_loops.is_none() && ev.ledger.cap().is_none() {
        return Err(HyperbandError::Unbounded);
    }

    let mut run = HyperbandRun {
        trajectory: Vec::new(),
        brackets: Vec::new(),
        incumbent: None,
        truncated: false,
        consumed: 0,
    };
    let start_consumed = ev.ledger.consumed();
    let mut next_arm = 0u64;
    let mut last_failure = None;
    let mut round = 0u32;

    while params.outer_loops.is_none_or(|loops| (round as u64) < loops) {
        let base = ev.log.next_trial_id();
        let mut offsets = Vec::with_capacity(plans.len());
        let mut acc = base;
        for plan in &plans {
            offsets.push(acc);
            acc += plan.schedule.evaluations();
        }

        if params.parallel_brackets {
            let arm_sets: Vec<Vec<ArmState>> = plans.iter().map(|p| draw(source, &mut next_arm, p.n)).collect();
            for done in run_concurrently(params, &plans, arm_sets, &offsets, round, ev) {
                absorb(&mut run, &plans, done, round, ev, start_consumed, &mut last_failure)?;
            }
        } else {
            for (k, plan) in plans.iter().enumerate() {
                let arms = draw(source, &mut next_arm, plan.n);
                ev.log.advance_to(offsets[k]);
                let result = run_bracket(params, plan, arms, round, ev);
                let done = BracketRun {
                    plan_index: k,
                    result,
                    lines: Vec::new(),
                };
                absorb(&mut run, &plans, done, round, ev, start_consumed, &mut last_failure)?;
                if run.truncated {
                    break;
                }
            }
        }
        ev.log.advance_to(acc);
        if run.truncated {
            break;
        }
        round += 1;
    }

    if run.incumbent.is_none() && !run.truncated {
        if let Some(e) = last_failure {
            return Err(HyperbandError::AllBracketsFailed(e));
        }
    }
    Ok(run)
}

/// Fold one finished bracket into the run and the log.
fn absorb(
    run: &mut HyperbandRun,
    plans: &[BracketPlan],
    done: BracketRun,
    round: u32,
    ev: &Evaluator<'_>,
    start_consumed: u64,
    last_failure: &mut Option<ShaError>,
) -> Result<(), HyperbandError> {
    let plan = &plans[done.plan_index];
    for line in done.lines {
        ev.log.append(line)?;
    }
    if run.truncated {
        // Concurrent brackets that finished after the cap was hit
        // keep their trial records but do not move the incumbent.
        if let Ok(res) = &done.result {
            run.consumed += res.ledger_consumed;
        }
        return Ok(());
    }
    match done.result {
        Ok(res) => {
            run.consumed += res.ledger_consumed;
            update_incumbent(run, &res, plan.s, round);
            run.brackets.push(outcome(round, plan, &res));
            let inc = run.incumbent.as_ref().expect("a completed bracket sets the incumbent");
            let record = IncumbentRecord {
                ledger_consumed: start_consumed + run.consumed,
                loss: inc.loss,
                arm_id: inc.arm.id,
                bracket_s: Some(plan.s),
                round: Some(round),
                resource: inc.resource,
                config: inc.arm.config.clone(),
            };
            ev.log.append(LogLine::Incumbent(record.clone()))?;
            run.trajectory.push(record);
        }
        Err(e) if e.is_budget_exhausted() => {
            log::info!("ledger cap reached in bracket s = {} of loop {round}", plan.s);
            run.truncated = true;
            run.brackets.push(BracketOutcome {
                round,
                s: plan.s,
                n: plan.n,
                consumed: 0,
                best_arm: None,
                best_loss: Loss::Failed,
                resource: 0,
                completed: false,
            });
        }
        Err(ShaError::AllArmsFailed { resource, consumed }) => {
            log::warn!("bracket s = {} of loop {round}: every arm failed at resource {resource}", plan.s);
            run.consumed += consumed;
            run.brackets.push(BracketOutcome {
                round,
                s: plan.s,
                n: plan.n,
                consumed,
                best_arm: None,
                best_loss: Loss::Failed,
                resource,
                completed: false,
            });
            *last_failure = Some(ShaError::AllArmsFailed { resource, consumed });
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn run_bracket(
    params: &HyperbandParams,
    plan: &BracketPlan,
    arms: Vec<ArmState>,
    round: u32,
    ev: &Evaluator<'_>,
) -> Result<ShaResult, ShaError> {
    let tag = RungTag {
        bracket_s: Some(plan.s),
        rung_i: 0,
        round: Some(round),
    };
    sha_practical(arms, &plan.schedule, params.eta, ev, params.incumbent_policy, tag)
}

fn run_concurrently(
    params: &HyperbandParams,
    plans: &[BracketPlan],
    arm_sets: Vec<Vec<ArmState>>,
    offsets: &[u64],
    round: u32,
    ev: &Evaluator<'_>,
) -> Vec<BracketRun> {
    let logging = ev.log.is_enabled();
    std::thread::scope(|scope| {
        let handles: Vec<_> = plans
            .iter()
            .zip(arm_sets)
            .enumerate()
            .map(|(k, (plan, arms))| {
                let first = offsets[k];
                scope.spawn(move || {
                    let child = if logging {
                        TrialLog::in_memory()
                    } else {
                        TrialLog::disabled()
                    }
                    .starting_at(first);
                    let result = run_bracket(params, plan, arms, round, &ev.with_log(&child));
                    BracketRun {
                        plan_index: k,
                        result,
                        lines: child.take_lines(),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bracket worker panicked"))
            .collect()
    })
}

fn update_incumbent(run: &mut HyperbandRun, res: &ShaResult, s: u32, round: u32) {
    let Some(loss) = res.best_loss.value() else {
        return;
    };
    if run.incumbent.as_ref().is_none_or(|inc| loss < inc.loss) {
        run.incumbent = Some(Incumbent {
            arm: res.best_arm.clone(),
            loss,
            resource: res.loss_resource_level,
            bracket_s: s,
            round,
        });
    }
}

fn outcome(round: u32, plan: &BracketPlan, res: &ShaResult) -> BracketOutcome {
    BracketOutcome {
        round,
        s: plan.s,
        n: plan.n,
        consumed: res.ledger_consumed,
        best_arm: Some(res.best_arm.id),
        best_loss: res.best_loss,
        resource: res.loss_resource_level,
        completed: true,
    }
}

/// Rule for picking the infinite-horizon incumbent among the outputs of a
/// round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundIncumbent {
    /// Smallest reported loss; ties go to the bracket with more arms.
    #[default]
    EmpiricalBest,
    /// Output of the bracket with the most arms.
    LargestBracket,
}

/// Output of one SuccessiveHalving call inside a doubling loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingBracket {
    pub k: u32,
    /// `l` (arms `2^l`) in the infinite-horizon loop, `s` in the finite one.
    pub index: u32,
    pub budget: u64,
    pub n: u64,
    pub arm_id: u64,
    pub loss: Loss,
    pub resource: u64,
    pub consumed: u64,
}

/// Incumbent after some number of units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub consumed: u64,
    pub arm_id: u64,
    pub loss: f64,
    pub k: u32,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DoublingRun {
    pub brackets: Vec<DoublingBracket>,
    /// One point per completed bracket, once an incumbent exists.
    pub trajectory: Vec<TrajectoryPoint>,
    pub truncated: bool,
    pub consumed: u64,
}

impl DoublingRun {
    /// Incumbent in force after `units` had been consumed.
    pub fn incumbent_at(&self, units: u64) -> Option<&TrajectoryPoint> {
        self.trajectory.iter().take_while(|p| p.consumed <= units).last()
    }
}

/// Values of `l ≥ 1` with `k − l ≥ log2 l`.
pub fn admissible_l(k: u32) -> Vec<u32> {
    (1..=k).filter(|&l| (k - l) as f64 >= (l as f64).log2()).collect()
}

/// Infinite-horizon Hyperband.
///
/// Round `k = 1..=max_k` runs [`sha_infinite`] with budget `2^k` on `2^l`
/// fresh arms for every `l` in [`admissible_l`]. The incumbent is chosen by
/// `rule` among the outputs of the last fully completed round; until round 1
/// completes there is none.
pub fn hyperband_infinite(
    source: &mut dyn ArmSource,
    max_k: u32,
    ev: &Evaluator<'_>,
    rule: RoundIncumbent,
) -> Result<DoublingRun, HyperbandError> {
    if max_k == 0 {
        return Err(HyperbandError::Params("max_k must be at least 1".into()));
    }
    let mut run = DoublingRun::default();
    let mut next_arm = 0;
    let mut current: Option<TrajectoryPoint> = None;
    for k in 1..=max_k {
        let budget = 1u64 << k;
        let mut round_outputs: Vec<TrajectoryPoint> = Vec::new();
        for l in admissible_l(k) {
            let n = 1u64 << l;
            let arms = draw(source, &mut next_arm, n);
            let tag = RungTag {
                bracket_s: Some(l),
                rung_i: 0,
                round: Some(k),
            };
            let res = match sha_infinite(arms, budget, ev, tag) {
                Ok(res) => res,
                Err(e) if e.is_budget_exhausted() => {
                    run.truncated = true;
                    return Ok(run);
                }
                Err(e) => return Err(e.into()),
            };
            run.consumed += res.ledger_consumed;
            run.brackets.push(DoublingBracket {
                k,
                index: l,
                budget,
                n,
                arm_id: res.best_arm.id,
                loss: res.best_loss,
                resource: res.loss_resource_level,
                consumed: res.ledger_consumed,
            });
            if let Some(loss) = res.best_loss.value() {
                round_outputs.push(TrajectoryPoint {
                    consumed: run.consumed,
                    arm_id: res.best_arm.id,
                    loss,
                    k,
                    index: l,
                });
            }
            if let Some(mut point) = current {
                point.consumed = run.consumed;
                run.trajectory.push(point);
            }
        }
        let pick = match rule {
            RoundIncumbent::EmpiricalBest => round_outputs
                .iter()
                .min_by(|a, b| a.loss.total_cmp(&b.loss).then(b.index.cmp(&a.index))),
            RoundIncumbent::LargestBracket => round_outputs.iter().max_by_key(|p| p.index),
        };
        if let Some(&p) = pick {
            current = Some(p);
            let point = TrajectoryPoint {
                consumed: run.consumed,
                ..p
            };
            match run.trajectory.last_mut() {
                Some(last) if last.consumed == run.consumed => *last = point,
                _ => run.trajectory.push(point),
            }
            ev.log.append(LogLine::Incumbent(IncumbentRecord {
                ledger_consumed: run.consumed,
                loss: p.loss,
                arm_id: p.arm_id,
                bracket_s: Some(p.index),
                round: Some(k),
                resource: 0,
                config: None,
            }))?;
        }
    }
    Ok(run)
}

/// Arms in bracket `s` of round `k`: `⌈2^k η^s / (R (s+1))⌉`.
pub fn finite_bracket_size(k: u32, s: u32, max_resource: u64, eta: f64) -> u64 {
    ceil_tolerant((1u64 << k) as f64 * eta.powi(s as i32) / (max_resource as f64 * (s as f64 + 1.0)))
}

/// Finite-horizon Hyperband with doubling budgets.
///
/// Round `k = 1..=max_k` runs [`sha_finite_theoretical`] with budget `2^k`
/// for `s = s_max, …, 0`, skipping brackets whose size and budget admit no
/// schedule. All outputs are scored at `R`, so the incumbent is the best of
/// every completed bracket.
pub fn hyperband_finite_theoretical(
    max_resource: u64,
    eta: f64,
    source: &mut dyn ArmSource,
    max_k: u32,
    ev: &Evaluator<'_>,
) -> Result<DoublingRun, HyperbandError> {
    HyperbandParams::new(max_resource).eta(eta).validate()?;
    if max_k == 0 {
        return Err(HyperbandError::Params("max_k must be at least 1".into()));
    }
    let s_max = floor_log(max_resource, eta);
    let mut run = DoublingRun::default();
    let mut next_arm = 0;
    let mut best: Option<TrajectoryPoint> = None;
    for k in 1..=max_k {
        let budget = 1u64 << k;
        for s in (0..=s_max).rev() {
            let n = finite_bracket_size(k, s, max_resource, eta);
            if finite_rung_count(n, budget, max_resource, eta).is_none() {
                log::info!("round {k}, bracket {s}: no schedule fits n = {n}, B = {budget}; skipped");
                continue;
            }
            let arms = draw(source, &mut next_arm, n);
            let tag = RungTag {
                bracket_s: Some(s),
                rung_i: 0,
                round: Some(k),
            };
            let res = match sha_finite_theoretical(arms, budget, max_resource, eta, ev, tag) {
                Ok(res) => res,
                Err(e) if e.is_budget_exhausted() => {
                    run.truncated = true;
                    return Ok(run);
                }
                Err(e) => return Err(e.into()),
            };
            run.consumed += res.ledger_consumed;
            run.brackets.push(DoublingBracket {
                k,
                index: s,
                budget,
                n,
                arm_id: res.best_arm.id,
                loss: res.best_loss,
                resource: res.loss_resource_level,
                consumed: res.ledger_consumed,
            });
            if let Some(loss) = res.best_loss.value() {
                if best.is_none_or(|b| loss < b.loss) {
                    best = Some(TrajectoryPoint {
                        consumed: 0,
                        arm_id: res.best_arm.id,
                        loss,
                        k,
                        index: s,
                    });
                }
            }
            if let Some(b) = best {
                let point = TrajectoryPoint {
                    consumed: run.consumed,
                    ..b
                };
                ev.log.append(LogLine::Incumbent(IncumbentRecord {
                    ledger_consumed: run.consumed,
                    loss: point.loss,
                    arm_id: point.arm_id,
                    bracket_s: Some(point.index),
                    round: Some(k),
                    resource: max_resource,
                    config: None,
                }))?;
                run.trajectory.push(point);
            }
        }
    }
    Ok(run)
}
