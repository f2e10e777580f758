//! Loss oracles, budget accounting and rung execution.
//!
//! Every allocation strategy in this crate talks to the outside world through
//! [`Evaluator::evaluate_rung`]: a list of arms is trained to one cumulative
//! resource level, the ledger is charged, and one [`TrialRecord`] per arm is
//! appended to the log. Backends implement [`LossOracle`].

mod ledger;
mod log;
mod replay;
mod trainer;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::search_space::Configuration;

pub use ledger::{Accounting, BudgetExceeded, BudgetLedger};
pub use log::{parse_log, IncumbentRecord, LogLine, TrialLog, TrialRecord, TrialStatus};
pub use replay::{load_replay, ReplayError, ReplayOracle};
pub use trainer::{TrainerOracle, TrainerRequest};

/// A validation loss, or the sentinel for an evaluation that failed.
///
/// Serialized as a JSON number, with `null` for the sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Finite(f64),
    Failed,
}

impl Loss {
    pub fn value(self) -> Option<f64> {
        match self {
            Loss::Finite(v) => Some(v),
            Loss::Failed => None,
        }
    }

    pub fn is_failed(self) -> bool {
        matches!(self, Loss::Failed)
    }

    /// Total order with the sentinel after every finite loss.
    pub fn total_cmp(&self, other: &Loss) -> Ordering {
        match (self, other) {
            (Loss::Finite(a), Loss::Finite(b)) => a.total_cmp(b),
            (Loss::Finite(_), Loss::Failed) => Ordering::Less,
            (Loss::Failed, Loss::Finite(_)) => Ordering::Greater,
            (Loss::Failed, Loss::Failed) => Ordering::Equal,
        }
    }
}

impl Serialize for Loss {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Loss {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match Option::<f64>::deserialize(d)? {
            Some(v) if v.is_finite() => Loss::Finite(v),
            _ => Loss::Failed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmStatus {
    Active,
    Eliminated,
    Failed,
}

/// One configuration under evaluation. Synthetic arms carry no configuration;
/// the oracle identifies them by `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub id: u64,
    pub config: Option<Configuration>,
    pub max_observed_resource: u64,
    pub loss_at: BTreeMap<u64, Loss>,
    pub status: ArmStatus,
}

impl ArmState {
    pub fn new(id: u64, config: Option<Configuration>) -> Self {
        Self {
            id,
            config,
            max_observed_resource: 0,
            loss_at: BTreeMap::new(),
            status: ArmStatus::Active,
        }
    }

    pub fn synthetic(id: u64) -> Self {
        Self::new(id, None)
    }

    /// Loss at the highest level evaluated so far.
    pub fn last_loss(&self) -> Option<Loss> {
        self.loss_at.values().next_back().copied()
    }
}

/// One evaluation request handed to an oracle.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub trial_id: u64,
    pub arm: &'a ArmState,
    /// Cumulative training level, not an increment.
    pub resource: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("evaluation failed: {0}")]
    Failed(String),
    #[error("evaluation timed out after {0} s")]
    Timeout(f64),
    #[error("non-monotone resource request for arm {arm_id}: {requested} after {observed}")]
    NonMonotone {
        arm_id: u64,
        requested: u64,
        observed: u64,
    },
    #[error("unknown arm {0}")]
    UnknownArm(u64),
    #[error("resource {resource} is below the smallest tabulated level {smallest} for arm {arm_id}")]
    BelowDomain {
        arm_id: u64,
        resource: u64,
        smallest: u64,
    },
}

/// Maps (arm, cumulative resource) to a validation loss.
///
/// Implementations must tolerate concurrent calls on distinct arms.
pub trait LossOracle: Send + Sync {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64, OracleError>;

    /// Whether the backend continues from earlier work rather than restarting.
    fn resumable(&self) -> bool {
        false
    }

    /// The loss the arm showed at an earlier level, if the backend can report
    /// it without doing new work.
    fn recall(&self, _arm: &ArmState, _resource: u64) -> Option<f64> {
        None
    }
}

impl<T: LossOracle + ?Sized> LossOracle for &T {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64, OracleError> {
        (**self).evaluate(request)
    }
    fn resumable(&self) -> bool {
        (**self).resumable()
    }
    fn recall(&self, arm: &ArmState, resource: u64) -> Option<f64> {
        (**self).recall(arm, resource)
    }
}

impl<T: LossOracle + ?Sized> LossOracle for Box<T> {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64, OracleError> {
        (**self).evaluate(request)
    }
    fn resumable(&self) -> bool {
        (**self).resumable()
    }
    fn recall(&self, arm: &ArmState, resource: u64) -> Option<f64> {
        (**self).recall(arm, resource)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Budget(#[from] BudgetExceeded),
    #[error("arm {arm_id} is not active")]
    NotActive { arm_id: u64 },
    #[error("arm {arm_id} was already evaluated at {observed}; cannot evaluate at {requested}")]
    NonMonotone {
        arm_id: u64,
        requested: u64,
        observed: u64,
    },
    #[error("resource level must be positive")]
    ZeroResource,
    #[error("all {count} arms failed at resource {resource}")]
    AllArmsFailed { count: usize, resource: u64 },
    #[error("writing trial log: {0}")]
    Log(#[from] std::io::Error),
}

/// Where a rung sits in a run; copied onto each trial record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RungTag {
    pub bracket_s: Option<u32>,
    pub rung_i: u32,
    pub round: Option<u32>,
}

/// Rung executor: an oracle plus the ledger and log it reports to.
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    pub oracle: &'a dyn LossOracle,
    pub ledger: &'a BudgetLedger,
    pub log: &'a TrialLog,
    pub max_parallel: usize,
    pub accounting: Accounting,
}

impl<'a> Evaluator<'a> {
    pub fn new(oracle: &'a dyn LossOracle, ledger: &'a BudgetLedger, log: &'a TrialLog) -> Self {
        Self {
            oracle,
            ledger,
            log,
            max_parallel: 1,
            accounting: Accounting::Full,
        }
    }

    pub fn max_parallel(mut self, workers: usize) -> Self {
        self.max_parallel = workers.max(1);
        self
    }

    pub fn accounting(mut self, accounting: Accounting) -> Self {
        self.accounting = accounting;
        self
    }

    /// Same settings against a different log.
    pub fn with_log<'b>(&self, log: &'b TrialLog) -> Evaluator<'b>
    where
        'a: 'b,
    {
        Evaluator {
            oracle: self.oracle,
            ledger: self.ledger,
            log,
            max_parallel: self.max_parallel,
            accounting: self.accounting,
        }
    }

    /// Train every arm to cumulative level `resource` and return the losses in
    /// input order.
    ///
    /// The whole rung is charged before any work starts, so a rung that does
    /// not fit under the cap is refused rather than half-run. Arms whose
    /// evaluation fails get [`Loss::Failed`] and status `Failed`; their
    /// resource is still charged. If every arm fails the bookkeeping is kept
    /// and [`EvalError::AllArmsFailed`] is returned.
    pub fn evaluate_rung(
        &self,
        arms: &mut [ArmState],
        resource: u64,
        tag: RungTag,
    ) -> Result<Vec<Loss>, EvalError> {
        if arms.is_empty() {
            return Ok(Vec::new());
        }
        if resource == 0 {
            return Err(EvalError::ZeroResource);
        }
        for arm in arms.iter() {
            if arm.status != ArmStatus::Active {
                return Err(EvalError::NotActive { arm_id: arm.id });
            }
            if !arm.loss_at.is_empty() && resource <= arm.max_observed_resource {
                return Err(EvalError::NonMonotone {
                    arm_id: arm.id,
                    requested: resource,
                    observed: arm.max_observed_resource,
                });
            }
        }
        let charges: Vec<u64> = arms
            .iter()
            .map(|a| self.accounting.charge(resource, a.max_observed_resource))
            .collect();
        self.ledger.try_charge(charges.iter().sum())?;
        let first_id = self.log.reserve_ids(arms.len() as u64);

        let outcomes = self.run_all(arms, resource, first_id);

        let mut losses = Vec::with_capacity(arms.len());
        let mut failures = 0;
        for (i, (arm, outcome)) in arms.iter_mut().zip(outcomes).enumerate() {
            let (result, wall_millis, timestamp) = outcome;
            let (loss, status, error) = match result {
                Ok(v) if v.is_finite() => (Loss::Finite(v), TrialStatus::Completed, None),
                Ok(v) => (
                    Loss::Failed,
                    TrialStatus::Failed,
                    Some(format!("non-finite loss {v}")),
                ),
                Err(e @ OracleError::Timeout(_)) => {
                    (Loss::Failed, TrialStatus::Timeout, Some(e.to_string()))
                }
                Err(e) => (Loss::Failed, TrialStatus::Failed, Some(e.to_string())),
            };
            if loss.is_failed() {
                failures += 1;
                arm.status = ArmStatus::Failed;
                ::log::warn!("arm {} failed at resource {resource}: {}", arm.id, error.as_deref().unwrap_or(""));
            }
            arm.loss_at.insert(resource, loss);
            arm.max_observed_resource = resource;
            losses.push(loss);
            self.log.append(LogLine::Trial(TrialRecord {
                trial_id: first_id + i as u64,
                arm_id: arm.id,
                bracket_s: tag.bracket_s,
                rung_i: tag.rung_i,
                round: tag.round,
                resource,
                charged: charges[i],
                loss,
                status,
                error,
                wall_millis,
                timestamp,
            }))?;
        }
        if failures == arms.len() {
            return Err(EvalError::AllArmsFailed {
                count: failures,
                resource,
            });
        }
        Ok(losses)
    }

    fn run_all(
        &self,
        arms: &[ArmState],
        resource: u64,
        first_id: u64,
    ) -> Vec<(Result<f64, OracleError>, u64, u64)> {
        let run_one = |i: usize| {
            let start = Instant::now();
            let timestamp = log::now_millis();
            let result = self.oracle.evaluate(&EvalRequest {
                trial_id: first_id + i as u64,
                arm: &arms[i],
                resource,
            });
            (result, start.elapsed().as_millis() as u64, timestamp)
        };
        let workers = self.max_parallel.min(arms.len());
        if workers <= 1 {
            return (0..arms.len()).map(run_one).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<_>>> = Mutex::new(vec![None; arms.len()]);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, AtomicOrdering::SeqCst);
                    if i >= arms.len() {
                        break;
                    }
                    let out = run_one(i);
                    slots.lock().expect("result slots poisoned")[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .expect("result slots poisoned")
            .into_iter()
            .map(|o| o.expect("every arm evaluated"))
            .collect()
    }
}

/// Evaluate a rung with full-level accounting and no trial log.
pub fn evaluate_rung(
    arms: &mut [ArmState],
    resource: u64,
    oracle: &dyn LossOracle,
    ledger: &BudgetLedger,
    max_parallel: usize,
) -> Result<Vec<Loss>, EvalError> {
    let log = TrialLog::disabled();
    Evaluator::new(oracle, ledger, &log)
        .max_parallel(max_parallel)
        .evaluate_rung(arms, resource, RungTag::default())
}

/// Indices of all arms sorted best first: by loss, failures last, ties to the
/// smaller arm id.
pub fn rank(arms: &[ArmState], losses: &[Loss]) -> Vec<usize> {
    assert_eq!(arms.len(), losses.len(), "losses must align with arms");
    let mut order: Vec<usize> = (0..arms.len()).collect();
    order.sort_by(|&a, &b| {
        losses[a]
            .total_cmp(&losses[b])
            .then(arms[a].id.cmp(&arms[b].id))
    });
    order
}

/// The `k` best arms, best first.
pub fn top_k(arms: &[ArmState], losses: &[Loss], k: usize) -> Vec<ArmState> {
    rank(arms, losses)
        .into_iter()
        .take(k)
        .map(|i| arms[i].clone())
        .collect()
}
