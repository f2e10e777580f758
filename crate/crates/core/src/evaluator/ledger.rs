use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How an evaluation at cumulative level `r` is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// Charge the whole cumulative level, as if training restarted from scratch.
    #[default]
    Full,
    /// Charge only the increment over the arm's previous level.
    Delta,
}

impl Accounting {
    pub fn charge(self, resource: u64, previous: u64) -> u64 {
        match self {
            Accounting::Full => resource,
            Accounting::Delta => resource.saturating_sub(previous),
        }
    }
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("budget cap exceeded: requested {requested} units with {consumed} of {cap} consumed")]
pub struct BudgetExceeded {
    pub requested: u64,
    pub consumed: u64,
    pub cap: u64,
}

/// Resource units consumed so far, with an optional hard cap.
///
/// Charges are atomic so brackets running on different threads can share one
/// ledger.
#[derive(Debug, Default)]
pub struct BudgetLedger {
    consumed: AtomicU64,
    cap: Option<u64>,
}

impl BudgetLedger {
    pub fn new(cap: Option<u64>) -> Self {
        Self {
            consumed: AtomicU64::new(0),
            cap,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn with_cap(cap: u64) -> Self {
        Self::new(Some(cap))
    }

    pub fn consumed(&self) -> u64 {
        self.consumed.load(Ordering::SeqCst)
    }

    pub fn cap(&self) -> Option<u64> {
        self.cap
    }

    pub fn remaining(&self) -> Option<u64> {
        self.cap.map(|c| c.saturating_sub(self.consumed()))
    }

    /// Reserve `amount` units, all or nothing.
    pub fn try_charge(&self, amount: u64) -> Result<(), BudgetExceeded> {
        let Some(cap) = self.cap else {
            self.consumed.fetch_add(amount, Ordering::SeqCst);
            return Ok(());
        };
        self.consumed
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| {
                c.checked_add(amount).filter(|&total| total <= cap)
            })
            .map(|_| ())
            .map_err(|consumed| BudgetExceeded {
                requested: amount,
                consumed,
                cap,
            })
    }
}
