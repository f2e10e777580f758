use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{ArmState, EvalRequest, LossOracle, OracleError};

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("malformed replay document: {0}")]
    Malformed(String),
    #[error("arm {0} has no tabulated curve")]
    UnknownArm(u64),
    #[error("resource {resource} is below the smallest tabulated level {smallest} for arm {arm_id}")]
    BelowDomain {
        arm_id: u64,
        resource: u64,
        smallest: u64,
    },
}

/// Oracle over tabulated loss curves.
///
/// A query between tabulated levels returns the value at the largest
/// tabulated level not above it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOracle {
    curves: HashMap<u64, BTreeMap<u64, f64>>,
}

/// Parse a replay document: `{"<arm_id>": {"<level>": loss, ...}, ...}`.
pub fn load_replay(document: &str) -> Result<ReplayOracle, ReplayError> {
    let raw: BTreeMap<String, BTreeMap<String, f64>> =
        serde_json::from_str(document).map_err(|e| ReplayError::Malformed(e.to_string()))?;
    let mut curves = HashMap::with_capacity(raw.len());
    for (arm, curve) in raw {
        let arm_id: u64 = arm
            .trim()
            .parse()
            .map_err(|_| ReplayError::Malformed(format!("arm id `{arm}` is not a non-negative integer")))?;
        if curve.is_empty() {
            return Err(ReplayError::Malformed(format!("arm {arm_id} has an empty curve")));
        }
        let mut parsed = BTreeMap::new();
        for (level, loss) in curve {
            let level: u64 = level.trim().parse().map_err(|_| {
                ReplayError::Malformed(format!("arm {arm_id}: level `{level}` is not a non-negative integer"))
            })?;
            parsed.insert(level, loss);
        }
        curves.insert(arm_id, parsed);
    }
    Ok(ReplayOracle { curves })
}

impl ReplayOracle {
    pub fn from_curves(curves: impl IntoIterator<Item = (u64, BTreeMap<u64, f64>)>) -> Self {
        Self {
            curves: curves.into_iter().collect(),
        }
    }

    pub fn lookup(&self, arm_id: u64, resource: u64) -> Result<f64, ReplayError> {
        let curve = self.curves.get(&arm_id).ok_or(ReplayError::UnknownArm(arm_id))?;
        match curve.range(..=resource).next_back() {
            Some((_, &loss)) => Ok(loss),
            None => Err(ReplayError::BelowDomain {
                arm_id,
                resource,
                smallest: *curve.keys().next().expect("curves are non-empty"),
            }),
        }
    }

    pub fn arm_count(&self) -> usize {
        self.curves.len()
    }
}

impl LossOracle for ReplayOracle {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64, OracleError> {
        self.lookup(request.arm.id, request.resource)
            .map_err(|e| match e {
                ReplayError::UnknownArm(id) => OracleError::UnknownArm(id),
                ReplayError::BelowDomain {
                    arm_id,
                    resource,
                    smallest,
                } => OracleError::BelowDomain {
                    arm_id,
                    resource,
                    smallest,
                },
                ReplayError::Malformed(m) => OracleError::Failed(m),
            })
    }

    fn recall(&self, arm: &ArmState, resource: u64) -> Option<f64> {
        self.lookup(arm.id, resource).ok()
    }
}
