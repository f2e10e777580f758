//! Synthetic infinite-armed bandit populations.
//!
//! An arm is a loss sequence `ℓ_j` indexed by resource level `j` that
//! converges to a limit `ν`. Limits are drawn i.i.d. from a distribution `F`
//! with `F(ν* + x) = x^β` (continuous family) or uniform over a finite set of
//! means (discrete family). How fast sequences approach their limits is
//! governed by the envelope `γ(j) = j^(-1/α)`.
//!
//! Randomness is counter based: the limit of arm `i` and the noise of its
//! `k`-th pull are pure functions of `(seed, i, k)`, so arms can be created
//! lazily, queried from any thread, and reproduced exactly.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{ArmState, EvalRequest, LossOracle, OracleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `F(ν* + x) = x^β` on `[ν*, ν* + 1]`; deterministic envelope arms.
    #[default]
    BetaContinuous,
    /// Uniform over `means`; deterministic envelope arms.
    Discrete,
    /// Limits as in `BetaContinuous`; losses are running means of noisy pulls.
    Stochastic,
    /// Lower-bound construction; see [`make_adversarial_instance`].
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    None,
    Bernoulli,
    UniformBounded,
}

/// How a deterministic sequence sits inside its envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeSign {
    /// `ν + γ(j)`: decreasing curves that never cross.
    #[default]
    Plus,
    /// `ν + γ(j)` at even `j`, `ν` at odd `j`.
    Alternating,
    /// `max(ν, ν* + γ(j))`: every arm shows the same loss until the envelope
    /// drops below its limit, so arms are indistinguishable early on.
    Plateau,
    /// Reflection around `reflect_center`; see [`reflect`].
    Adversarial,
}

/// A synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryInstance {
    #[serde(default)]
    pub family: Family,
    /// Envelope exponent: `γ(j) = j^(-1/α)`.
    #[serde(default = "one")]
    pub alpha: f64,
    /// Limit-distribution exponent: `F(ν* + x) = x^β`.
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub nu_star: f64,
    /// Sorted, distinct means of the discrete family.
    #[serde(default)]
    pub means: Vec<f64>,
    #[serde(default)]
    pub noise: Noise,
    /// Half-width of `uniform_bounded` noise.
    #[serde(default = "default_width")]
    pub noise_width: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub envelope_sign: EnvelopeSign,
    /// With a horizon `R`, `γ(j) = 0` for `j ≥ R`: the loss at `R` is the limit.
    #[serde(default)]
    pub horizon: Option<u64>,
    /// Center `ν̂` of the adversarial reflection band.
    #[serde(default)]
    pub reflect_center: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_width() -> f64 {
    0.1
}

impl Default for TheoryInstance {
    fn default() -> Self {
        Self {
            family: Family::BetaContinuous,
            alpha: 1.0,
            beta: 1.0,
            nu_star: 0.0,
            means: Vec::new(),
            noise: Noise::None,
            noise_width: default_width(),
            seed: 0,
            envelope_sign: EnvelopeSign::Plus,
            horizon: None,
            reflect_center: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("adversarial limits are constructed, not drawn; use make_adversarial_instance")]
    AdversarialDraw,
    #[error("reflection center {0} is not below 1")]
    CenterTooLarge(f64),
}

/// `γ(j) = j^(-1/α)`, or 0 at and beyond a finite horizon.
pub fn gamma(alpha: f64, j: u64, horizon: Option<u64>) -> f64 {
    if horizon.is_some_and(|r| j >= r) {
        return 0.0;
    }
    (j as f64).powf(-1.0 / alpha)
}

/// The lower-bound reflection: inside the band `[center, center + γ]` a limit
/// is mirrored around the band's midpoint, so better arms look worse.
pub fn reflect(center: f64, gamma_j: f64, limit: f64) -> f64 {
    let mid = center + gamma_j / 2.0;
    if (mid - limit).abs() <= gamma_j / 2.0 {
        2.0 * mid - limit
    } else {
        limit
    }
}

impl TheoryInstance {
    pub fn beta_continuous(alpha: f64, beta: f64, seed: u64) -> Self {
        Self {
            alpha,
            beta,
            seed,
            ..Self::default()
        }
    }

    pub fn discrete(means: Vec<f64>, alpha: f64, seed: u64) -> Self {
        Self {
            family: Family::Discrete,
            alpha,
            means,
            seed,
            ..Self::default()
        }
    }

    pub fn stochastic(beta: f64, noise: Noise, seed: u64) -> Self {
        Self {
            family: Family::Stochastic,
            beta,
            noise,
            seed,
            ..Self::default()
        }
    }

    pub fn with_sign(mut self, sign: EnvelopeSign) -> Self {
        self.envelope_sign = sign;
        self
    }

    pub fn with_horizon(mut self, horizon: Option<u64>) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(0.0..1.0).contains(&self.nu_star) {
            return bad("nu_star must lie in [0, 1)");
        }
        if self.horizon == Some(0) {
            return bad("horizon must be positive");
        }
        match self.family {
            Family::Discrete => {
                if self.means.is_empty() {
                    return bad("discrete family needs at least one mean");
                }
                if self.means.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("means must be strictly increasing");
                }
                if self.means.iter().any(|m| !(0.0..=1.0).contains(m)) {
                    return bad("means must lie in [0, 1]");
                }
            }
            Family::Stochastic => {
                if self.noise == Noise::None {
                    return bad("stochastic family needs a noise model");
                }
                if self.nu_star != 0.0 {
                    return bad("stochastic arms need limits in [0, 1]; set nu_star = 0");
                }
                if self.noise == Noise::UniformBounded && !(self.noise_width > 0.0) {
                    return bad("noise_width must be positive");
                }
            }
            Family::BetaContinuous | Family::Adversarial => {}
        }
        if self.envelope_sign == EnvelopeSign::Adversarial && self.reflect_center.is_none() {
            return bad("adversarial envelope needs reflect_center");
        }
        Ok(())
    }

    /// The optimal limit: `ν*`, or the smallest mean for the discrete family.
    pub fn optimum(&self) -> f64 {
        match self.family {
            Family::Discrete => self.means[0],
            _ => self.nu_star,
        }
    }

    /// `F(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Discrete => {
                let k = self.means.partition_point(|&m| m <= x);
                k as f64 / self.means.len() as f64
            }
            _ => {
                let d = x - self.nu_star;
                if d <= 0.0 {
                    0.0
                } else {
                    d.min(1.0).powf(self.beta)
                }
            }
        }
    }

    /// `F^{-1}(p) = min{x : F(x) ≥ p}` for `p` in `[0, 1]`.
    pub fn inverse_cdf(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.family {
            Family::Discrete => {
                let k = self.means.len();
                let idx = ((p * k as f64).ceil() as usize).clamp(1, k);
                self.means[idx - 1]
            }
            _ => self.nu_star + p.powf(1.0 / self.beta),
        }
    }

    fn gamma(&self, j: u64) -> f64 {
        gamma(self.alpha, j, self.horizon)
    }

    /// Limit of arm `arm_id`, a pure function of `(seed, arm_id)`.
    pub fn limit_of(&self, arm_id: u64) -> f64 {
        let mut rng = stream(self.seed, Domain::Limit, arm_id);
        self.limit_from(&mut rng)
    }

    fn limit_from<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Discrete => self.means[rng.random_range(0..self.means.len())],
            _ => {
                // 1 - u lies in (0, 1], so the power is well defined for any β.
                let u: f64 = 1.0 - rng.random::<f64>();
                self.nu_star + u.powf(1.0 / self.beta)
            }
        }
    }

    /// Deterministic loss of an arm with limit `limit` at level `j`.
    pub fn envelope_loss(&self, limit: f64, j: u64) -> f64 {
        let g = self.gamma(j);
        match self.envelope_sign {
            EnvelopeSign::Plus => limit + g,
            EnvelopeSign::Alternating => {
                if j % 2 == 0 {
                    limit + g
                } else {
                    limit
                }
            }
            EnvelopeSign::Plateau => limit.max(self.optimum() + g),
            EnvelopeSign::Adversarial => {
                reflect(self.reflect_center.expect("validated"), g, limit)
            }
        }
    }
}

/// Draw `n` i.i.d. limits from `F` using the caller's generator.
pub fn draw_limits<R: Rng + ?Sized>(
    instance: &TheoryInstance,
    rng: &mut R,
    n: usize,
) -> Result<Vec<f64>, SimError> {
    instance.validate()?;
    if instance.family == Family::Adversarial {
        return Err(SimError::AdversarialDraw);
    }
    Ok((0..n).map(|_| instance.limit_from(rng)).collect())
}

#[derive(Clone, Copy)]
enum Domain {
    Limit = 1,
    Noise = 2,
}

/// ChaCha stream keyed by `(seed, domain)` with stream number `arm_id`.
fn stream(seed: u64, domain: Domain, arm_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(arm_id);
    rng
}

/// One deterministic arm: `|ℓ_j - ν| ≤ γ(j)` at every level.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeArm {
    instance: TheoryInstance,
    pub limit: f64,
}

impl EnvelopeArm {
    pub fn loss(&self, j: u64) -> f64 {
        self.instance.envelope_loss(self.limit, j)
    }
}

pub fn make_envelope_arm(instance: &TheoryInstance, limit: f64) -> EnvelopeArm {
    EnvelopeArm {
        instance: instance.clone(),
        limit,
    }
}

/// Running mean of i.i.d. pulls with a fixed mean.
#[derive(Debug)]
pub struct StochasticArm {
    mean: f64,
    noise: Noise,
    width: f64,
    seed: u64,
    arm_id: u64,
    state: Mutex<StreamState>,
}

#[derive(Debug)]
struct StreamState {
    pulls: u64,
    sum: f64,
    rng: ChaCha8Rng,
}

impl StochasticArm {
    fn new(instance: &TheoryInstance, mean: f64, arm_id: u64) -> Self {
        Self {
            mean,
            noise: instance.noise,
            // Symmetric width keeps the pull mean at `mean` near the edges of [0, 1].
            width: instance.noise_width.min(mean).min(1.0 - mean),
            seed: instance.seed,
            arm_id,
            state: Mutex::new(StreamState::fresh(instance.seed, arm_id)),
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    fn pull(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        match self.noise {
            Noise::Bernoulli => {
                if u < self.mean {
                    1.0
                } else {
                    0.0
                }
            }
            Noise::UniformBounded => self.mean + self.width * (2.0 * u - 1.0),
            Noise::None => self.mean,
        }
    }

    /// Running mean after `j` pulls, extending the stream. Asking for fewer
    /// pulls than already taken is an error: running means are never rewound.
    pub fn loss(&self, j: u64) -> Result<f64, OracleError> {
        let mut st = self.state.lock().expect("arm state poisoned");
        if j < st.pulls {
            return Err(OracleError::NonMonotone {
                arm_id: self.arm_id,
                requested: j,
                observed: st.pulls,
            });
        }
        while st.pulls < j {
            let y = self.pull(&mut st.rng);
            st.sum += y;
            st.pulls += 1;
        }
        Ok(if j == 0 { self.mean } else { st.sum / j as f64 })
    }

    /// Running mean after `j` pulls recomputed from the start of the stream.
    pub fn replay(&self, j: u64) -> f64 {
        let mut rng = StreamState::fresh(self.seed, self.arm_id).rng;
        let sum: f64 = (0..j).map(|_| self.pull(&mut rng)).sum();
        if j == 0 {
            self.mean
        } else {
            sum / j as f64
        }
    }
}

impl StreamState {
    fn fresh(seed: u64, arm_id: u64) -> Self {
        Self {
            pulls: 0,
            sum: 0.0,
            rng: stream(seed, Domain::Noise, arm_id),
        }
    }
}

pub fn make_stochastic_arm(
    instance: &TheoryInstance,
    limit: f64,
    arm_id: u64,
) -> Result<StochasticArm, SimError> {
    if instance.noise == Noise::None {
        return Err(SimError::Invalid("stochastic arms need a noise model".into()));
    }
    if !(0.0..=1.0).contains(&limit) {
        return Err(SimError::Invalid(format!("mean {limit} is outside [0, 1]")));
    }
    Ok(StochasticArm::new(instance, limit, arm_id))
}

/// An adversarial population and the numbers that define it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialInstance {
    pub instance: TheoryInstance,
    pub limits: Vec<f64>,
    /// `ν̂ = F^{-1}(log(c/δ) / (n + log(c/δ)))`.
    pub center: f64,
    /// `c = 1 - 2^{-β}`.
    pub regularity: f64,
    /// `n γ^{-1}(2(ν̂ - ν*))`.
    pub threshold_budget: u64,
}

/// Build the uniform-allocation lower-bound population: `n` limits drawn from
/// `F(x) = x^β`, with sequences reflected inside `[ν̂, ν̂ + γ(j)]`.
pub fn make_adversarial_instance<R: Rng + ?Sized>(
    n: usize,
    delta: f64,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<AdversarialInstance, SimError> {
    if n == 0 {
        return Err(SimError::Invalid("n must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SimError::Invalid("delta must lie in (0, 1)".into()));
    }
    let regularity = 1.0 - 2f64.powf(-beta);
    let base = TheoryInstance::beta_continuous(alpha, beta, 0);
    base.validate()?;
    let log_term = (regularity / delta).ln();
    if log_term <= 0.0 {
        return Err(SimError::Invalid(format!(
            "log(c/δ) = {log_term} is not positive (c = {regularity})"
        )));
    }
    let center = base.inverse_cdf(log_term / (n as f64 + log_term));
    if center >= 1.0 {
        return Err(SimError::CenterTooLarge(center));
    }
    let threshold_budget = n as u64 * crate::theory_oracles::gamma_inv(alpha, 2.0 * (center - base.nu_star), None)
        .map_err(|e| SimError::Invalid(e.to_string()))?;
    let limits: Vec<f64> = (0..n).map(|_| base.limit_from(rng)).collect();
    let instance = TheoryInstance {
        family: Family::Adversarial,
        envelope_sign: EnvelopeSign::Adversarial,
        reflect_center: Some(center),
        ..base
    };
    Ok(AdversarialInstance {
        instance,
        limits,
        center,
        regularity,
        threshold_budget,
    })
}

enum Limits {
    /// Drawn per arm from `(seed, arm_id)`.
    Lazy,
    /// Indexed by arm id.
    Explicit(Vec<f64>),
}

/// A population exposed through the loss-oracle contract.
///
/// Arms are identified by id; deterministic families compute losses in
/// closed form, the stochastic family keeps one running stream per arm.
pub struct SimulatedOracle {
    instance: TheoryInstance,
    limits: Limits,
    streams: Mutex<HashMap<u64, std::sync::Arc<StochasticArm>>>,
}

impl SimulatedOracle {
    /// Arms with limits drawn lazily from the instance's seed.
    pub fn new(instance: TheoryInstance) -> Result<Self, SimError> {
        instance.validate()?;
        if instance.family == Family::Adversarial {
            return Err(SimError::AdversarialDraw);
        }
        Ok(Self {
            instance,
            limits: Limits::Lazy,
            streams: Mutex::new(HashMap::new()),
        })
    }

    /// Arms `0..limits.len()` with the given limits.
    pub fn with_limits(instance: TheoryInstance, limits: Vec<f64>) -> Result<Self, SimError> {
        instance.validate()?;
        Ok(Self {
            instance,
            limits: Limits::Explicit(limits),
            streams: Mutex::new(HashMap::new()),
        })
    }

    pub fn adversarial(adv: &AdversarialInstance) -> Self {
        Self {
            instance: adv.instance.clone(),
            limits: Limits::Explicit(adv.limits.clone()),
            streams: Mutex::new(HashMap::new()),
        }
    }

    pub fn instance(&self) -> &TheoryInstance {
        &self.instance
    }

    pub fn limit(&self, arm_id: u64) -> Option<f64> {
        match &self.limits {
            Limits::Lazy => Some(self.instance.limit_of(arm_id)),
            Limits::Explicit(v) => v.get(arm_id as usize).copied(),
        }
    }

    /// Simple regret of an arm: its limit minus the population optimum.
    pub fn regret(&self, arm_id: u64) -> Option<f64> {
        self.limit(arm_id).map(|l| l - self.instance.optimum())
    }

    fn stochastic_arm(&self, arm_id: u64, limit: f64) -> std::sync::Arc<StochasticArm> {
        let mut streams = self.streams.lock().expect("stream table poisoned");
        streams
            .entry(arm_id)
            .or_insert_with(|| std::sync::Arc::new(StochasticArm::new(&self.instance, limit, arm_id)))
            .clone()
    }

    pub fn loss(&self, arm_id: u64, j: u64) -> Result<f64, OracleError> {
        let limit = self.limit(arm_id).ok_or(OracleError::UnknownArm(arm_id))?;
        match self.instance.family {
            Family::Stochastic => self.stochastic_arm(arm_id, limit).loss(j),
            _ => Ok(self.instance.envelope_loss(limit, j)),
        }
    }
}

impl LossOracle for SimulatedOracle {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<f64, OracleError> {
        self.loss(request.arm.id, request.resource)
    }

    fn resumable(&self) -> bool {
        true
    }

    fn recall(&self, arm: &ArmState, resource: u64) -> Option<f64> {
        let limit = self.limit(arm.id)?;
        Some(match self.instance.family {
            Family::Stochastic => self.stochastic_arm(arm.id, limit).replay(resource),
            _ => self.instance.envelope_loss(limit, resource),
        })
    }
}

/// Draw a fresh 64-bit seed from a generator (used to give each trial its
/// own population).
pub fn child_seed<R: RngCore + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
