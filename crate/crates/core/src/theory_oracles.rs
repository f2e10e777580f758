//! Budget and complexity formulas for SuccessiveHalving and uniform
//! allocation under the envelope model `γ(j) = j^(-1/α)`.
//!
//! These are pure functions. They serve as independent references for
//! property tests and are exposed through the `oracle` command.

use serde::Serialize;
use thiserror::Error;

use crate::niab_sim::{gamma, Family, TheoryInstance};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TheoryError {
    #[error("γ^{{-1}}({0}) is undefined without a finite horizon")]
    ZeroArgument(f64),
    #[error("γ^{{-1}}({y}) exceeds the representable range")]
    Overflow { y: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("ε = {epsilon} is below the complexity bound's domain (needs ε ≥ {minimum})")]
    OutsideDomain { epsilon: f64, minimum: f64 },
    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
}

const MAX_INDEX: f64 = (1u64 << 53) as f64;

/// `γ^{-1}(y) = min{j ≥ 1 : γ(j) ≤ y}` for `γ(j) = j^(-1/α)`.
///
/// With a horizon `R`, `γ(j) = 0` for `j ≥ R`, so the result is at most `R`
/// and `γ^{-1}(0) = R`.
pub fn gamma_inv(alpha: f64, y: f64, horizon: Option<u64>) -> Result<u64, TheoryError> {
    if !(alpha > 0.0) {
        return Err(TheoryError::Invalid(format!("alpha must be positive, got {alpha}")));
    }
    if y.is_nan() {
        return Err(TheoryError::Invalid("γ^{-1} of NaN".into()));
    }
    if y <= 0.0 {
        return horizon.ok_or(TheoryError::ZeroArgument(y));
    }
    if y >= 1.0 {
        return Ok(1);
    }
    let guess = y.powf(-alpha).ceil();
    if guess > MAX_INDEX {
        return match horizon {
            Some(r) => Ok(r),
            None => Err(TheoryError::Overflow { y }),
        };
    }
    // Correct the float guess to the exact minimal index.
    let mut j = (guess as u64).max(1);
    while j > 1 && gamma(alpha, j - 1, None) <= y {
        j -= 1;
    }
    while gamma(alpha, j, None) > y {
        j += 1;
    }
    Ok(horizon.map_or(j, |r| j.min(r)))
}

fn check_sorted(limits: &[f64]) -> Result<(), TheoryError> {
    if limits.windows(2).any(|w| w[0] > w[1]) || limits.iter().any(|x| !x.is_finite()) {
        return Err(TheoryError::Invalid("limits must be finite and sorted ascending".into()));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<(), TheoryError> {
    if !(epsilon > 0.0) {
        return Err(TheoryError::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// `γ^{-1}(max{ε/4, (ν_i - ν_1)/2})` for every arm, `ν_1` included.
fn gap_terms(
    limits: &[f64],
    alpha: f64,
    epsilon: f64,
    horizon: Option<u64>,
) -> Result<Vec<u64>, TheoryError> {
    limits
        .iter()
        .map(|&nu| gamma_inv(alpha, (epsilon / 4.0).max((nu - limits[0]) / 2.0), horizon))
        .collect()
}

/// Infinite-horizon SuccessiveHalving budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InfiniteBudget {
    /// `2⌈log2 n⌉ max_{i≥2} i (1 + γ^{-1}(max{ε/4, (ν_i - ν_1)/2}))`.
    pub value: u64,
    /// `2⌈log2 n⌉ (n + Σ_{i≥2} γ^{-1}(...))`, the looser form as usually
    /// stated. It is not always an upper bound on `value`: for `n = 2` it
    /// equals `2 + g_2` while `value` is `2 + 2 g_2`.
    pub sum_form: u64,
    /// `2⌈log2 n⌉ (n + Σ_{i≥1} γ^{-1}(...))`, which does bound `value`
    /// because the terms are non-increasing in `i`.
    pub sum_form_all_arms: u64,
}

pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Sufficient budget for infinite-horizon SuccessiveHalving to return an arm
/// within `ε` of the best of `limits` (sorted ascending).
pub fn z_sh_infinite(limits: &[f64], alpha: f64, epsilon: f64) -> Result<InfiniteBudget, TheoryError> {
    if limits.len() < 2 {
        return Err(TheoryError::Invalid("need at least two arms".into()));
    }
    check_sorted(limits)?;
    check_epsilon(epsilon)?;
    let g = gap_terms(limits, alpha, epsilon, None)?;
    let n = limits.len() as u64;
    let rounds = 2 * ceil_log2(n) as u64;
    let max_term = (2..=n)
        .map(|i| i * (1 + g[(i - 1) as usize]))
        .max()
        .expect("n ≥ 2");
    let tail: u64 = g[1..].iter().sum();
    Ok(InfiniteBudget {
        value: rounds * max_term,
        sum_form: rounds * (n + tail),
        sum_form_all_arms: rounds * (n + tail + g[0]),
    })
}

/// Sufficient budget for finite-horizon SuccessiveHalving:
/// `η log_η(R) [n + max{R, Σ_{i≥2} γ^{-1}(max{ε/4, (ν_i - ν_1)/2})}]` with
/// `γ^{-1}` capped at `R`.
pub fn z_sh_finite(limits: &[f64], alpha: f64, epsilon: f64, max_resource: u64, eta: f64) -> Result<f64, TheoryError> {
    if limits.len() < 2 {
        return Err(TheoryError::Invalid("need at least two arms".into()));
    }
    if max_resource == 0 {
        return Err(TheoryError::Invalid("R must be positive".into()));
    }
    if !(eta >= 2.0) {
        return Err(TheoryError::Invalid(format!("eta must be at least 2, got {eta}")));
    }
    check_sorted(limits)?;
    check_epsilon(epsilon)?;
    let g = gap_terms(limits, alpha, epsilon, Some(max_resource))?;
    let tail: u64 = g[1..].iter().sum();
    let r = max_resource as f64;
    let log_eta_r = r.ln() / eta.ln();
    Ok(eta * log_eta_r * (limits.len() as f64 + r.max(tail as f64)))
}

/// `Σ_{i≥2} γ^{-1}(max{ε/4, (ν_i - ν_1)/2})` over sorted limits.
pub fn gap_sum(limits: &[f64], alpha: f64, epsilon: f64, horizon: Option<u64>) -> Result<u64, TheoryError> {
    check_sorted(limits)?;
    check_epsilon(epsilon)?;
    if limits.is_empty() {
        return Ok(0);
    }
    Ok(gap_terms(limits, alpha, epsilon, horizon)?[1..].iter().sum())
}

/// `p_n = log(2/δ) / n`.
pub fn complexity_quantile(n: u64, delta: f64) -> f64 {
    (2.0 / delta).ln() / n as f64
}

/// Smallest admissible `ε` for [`h_complexity`]: `4(F^{-1}(p_n) - ν*)`.
pub fn complexity_min_epsilon(instance: &TheoryInstance, n: u64, delta: f64) -> f64 {
    4.0 * (instance.inverse_cdf(complexity_quantile(n, delta)) - instance.optimum())
}

fn check_delta(delta: f64) -> Result<(), TheoryError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::Invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_instance(instance: &TheoryInstance) -> Result<(), TheoryError> {
    instance.validate().map_err(|e| TheoryError::Invalid(e.to_string()))
}

/// Bound on the elimination cost of suboptimal arms among `n` random draws:
///
/// `H = 2n ∫_{ν*+ε/4} γ^{-1}((t - ν*)/4) dF(t) + (4/3 log(2/δ) + 2n F(ν*+ε/4)) γ^{-1}(ε/16)`.
pub fn h_complexity(instance: &TheoryInstance, n: u64, delta: f64, epsilon: f64) -> Result<f64, TheoryError> {
    check_instance(instance)?;
    check_delta(delta)?;
    if n == 0 {
        return Err(TheoryError::Invalid("n must be positive".into()));
    }
    let minimum = complexity_min_epsilon(instance, n, delta);
    // tolerate rounding when called with exactly the boundary value
    if !(epsilon >= minimum * (1.0 - 1e-12)) || !(epsilon > 0.0) {
        return Err(TheoryError::OutsideDomain { epsilon, minimum });
    }
    let alpha = instance.alpha;
    let nu_star = instance.optimum();
    let integral = match instance.family {
        Family::Discrete => {
            let k = instance.means.len() as f64;
            let mut sum = 0.0;
            for &mu in instance.means.iter().filter(|&&mu| mu > nu_star + epsilon / 4.0) {
                sum += gamma_inv(alpha, (mu - nu_star) / 4.0, None)? as f64;
            }
            sum / k
        }
        _ => beta_envelope_integral(alpha, instance.beta, epsilon / 4.0)?,
    };
    let tail = gamma_inv(alpha, epsilon / 16.0, None)? as f64;
    let nf = n as f64;
    Ok(2.0 * nf * integral
        + (4.0 / 3.0 * (2.0 / delta).ln() + 2.0 * nf * instance.cdf(nu_star + epsilon / 4.0)) * tail)
}

/// [`h_complexity`] at the boundary `ε = 4(F^{-1}(p_n) - ν*)`. Returns `(ε, H)`.
pub fn h_complexity_at_boundary(instance: &TheoryInstance, n: u64, delta: f64) -> Result<(f64, f64), TheoryError> {
    check_delta(delta)?;
    let epsilon = complexity_min_epsilon(instance, n, delta);
    Ok((epsilon, h_complexity(instance, n, delta, epsilon)?))
}

/// Pieces summed exactly before switching to quadrature.
const EXACT_PIECES: u64 = 1 << 20;

/// `∫_{lower}^{1} γ^{-1}(u/4) β u^{β-1} du`.
///
/// `γ^{-1}(u/4)` is a step function. Where it is below [`EXACT_PIECES`] each
/// step's probability mass is summed in closed form. Closer to zero, where
/// steps are too many to enumerate, the step function is replaced by
/// `(u/4)^{-α} + 1/2`, which is within 1/2 of it, and integrated by adaptive
/// Simpson in log-space. The substitution error is below `1/(2·EXACT_PIECES)`
/// relative.
fn beta_envelope_integral(alpha: f64, beta: f64, lower: f64) -> Result<f64, TheoryError> {
    if lower >= 1.0 {
        return Ok(0.0);
    }
    let cut = 4.0 * (EXACT_PIECES as f64).powf(-1.0 / alpha);
    let mass = |a: f64, b: f64| b.powf(beta) - a.powf(beta);

    let mut total = 0.0;
    // Exact part on [max(lower, cut), 1].
    let lo = lower.max(cut);
    if lo < 1.0 {
        let m_first = gamma_inv(alpha, 0.25, None)?;
        let m_last = gamma_inv(alpha, lo / 4.0, None)?;
        for m in m_first..=m_last {
            // γ^{-1}(u/4) = m exactly on u ∈ [4 m^{-1/α}, 4 (m-1)^{-1/α})
            let a = 4.0 * (m as f64).powf(-1.0 / alpha);
            let b = if m == 1 {
                f64::INFINITY
            } else {
                4.0 * ((m - 1) as f64).powf(-1.0 / alpha)
            };
            let (a, b) = (a.max(lo), b.min(1.0));
            if b > a {
                total += m as f64 * mass(a, b);
            }
        }
    }
    // Smooth part on [lower, min(cut, 1)].
    let hi = cut.min(1.0);
    if lower < hi {
        let f = |s: f64| {
            let u = s.exp();
            ((u / 4.0).powf(-alpha) + 0.5) * beta * u.powf(beta - 1.0) * u
        };
        total += adaptive_simpson(f, lower.ln(), hi.ln(), 1e-9)?;
    }
    Ok(total)
}

/// Adaptive Simpson quadrature with a relative tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64, TheoryError> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fm, fb) = (f(a), f((a + b) / 2.0), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 60)
        .ok_or(TheoryError::Quadrature { a, b })
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return None;
    }
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
    )
}

/// `F^{-1}(log(1/δ)/n) - ν*`: with enough budget uniform allocation returns
/// an arm within twice this of the optimum.
pub fn uniform_target(instance: &TheoryInstance, n: u64, delta: f64) -> Result<f64, TheoryError> {
    check_instance(instance)?;
    check_delta(delta)?;
    if n == 0 {
        return Err(TheoryError::Invalid("n must be positive".into()));
    }
    Ok(instance.inverse_cdf((1.0 / delta).ln() / n as f64) - instance.optimum())
}

/// `n γ^{-1}((F^{-1}(log(1/δ)/n) - ν*)/2)`.
pub fn uniform_budget(instance: &TheoryInstance, n: u64, delta: f64) -> Result<u64, TheoryError> {
    let target = uniform_target(instance, n, delta)?;
    if !(target > 0.0) {
        return Err(TheoryError::Invalid(format!(
            "F^{{-1}}(log(1/δ)/n) - ν* = {target} leaves no positive envelope argument"
        )));
    }
    Ok(n * gamma_inv(instance.alpha, target / 2.0, instance.horizon)?)
}

/// Regularity constant `c = 1 - 2^{-β}` of the lower-bound construction.
pub fn regularity_constant(beta: f64) -> f64 {
    1.0 - 2f64.powf(-beta)
}

/// `F^{-1}(log(c/δ)/(n + log(c/δ))) - ν*` for the continuous family.
pub fn lower_target(instance: &TheoryInstance, n: u64, delta: f64) -> Result<f64, TheoryError> {
    check_instance(instance)?;
    check_delta(delta)?;
    if instance.family == Family::Discrete {
        return Err(TheoryError::Invalid(
            "the lower bound's regularity constant is defined for the continuous family".into(),
        ));
    }
    let l = (regularity_constant(instance.beta) / delta).ln();
    if !(l > 0.0) {
        return Err(TheoryError::Invalid(format!("log(c/δ) = {l} is not positive")));
    }
    Ok(instance.inverse_cdf(l / (n as f64 + l)) - instance.optimum())
}

/// `n γ^{-1}(2(F^{-1}(log(c/δ)/(n + log(c/δ))) - ν*))`.
pub fn lower_budget(instance: &TheoryInstance, n: u64, delta: f64) -> Result<u64, TheoryError> {
    let target = lower_target(instance, n, delta)?;
    Ok(n * gamma_inv(instance.alpha, 2.0 * target, instance.horizon)?)
}

/// Budget growth as the target regret `Δ` shrinks, constants set to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPrediction {
    /// `Δ^{-(α+β)} log(1/δ)`.
    pub uniform_budget: f64,
    /// `log2(Δ^{-β} log(1/δ)) [Δ^{-α} + (Δ^{-β} - Δ^{-α})/(1 - α/β)] log(1/δ)`.
    pub sha_budget: f64,
    /// `Δ^{-max{α,β}} log(1/δ)`, without logarithmic factors.
    pub sha_power: f64,
    pub uniform_exponent: f64,
    pub sha_exponent: f64,
}

pub fn scaling_predictions(alpha: f64, beta: f64, gap: f64, delta: f64) -> Result<ScalingPrediction, TheoryError> {
    if !(gap > 0.0 && gap < 1.0) {
        return Err(TheoryError::Invalid(format!("Δ must lie in (0, 1), got {gap}")));
    }
    check_delta(delta)?;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(TheoryError::Invalid("alpha and beta must be positive".into()));
    }
    let log_term = (1.0 / delta).ln();
    let (da, db) = (gap.powf(-alpha), gap.powf(-beta));
    // (Δ^{-β} - Δ^{-α}) / (1 - α/β) tends to β log(1/Δ) Δ^{-β} as α → β.
    let ratio = if (alpha - beta).abs() < 1e-9 {
        beta * (1.0 / gap).ln() * db
    } else {
        (db - da) / (1.0 - alpha / beta)
    };
    Ok(ScalingPrediction {
        uniform_budget: gap.powf(-(alpha + beta)) * log_term,
        sha_budget: (db * log_term).log2().max(1.0) * (da + ratio) * log_term,
        sha_power: gap.powf(-alpha.max(beta)) * log_term,
        uniform_exponent: -(alpha + beta),
        sha_exponent: -alpha.max(beta),
    })
}

/// Discrete-family analogs for a top-`q` target, constants set to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscretePrediction {
    pub uniform_budget: f64,
    pub sha_budget: f64,
    /// `Σ_{j≥2} Δ_j^{-α}` (q = 1/K) or `Δ_⌈qK⌉^{-α} + (1/qK) Σ_{j≥⌈qK⌉} Δ_j^{-α}`.
    pub sha_sum: f64,
}

pub fn discrete_predictions(means: &[f64], alpha: f64, delta: f64, q: f64) -> Result<DiscretePrediction, TheoryError> {
    let k = means.len();
    if k < 2 || means.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TheoryError::Invalid("need at least two strictly increasing means".into()));
    }
    check_delta(delta)?;
    let kf = k as f64;
    if !(q > 0.0 && q <= 1.0) || q < 1.0 / kf - 1e-12 {
        return Err(TheoryError::Invalid(format!("q must lie in [1/K, 1], got {q}")));
    }
    let log_term = (1.0 / delta).ln();
    let gap_pow = |j: usize| (means[j - 1] - means[0]).powf(-alpha);
    let top = ((q * kf).ceil() as usize).max(1);
    let (uniform, sha_sum) = if top <= 1 {
        let max = (2..=k).map(gap_pow).fold(0.0, f64::max);
        (kf * max, (2..=k).map(gap_pow).sum::<f64>())
    } else {
        let head = gap_pow(top);
        (head / q, head + (top..=k).map(gap_pow).sum::<f64>() / (q * kf))
    };
    Ok(DiscretePrediction {
        uniform_budget: log_term * uniform,
        sha_budget: (log_term / q).ln().max(1.0) * log_term * sha_sum,
        sha_sum,
    })
}
