//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line with its
//! measurements; the process exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hyperband_cli::brackets::BracketTable;
use hyperband_core::baselines::{random_search, uniform_allocation};
use hyperband_core::evaluator::{
    parse_log, ArmState, BudgetLedger, Evaluator, LogLine, Loss, RungTag, TrainerOracle, TrialLog,
    TrialStatus,
};
use hyperband_core::hyperband::{
    compute_brackets, hyperband_infinite, hyperband_practical, HyperbandParams, RoundIncumbent,
    SyntheticArms,
};
use hyperband_core::niab_sim::{
    draw_limits, make_adversarial_instance, EnvelopeSign, Noise, SimulatedOracle, TheoryInstance,
};
use hyperband_core::sha::{rung_schedule_to, sha_finite_theoretical, sha_infinite};
use hyperband_core::theory_oracles::{
    ceil_log2, gap_sum, h_complexity_at_boundary, lower_budget, z_sh_finite, z_sh_infinite,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn arms(ids: impl IntoIterator<Item = u64>) -> Vec<ArmState> {
    ids.into_iter().map(ArmState::synthetic).collect()
}

fn tag() -> RungTag {
    RungTag::default()
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

// 1 ------------------------------------------------------------------------

fn bracket_fidelity() -> Check {
    let out = Command::new(env!("CARGO_BIN_EXE_hyperband"))
        .args(["brackets", "81", "3", "--json"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("brackets exited with {}", out.status))?;
    let table: BracketTable = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;

    // Published table: (s, n_i per rung, r_i per rung).
    let published: [(u32, &[u64], &[u64]); 5] = [
        (4, &[81, 27, 9, 3, 1], &[1, 3, 9, 27, 81]),
        (3, &[27, 9, 3, 1], &[3, 9, 27, 81]),
        (2, &[9, 3, 1], &[9, 27, 81]),
        (1, &[6, 2], &[27, 81]),
        (0, &[5], &[81]),
    ];
    for (s, ns, rs) in published {
        let sched = rung_schedule_to(ns[0], 81.0 / 3f64.powi(s as i32), s, 3.0, 81).map_err(|e| e.to_string())?;
        let got_n: Vec<u64> = sched.entries.iter().map(|r| r.arms).collect();
        let got_r: Vec<u64> = sched.entries.iter().map(|r| r.resource).collect();
        ensure(got_n == ns && got_r == rs, || format!("s={s}: schedule {got_n:?}/{got_r:?}"))?;
    }
    // Full columns for s = 4 and s = 0 from the command itself.
    for (s, ns, rs) in [published[0], published[4]] {
        let col = table.brackets.iter().find(|b| b.s == s).ok_or(format!("no column s={s}"))?;
        let got_n: Vec<u64> = col.rungs.iter().map(|r| r.n_i).collect();
        let got_r: Vec<u64> = col.rungs.iter().map(|r| r.r_i).collect();
        ensure(got_n == ns && got_r == rs, || format!("column s={s}: {got_n:?}/{got_r:?}"))?;
    }
    // n = ⌈5·3^s/(s+1)⌉ by hand: 135/4, 45/3, 15/2.
    let hand = [(3, 34), (2, 15), (1, 8)];
    for (s, n) in hand {
        let integer = (5 * 3u64.pow(s) + s as u64) / (s as u64 + 1);
        ensure(integer == n, || format!("hand oracle disagrees at s={s}"))?;
        let col = table.brackets.iter().find(|b| b.s == s).ok_or(format!("no column s={s}"))?;
        ensure(col.n == n, || format!("s={s}: n={} expected {n}", col.n))?;
    }
    ensure(table.brackets.len() == 5 && table.total_cost == 1902, || {
        format!("{} columns, total cost {}", table.brackets.len(), table.total_cost)
    })?;
    Ok("5 columns; s=4 and s=0 exact; n = 34, 15, 8".into())
}

// 2 ------------------------------------------------------------------------

fn budget_safety() -> Check {
    let mut brackets = 0;
    for r in [27u64, 81, 243, 729] {
        for eta in [2.0, 3.0, 4.0] {
            let params = HyperbandParams::new(r).eta(eta);
            let b = params.bracket_budget();
            for plan in compute_brackets(&params).map_err(|e| e.to_string())? {
                let cost = plan.schedule.full_cost();
                ensure(cost <= b + r, || format!("R={r} η={eta} s={}: cost {cost} > B+R = {}", plan.s, b + r))?;
                brackets += 1;
            }
        }
    }
    let inst = TheoryInstance::beta_continuous(1.5, 1.0, 11).with_sign(EnvelopeSign::Alternating);
    let oracle = SimulatedOracle::new(inst).map_err(|e| e.to_string())?;
    let mut grid = 0;
    for n in [2u64, 3, 5, 8, 13, 21, 34, 55, 89, 144] {
        let floor = n * ceil_log2(n) as u64;
        for mult in [1.0, 1.7, 3.0, 10.0, 37.5] {
            let budget = (floor as f64 * mult).ceil() as u64;
            let ledger = BudgetLedger::unlimited();
            let log = TrialLog::disabled();
            let ev = Evaluator::new(&oracle, &ledger, &log);
            let res = sha_infinite(arms(0..n), budget, &ev, tag()).map_err(|e| e.to_string())?;
            ensure(ledger.consumed() <= budget && res.ledger_consumed <= budget, || {
                format!("n={n} B={budget}: {} pulls", ledger.consumed())
            })?;
            grid += 1;
        }
    }
    Ok(format!("{brackets} brackets within B+R; {grid} infinite-horizon runs within B"))
}

// 3, 4 -----------------------------------------------------------------------

struct EnvelopeCase {
    instance: TheoryInstance,
    limits: Vec<f64>,
    epsilon: f64,
}

fn envelope_case(rng: &mut ChaCha8Rng, horizon: Option<u64>) -> Result<EnvelopeCase, String> {
    let n = rng.random_range(2..=64usize);
    let alpha = rng.random_range(0.5..=4.0);
    let beta = rng.random_range(0.5..=4.0);
    let epsilon = (rng.random_range(0.02f64.ln()..=0.5f64.ln())).exp();
    let sign = [EnvelopeSign::Plus, EnvelopeSign::Alternating, EnvelopeSign::Plateau][rng.random_range(0..3)];
    let instance = TheoryInstance::beta_continuous(alpha, beta, rng.random())
        .with_sign(sign)
        .with_horizon(horizon);
    let limits = draw_limits(&instance, rng, n).map_err(|e| e.to_string())?;
    Ok(EnvelopeCase {
        instance,
        limits,
        epsilon,
    })
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn infinite_guarantee() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51a1);
    let mut ok = 0;
    for t in 0..200 {
        let case = envelope_case(&mut rng, None)?;
        let s = sorted(&case.limits);
        let z = z_sh_infinite(&s, case.instance.alpha, case.epsilon).map_err(|e| e.to_string())?;
        let budget = 2 * z.value;
        let oracle = SimulatedOracle::with_limits(case.instance.clone(), case.limits.clone()).map_err(|e| e.to_string())?;
        let ledger = BudgetLedger::unlimited();
        let log = TrialLog::disabled();
        let ev = Evaluator::new(&oracle, &ledger, &log);
        let res = sha_infinite(arms(0..case.limits.len() as u64), budget, &ev, tag()).map_err(|e| e.to_string())?;
        let gap = case.limits[res.best_arm.id as usize] - s[0];
        if gap <= case.epsilon {
            ok += 1;
        } else {
            eprintln!("  instance {t}: gap {gap} > ε {} ({:?})", case.epsilon, case.instance);
        }
    }
    ensure(ok == 200, || format!("{ok}/200 within ε"))?;
    Ok("200/200 within ε".into())
}

fn finite_guarantee() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf1e1);
    let mut ok = 0;
    for t in 0..200 {
        let (r, eta) = if t % 2 == 0 { (16u64, 2.0) } else { (81, 3.0) };
        let case = envelope_case(&mut rng, Some(r))?;
        let s = sorted(&case.limits);
        let z = z_sh_finite(&s, case.instance.alpha, case.epsilon, r, eta).map_err(|e| e.to_string())?;
        let budget = (2.0 * z).ceil() as u64;
        let oracle = SimulatedOracle::with_limits(case.instance.clone(), case.limits.clone()).map_err(|e| e.to_string())?;
        let ledger = BudgetLedger::unlimited();
        let log = TrialLog::disabled();
        let ev = Evaluator::new(&oracle, &ledger, &log);
        let res = sha_finite_theoretical(arms(0..case.limits.len() as u64), budget, r, eta, &ev, tag())
            .map_err(|e| format!("instance {t}: {e}"))?;
        let gap = case.limits[res.best_arm.id as usize] - s[0];
        if gap <= case.epsilon {
            ok += 1;
        } else {
            eprintln!("  instance {t}: gap {gap} > ε {} ({:?})", case.epsilon, case.instance);
        }
    }
    ensure(ok == 200, || format!("{ok}/200 within ε"))?;
    Ok("200/200 within ε (R = 16, η = 2 and R = 81, η = 3)".into())
}

// 5 ------------------------------------------------------------------------

fn complexity_bound() -> Check {
    let (n, delta) = (100u64, 0.1);
    let inst = TheoryInstance::beta_continuous(1.0, 1.0, 0);
    let (epsilon, h) = h_complexity_at_boundary(&inst, n, delta).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e22);
    let mut within = 0;
    for _ in 0..1000 {
        let limits = sorted(&draw_limits(&inst, &mut rng, n as usize).map_err(|e| e.to_string())?);
        let sum = gap_sum(&limits, inst.alpha, epsilon, None).map_err(|e| e.to_string())?;
        if sum as f64 <= h {
            within += 1;
        }
    }
    ensure(within >= 900, || format!("{within}/1000 below H = {h:.1}"))?;
    Ok(format!("{within}/1000 populations below H = {h:.1} (ε = {epsilon:.4})"))
}

// 6 ------------------------------------------------------------------------

const GAPS: [f64; 5] = [0.4, 0.3, 0.2, 0.15, 0.1];
const MAX_ARMS: u64 = 1 << 16;
const MAX_BUDGET: u64 = 1 << 34;

/// Smallest budget on a geometric grid at which some power-of-two arm count
/// reaches each target regret. `run(n, B)` returns the regret of one run, or
/// `None` when `(n, B)` is not a valid input.
fn minimal_budgets(mut run: impl FnMut(u64, u64) -> Option<f64>) -> [Option<u64>; 5] {
    let mut found = [None; 5];
    let mut budget = 2.0f64;
    while found.iter().any(Option::is_none) && (budget as u64) <= MAX_BUDGET {
        let b = budget as u64;
        let mut n = 1;
        while n <= MAX_ARMS && n <= b {
            if let Some(regret) = run(n, b) {
                for (slot, gap) in found.iter_mut().zip(GAPS) {
                    if slot.is_none() && regret <= gap {
                        *slot = Some(b);
                    }
                }
            }
            n *= 2;
        }
        budget = (budget * 1.2).max(budget + 1.0);
    }
    found
}

struct ScalingCase {
    uniform: Vec<[Option<u64>; 5]>,
    sha: Vec<[Option<u64>; 5]>,
}

fn scaling_case(alpha: f64, beta: f64, trials: u64) -> ScalingCase {
    let mut out = ScalingCase {
        uniform: Vec::new(),
        sha: Vec::new(),
    };
    for t in 0..trials {
        let inst = TheoryInstance::beta_continuous(alpha, beta, 0x5ca1e + t).with_sign(EnvelopeSign::Plateau);
        let oracle = SimulatedOracle::new(inst).expect("valid instance");
        let ledger = BudgetLedger::unlimited();
        let log = TrialLog::disabled();
        let ev = Evaluator::new(&oracle, &ledger, &log);
        out.uniform.push(minimal_budgets(|n, b| {
            let res = uniform_allocation(arms(0..n), b, None, &ev).ok()?;
            oracle.regret(res.best_arm.id)
        }));
        out.sha.push(minimal_budgets(|n, b| {
            if n < 2 || b < n * ceil_log2(n) as u64 {
                return None;
            }
            let res = sha_infinite(arms(0..n), b, &ev, tag()).ok()?;
            oracle.regret(res.best_arm.id)
        }));
    }
    out
}

fn median_curve(runs: &[[Option<u64>; 5]]) -> Vec<(f64, f64)> {
    GAPS.iter()
        .enumerate()
        .map(|(i, &gap)| {
            let v: Vec<f64> = runs
                .iter()
                .map(|r| r[i].map_or(f64::INFINITY, |b| b as f64))
                .collect();
            (gap, median(v))
        })
        .collect()
}

fn scaling_laws() -> Check {
    let mut report = Vec::new();
    let mut failures = Vec::new();
    for (alpha, beta) in [(2.0, 2.0), (1.0, 3.0)] {
        let case = scaling_case(alpha, beta, 50);
        let uni = median_curve(&case.uniform);
        let sha = median_curve(&case.sha);
        let su = log_log_slope(&uni);
        let ss = log_log_slope(&sha);
        let (eu, es) = (-(alpha + beta), -f64::max(alpha, beta));
        let last = GAPS.len() - 1;
        let wins = case
            .uniform
            .iter()
            .zip(&case.sha)
            .filter(|(u, s)| match (u[last], s[last]) {
                (Some(u), Some(s)) => s < u,
                (None, Some(_)) => true,
                _ => false,
            })
            .count();
        let line = format!(
            "(α, β) = ({alpha}, {beta}): uniform slope {su:.2} (target {eu}), SHA slope {ss:.2} (target {es}), SHA cheaper at Δ=0.1 in {wins}/50; medians uniform {:?} SHA {:?}",
            uni.iter().map(|p| p.1).collect::<Vec<_>>(),
            sha.iter().map(|p| p.1).collect::<Vec<_>>()
        );
        if (su - eu).abs() > 0.4 || (ss - es).abs() > 0.4 || wins < 45 {
            failures.push(line.clone());
        }
        report.push(line);
    }
    if failures.is_empty() {
        Ok(report.join("; "))
    } else {
        Err(report.join("; "))
    }
}

// 7 ------------------------------------------------------------------------

fn stochastic_anytime() -> Check {
    let cap = 1_000_000u64;
    let grid: Vec<u64> = (0..=10).map(|i| (1e5 * 10f64.powf(i as f64 / 10.0)).round() as u64).collect();
    let mut report = Vec::new();
    let mut ok = true;
    for beta in [1.0, 3.0] {
        let mut per_point: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
        for seed in 0..20 {
            let inst = TheoryInstance::stochastic(beta, Noise::Bernoulli, 0xb0 + seed);
            let oracle = SimulatedOracle::new(inst).map_err(|e| e.to_string())?;
            let ledger = BudgetLedger::with_cap(cap);
            let log = TrialLog::disabled();
            let ev = Evaluator::new(&oracle, &ledger, &log);
            let run = hyperband_infinite(&mut SyntheticArms, 40, &ev, RoundIncumbent::EmpiricalBest)
                .map_err(|e| e.to_string())?;
            ensure(run.truncated && run.consumed <= cap, || format!("run not stopped by the cap: {}", run.consumed))?;
            for (slot, &u) in per_point.iter_mut().zip(&grid) {
                let p = run.incumbent_at(u).ok_or(format!("no incumbent at {u}"))?;
                slot.push(oracle.regret(p.arm_id).expect("known arm"));
            }
        }
        let curve: Vec<(f64, f64)> = grid.iter().zip(per_point).map(|(&u, v)| (u as f64, median(v))).collect();
        let slope = log_log_slope(&curve);
        let target = -1.0 / f64::max(2.0, beta);
        ok &= (slope - target).abs() <= 0.5;
        report.push(format!(
            "β = {beta}: slope {slope:.3} (target {target:.3}), median regret {:.4} → {:.4}",
            curve[0].1,
            curve[curve.len() - 1].1
        ));
    }
    if ok {
        Ok(report.join("; "))
    } else {
        Err(report.join("; "))
    }
}

// 8 ------------------------------------------------------------------------

fn practical_dominance() -> Check {
    let params = HyperbandParams::new(81).eta(3.0);
    let equal_budget = 5 * params.bracket_budget();
    let random_arms = equal_budget / 81;
    let mut wins = 0;
    let mut hb_consumed = 0;
    for seed in 0..100u64 {
        let inst = TheoryInstance::beta_continuous(2.0, 2.0, 0x8000 + seed);
        let oracle = SimulatedOracle::new(inst).map_err(|e| e.to_string())?;
        let log = TrialLog::disabled();

        let ledger = BudgetLedger::unlimited();
        let ev = Evaluator::new(&oracle, &ledger, &log);
        let run = hyperband_practical(&params, &mut SyntheticArms, &ev).map_err(|e| e.to_string())?;
        let hb = run.incumbent.ok_or("no incumbent")?;
        hb_consumed = ledger.consumed();

        // Fresh draws from the same population.
        let ledger = BudgetLedger::unlimited();
        let ev = Evaluator::new(&oracle, &ledger, &log);
        let rs = random_search(arms((0..random_arms).map(|i| (1 << 32) + i)), 81, &ev).map_err(|e| e.to_string())?;

        if oracle.regret(hb.arm.id) <= oracle.regret(rs.best_arm.id) {
            wins += 1;
        }
    }
    ensure(wins >= 70, || format!("Hyperband no worse in {wins}/100 pairs"))?;
    Ok(format!(
        "Hyperband no worse in {wins}/100 pairs (Hyperband {hb_consumed} units, random search {random_arms} arms = {} units)",
        random_arms * 81
    ))
}

// 9 ------------------------------------------------------------------------

fn lower_bound_construction() -> Check {
    let (n, delta) = (50usize, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(0xadd);
    let base = TheoryInstance::beta_continuous(1.0, 1.0, 0);
    let expected_budget = lower_budget(&base, n as u64, delta).map_err(|e| e.to_string())?;
    let mut violations = 0;
    let mut threshold = 0;
    for _ in 0..500 {
        let adv = make_adversarial_instance(n, delta, 1.0, 1.0, &mut rng).map_err(|e| e.to_string())?;
        threshold = adv.threshold_budget;
        ensure(threshold == expected_budget, || format!("threshold {threshold} vs lower_budget {expected_budget}"))?;
        let oracle = SimulatedOracle::adversarial(&adv);
        let ledger = BudgetLedger::unlimited();
        let log = TrialLog::disabled();
        let ev = Evaluator::new(&oracle, &ledger, &log);
        let res = uniform_allocation(arms(0..n as u64), threshold, None, &ev).map_err(|e| e.to_string())?;
        let regret = adv.limits[res.best_arm.id as usize] - adv.instance.nu_star;
        if regret > 2.0 * (adv.center - adv.instance.nu_star) {
            violations += 1;
        }
    }
    let freq = violations as f64 / 500.0;
    ensure(freq >= delta / 2.0, || format!("violation frequency {freq}"))?;
    Ok(format!("violation frequency {freq:.3} ≥ {} at B = {threshold}", delta / 2.0))
}

// 10 -----------------------------------------------------------------------

fn strip_times(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).expect("log line is JSON");
            if let Some(obj) = v.as_object_mut() {
                obj.remove("timestamp");
                obj.remove("wall_millis");
            }
            v.to_string()
        })
        .collect()
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let table: BTreeMap<String, BTreeMap<String, f64>> = (0..160u64)
        .map(|arm| {
            let curve = [1u64, 3, 9, 27, 81]
                .iter()
                .map(|&r| (r.to_string(), ((arm * 7919 + 13) % 101) as f64 / 101.0 + 1.0 / r as f64))
                .collect();
            (arm.to_string(), curve)
        })
        .collect();
    let table_path = dir.path().join("replay.json");
    std::fs::write(&table_path, serde_json::to_string(&table).unwrap()).map_err(|e| e.to_string())?;

    let bin = env!("CARGO_BIN_EXE_hyperband");
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let status = Command::new(bin)
        .args(["tune", "--R", "81", "--seed", "42", "--max-parallel", "4", "--replay"])
        .arg(&table_path)
        .arg("--out")
        .arg(&first)
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("first run exited with {status}"))?;
    let status = Command::new(bin)
        .args(["tune", "--manifest"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&second)
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || format!("second run exited with {status}"))?;

    let read = |p: &Path| std::fs::read_to_string(p.join("trials.jsonl")).map_err(|e| e.to_string());
    let (a, b) = (read(&first)?, read(&second)?);
    let (la, lb) = (strip_times(&a), strip_times(&b));
    ensure(!la.is_empty() && la == lb, || "trial logs differ".into())?;
    Ok(format!("{} log lines identical", la.len()))
}

// 11 -----------------------------------------------------------------------

fn protocol_conformance() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let command = vec![
        env!("CARGO_BIN_EXE_hyperband-stub-trainer").to_string(),
        "--mode".into(),
        "mixed".into(),
        "--sleep-secs".into(),
        "30".into(),
    ];
    let oracle = TrainerOracle::new(&command, dir.path().join("checkpoints"))
        .map_err(|e| e.to_string())?
        .timeout(Some(Duration::from_millis(1500)));
    let ledger = BudgetLedger::unlimited();
    let log = TrialLog::in_memory();
    let ev = Evaluator::new(&oracle, &ledger, &log).max_parallel(4);
    let mut batch = arms(0..4);
    let losses = ev.evaluate_rung(&mut batch, 5, tag()).map_err(|e| e.to_string())?;

    // arm_id % 4: success, nonzero exit, garbage output, timeout.
    ensure(losses[0] == Loss::Finite(0.2), || format!("success loss {:?}", losses[0]))?;
    ensure(losses[1..].iter().all(|l| l.is_failed()), || format!("failure losses {losses:?}"))?;
    let trials = log.trials();
    let statuses: Vec<TrialStatus> = trials.iter().map(|t| t.status).collect();
    let expected = [
        TrialStatus::Completed,
        TrialStatus::Failed,
        TrialStatus::Failed,
        TrialStatus::Timeout,
    ];
    ensure(statuses == expected, || format!("statuses {statuses:?}"))?;
    ensure(trials.iter().all(|t| t.charged == 5 && t.resource == 5), || "each trial charges its level".into())?;
    ensure(ledger.consumed() == 20, || format!("ledger {}", ledger.consumed()))?;

    // Resume the surviving arm: full accounting charges the whole level.
    let mut survivor = vec![batch[0].clone()];
    ev.evaluate_rung(&mut survivor, 9, tag()).map_err(|e| e.to_string())?;
    ensure(ledger.consumed() == 29, || format!("ledger after resume {}", ledger.consumed()))?;
    let progress = std::fs::read_to_string(dir.path().join("checkpoints").join("arm_0").join("progress"))
        .map_err(|e| e.to_string())?;
    ensure(progress.trim() == "9", || format!("checkpoint progress {progress:?}"))?;

    let (lines, corrupt) = parse_log(&log.take_lines().iter().map(|l| serde_json::to_string(l).unwrap() + "\n").collect::<String>());
    ensure(corrupt.is_empty() && lines.iter().all(|l| matches!(l, LogLine::Trial(_))), || "log round trip".into())?;
    Ok("completed / failed / failed / timeout, 5 units each; resume charged 9".into())
}

// --------------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Check); 11] = [
        (1, "bracket fidelity", Duration::from_secs(1), bracket_fidelity),
        (2, "budget safety", Duration::from_secs(5), budget_safety),
        (3, "infinite-horizon SHA guarantee", Duration::from_secs(60), infinite_guarantee),
        (4, "finite-horizon SHA guarantee", Duration::from_secs(60), finite_guarantee),
        (5, "complexity bound", Duration::from_secs(60), complexity_bound),
        (6, "budget scaling", Duration::from_secs(600), scaling_laws),
        (7, "stochastic anytime behavior", Duration::from_secs(600), stochastic_anytime),
        (8, "practical dominance", Duration::from_secs(300), practical_dominance),
        (9, "lower-bound construction", Duration::from_secs(60), lower_bound_construction),
        (10, "end-to-end determinism", Duration::from_secs(5), determinism),
        (11, "protocol conformance", Duration::from_secs(10), protocol_conformance),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (pass, detail) = match result {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; took {took:.1?}, limit {limit:?}")),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<32} {} ({took:.2?}): {detail}",
            name,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
