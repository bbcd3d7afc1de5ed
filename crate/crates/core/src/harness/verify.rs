//! Acceptance experiments. Each criterion runs a fixed-seed experiment (or
//! an analytic sweep) and reports pass/fail with the measured figures.

use std::fmt;
use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use crate::adversary::AdversaryConfig;
use crate::codes::{LinearCode, LinearRole, Payload};
use crate::engine::{self, LossSource, RoundRecord, Simulation};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::summary::summarize;
use crate::model::{DataPoint, Dataset, Gradient, Parameter, Task};
use crate::policy;

pub const EXACT_TOLERANCE: &str = include_str!("../../configs/acceptance/exact_tolerance.toml");
pub const DETERMINISTIC_NO_FAULTS: &str = include_str!("../../configs/acceptance/deterministic_no_faults.toml");
pub const DETERMINISTIC_WORST_CASE: &str = include_str!("../../configs/acceptance/deterministic_worst_case.toml");
pub const RANDOMIZED_EFFICIENCY: &str = include_str!("../../configs/acceptance/randomized_efficiency.toml");
pub const FAULTY_UPDATES: &str = include_str!("../../configs/acceptance/faulty_updates.toml");
pub const IDENTIFICATION: &str = include_str!("../../configs/acceptance/identification.toml");
pub const ADAPTIVE_BOUNDARY: &str = include_str!("../../configs/acceptance/adaptive_boundary.toml");

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {:<34} {}", self.id, self.name, self.detail)
    }
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "exact fault-tolerance"),
    (2, "deterministic efficiency, no faults"),
    (3, "deterministic worst-case efficiency"),
    (4, "randomized efficiency lower bound"),
    (5, "faulty-update probability"),
    (6, "identification bound"),
    (7, "closed-form fault-check probability"),
    (8, "adaptive boundary behavior"),
    (9, "three-worker linear code"),
    (10, "numerical hygiene"),
];

pub fn run_criterion(id: u8) -> Result<Outcome> {
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .ok_or_else(|| Error::Config(vec![format!("unknown criterion {id}")]))?;
    let (passed, detail) = match id {
        1 => exact_fault_tolerance()?,
        2 => deterministic_no_faults()?,
        3 => deterministic_worst_case()?,
        4 => randomized_efficiency()?,
        5 => faulty_update_probability()?,
        6 => identification_bound()?,
        7 => q_star_closed_form(),
        8 => adaptive_boundary()?,
        9 => linear_code(),
        _ => numerical_hygiene()?,
    };
    Ok(Outcome {
        id,
        name,
        passed,
        detail,
    })
}

/// Criterion numbers named by a suite: `all`, or a comma-separated list.
pub fn suite_ids(suite: &str) -> Result<Vec<u8>> {
    if suite == "all" || suite == "acceptance" {
        return Ok(CRITERIA.iter().map(|(i, _)| *i).collect());
    }
    suite
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(vec![format!("unknown suite {suite:?}")]))
        })
        .collect()
}

pub fn run_suite(suite: &str) -> Result<Vec<Outcome>> {
    suite_ids(suite)?.into_iter().map(run_criterion).collect()
}

fn trajectory(sim: &Simulation<'_>, iterations: u64) -> Result<(Vec<Parameter>, Vec<RoundRecord>)> {
    let mut params = Vec::new();
    let mut records = Vec::new();
    sim.run_with(iterations, |r, s| {
        params.push(s.parameter.clone());
        records.push(r.clone());
        ControlFlow::Continue(())
    })?;
    Ok((params, records))
}

fn exact_fault_tolerance() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::from_toml_str(EXACT_TOLERANCE)?;
    let dataset = cfg.dataset()?;
    let mut clean = cfg.run.clone();
    clean.adversary = AdversaryConfig::none();

    let (attacked, records) = trajectory(&Simulation::new(&cfg.run, &dataset, 0)?, cfg.iterations)?;
    let (reference, _) = trajectory(&Simulation::new(&clean, &dataset, 0)?, cfg.iterations)?;
    let identical = attacked.len() == reference.len()
        && attacked.iter().zip(&reference).all(|(a, b)| a.same_bits(b));
    let dist = attacked.last().map_or(f64::INFINITY, |w| w.distance_to(&dataset.optimum));
    let eliminated = records.last().map_or(0, |r| r.identified_cum);
    Ok((
        identical && dist <= 1e-3,
        format!("trajectory identical = {identical}, final ‖w−w*‖ = {dist:.3e} (≤ 1e-3), eliminated {eliminated}"),
    ))
}

fn deterministic_no_faults() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::from_toml_str(DETERMINISTIC_NO_FAULTS)?;
    let records = cfg.execute()?;
    let target = 1.0 / (cfg.run.f + 1) as f64;
    let rounds: Vec<&RoundRecord> = records.iter().flatten().collect();
    let exact = rounds.iter().all(|r| {
        r.gradients_computed == cfg.run.m * (cfg.run.f + 1) && r.efficiency() == target
    });
    Ok((
        exact,
        format!("{} rounds, every efficiency == 1/(f+1) = {target:.6}: {exact}", rounds.len()),
    ))
}

fn deterministic_worst_case() -> Result<(bool, String)> {
    let base = ExperimentConfig::from_toml_str(DETERMINISTIC_WORST_CASE)?;
    let dataset = base.dataset()?;
    let f = base.run.f;
    let m = base.run.m;

    // First seed whose opening round puts a Byzantine copy on every point.
    let mut cfg = base.run.clone();
    let mut first = None;
    for offset in 0..1000 {
        cfg.seed = base.run.seed + offset;
        let sim = Simulation::new(&cfg, &dataset, 0)?;
        let mut state = sim.initial_state()?;
        let r = sim.run_iteration(&mut state)?;
        if r.suspects == m {
            first = Some(r);
            break;
        }
    }
    let Some(first) = first else {
        return Ok((false, "no seed produced an all-suspect round".into()));
    };
    let worst = 1.0 / (2 * f + 1) as f64;
    let worst_ok = first.efficiency() == worst && first.gradients_computed == m * (2 * f + 1);

    let mut long_ok = true;
    let mut details = Vec::new();
    for p in [1.0, 0.3, 0.05] {
        let mut run = base.run.clone();
        run.adversary = AdversaryConfig::uniform(base.run.adversary.byzantine(), p, run.adversary.strategy.clone())?;
        let (records, _) = Simulation::new(&run, &dataset, 0)?.run(base.iterations)?;
        let reactive = records.iter().filter(|r| r.suspects > 0).count();
        let avg = records.iter().map(RoundRecord::efficiency).sum::<f64>() / records.len() as f64;
        let ok = reactive <= f && avg >= 1.0 / (f + 1) as f64 - 0.01;
        long_ok &= ok;
        details.push(format!("p={p}: {reactive} reactive rounds, mean eff {avg:.4}"));
    }
    Ok((
        worst_ok && long_ok,
        format!(
            "all-suspect round eff = {:.6} (1/(2f+1) = {worst:.6}); {}",
            first.efficiency(),
            details.join("; ")
        ),
    ))
}

fn randomized_efficiency() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::from_toml_str(RANDOMIZED_EFFICIENCY)?;
    let q = policy::q_for_delta(0.1, 2)?;
    let q_exact = q == 0.125 && cfg.run.q == 0.125;
    let summary = summarize(&cfg.execute()?)?;
    let bound = policy::expected_efficiency_bound(cfg.run.q, cfg.run.f)?;
    let eff = summary.mean_efficiency;
    Ok((
        q_exact && (0.9..=1.0).contains(&eff) && eff >= bound,
        format!(
            "q_for_delta(0.1, 2) = {q}; {} rounds, mean efficiency {eff:.5} in [0.9, 1.0] (bound {bound:.5})",
            summary.rounds
        ),
    ))
}

fn faulty_update_probability() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::from_toml_str(FAULTY_UPDATES)?;
    let dataset = cfg.dataset()?;
    let p = 0.5;
    let mut ok = true;
    let mut details = Vec::new();
    for q in [0.0, 0.25, 1.0] {
        let mut run = cfg.run.clone();
        run.q = q;
        let records = engine::run_experiment(&run, &dataset, cfg.iterations, cfg.trials)?;
        let summary = summarize(&records)?;
        let expected = policy::prob_faulty_update(q, p, cfg.run.f)?;
        let freq = summary.faulty_update_rate;
        ok &= (freq - expected).abs() <= 0.005;
        details.push(format!("q={q}: {freq:.4} vs {expected:.4}"));
    }
    Ok((ok, format!("10^5 rounds each, ±0.005: {}", details.join(", "))))
}

fn identification_bound() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::from_toml_str(IDENTIFICATION)?;
    let dataset = cfg.dataset()?;
    let (q, p) = (cfg.run.q, 0.5);
    let mut first: Vec<Option<u64>> = Vec::with_capacity(cfg.trials as usize);
    for trial in 0..cfg.trials {
        let sim = Simulation::new(&cfg.run, &dataset, trial)?;
        let mut found = None;
        sim.run_with(cfg.iterations, |r, _| {
            if r.identified_cum > 0 {
                found = Some(r.iteration + 1);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })?;
        first.push(found);
    }
    // Upper 3σ-equivalent quantile of the binomial count under the bound. The
    // normal approximation is useless once the expected count drops below one.
    let level = Normal::standard().cdf(3.0);
    let mut worst_excess = i64::MIN;
    let mut bound_ok = true;
    for t in 1..=cfg.iterations {
        let waiting = first.iter().filter(|f| f.is_none_or(|k| k > t)).count() as u64;
        let bound = policy::prob_unidentified(q, p, t);
        let limit = Binomial::new(bound, first.len() as u64)
            .map_err(|e| Error::Invariant(e.to_string()))?
            .inverse_cdf(level);
        worst_excess = worst_excess.max(waiting as i64 - limit as i64);
        bound_ok &= waiting <= limit;
    }
    let found: Vec<u64> = first.iter().flatten().copied().collect();
    let mean = found.iter().sum::<u64>() as f64 / found.len().max(1) as f64;
    let target = 1.0 / (q * p);
    let mean_ok = found.len() == first.len() && (mean - target).abs() <= 0.1 * target;
    Ok((
        bound_ok && mean_ok,
        format!(
            "{} trials, max count over the 3σ binomial limit of (0.9)^t = {worst_excess}; mean identification round {mean:.3} (target {target})",
            first.len()
        ),
    ))
}

fn q_star_closed_form() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for li in 0..=10 {
        for pi in 0..=10 {
            for f_t in 0..=5usize {
                let (lambda, p) = (li as f64 / 10.0, pi as f64 / 10.0);
                let mut best = (f64::INFINITY, 0.0);
                for k in 0..=1_000_000u32 {
                    let q = k as f64 * 1e-6;
                    let v = policy::objective(q, lambda, p, f_t);
                    if v < best.0 {
                        best = (v, q);
                    }
                }
                worst = worst.max((policy::q_star(lambda, p, f_t) - best.1).abs());
            }
        }
    }
    let boundaries = (0..=10).all(|li| {
        let lambda = li as f64 / 10.0;
        (0..=5).all(|f_t| policy::q_star(lambda, 0.0, f_t) == 0.0)
            && (0..=10).all(|pi| policy::q_star(lambda, pi as f64 / 10.0, 0) == 0.0)
    }) && (1..=10).all(|pi| (1..=5).all(|f_t| policy::q_star(1.0, pi as f64 / 10.0, f_t) == 1.0));
    (
        worst <= 2e-6 && boundaries,
        format!("726 grid points, max |closed form − grid argmin| = {worst:.2e} (≤ 2e-6); boundary cases exact: {boundaries}"),
    )
}

fn adaptive_boundary() -> Result<(bool, String)> {
    let cfg = ExperimentConfig::from_toml_str(ADAPTIVE_BOUNDARY)?;
    let dataset = cfg.dataset()?;
    let mut ok = true;
    let mut details = Vec::new();
    for source in [LossSource::Exact, LossSource::Trimmed] {
        let mut run = cfg.run.clone();
        run.loss_source = source;
        let (records, state) = Simulation::new(&run, &dataset, 0)?.run(cfg.iterations)?;
        let high: Vec<&RoundRecord> = records.iter().filter(|r| r.loss > 5.0).collect();
        // With the trimmed source λ follows the workers' estimate, not the
        // exact loss in the record, so only the exact run can be held to it.
        let lambda_ok = source == LossSource::Trimmed || high.iter().all(|r| r.lambda_t.is_some_and(|l| l > 0.99));
        // Once every Byzantine worker is gone the check probability must be 0,
        // so the high-q requirement covers the rounds before that.
        let done = records.iter().position(|r| r.identified_cum == run.f);
        let before = done.map_or(records.len(), |i| i + 1);
        let early: Vec<&RoundRecord> = records[..before].iter().filter(|r| r.loss > 5.0).collect();
        let early_ok = records[0].loss > 5.0 && lambda_ok && early.iter().all(|r| r.q_t >= 0.9);
        let late_ok = match done {
            Some(i) => records[i + 1..].iter().all(|r| r.q_t == 0.0),
            None => false,
        };
        let all_byzantine = state.eliminated == run.adversary.byzantine();
        ok &= early_ok && late_ok && all_byzantine;
        details.push(format!(
            "{source:?}: {} rounds with loss > 5 (λ > 0.99 checked: {}), {} before elimination, all with q_t ≥ 0.9: {early_ok}; all f eliminated by round {}; q_t = 0 afterwards: {late_ok}",
            high.len(),
            source == LossSource::Exact,
            early.len(),
            done.map_or("never".to_string(), |i| (i + 1).to_string())
        ));
    }
    Ok((ok, details.join(" | ")))
}

fn linear_code() -> (bool, String) {
    let code = LinearCode::new(3, 1).expect("n = 3, f = 1");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut honest_ok = true;
    let mut missed = 0;
    for _ in 0..1000 {
        let g: Vec<Gradient> = (0..3)
            .map(|_| Gradient::new((0..4).map(|_| rng.gen_range(-10.0..10.0)).collect()))
            .collect();
        let sum: Vec<f64> = (0..4).map(|k| g.iter().map(|v| v.as_slice()[k]).sum()).collect();
        let mut c = [
            code.encode(LinearRole::One, &g[0], &g[1]),
            code.encode(LinearRole::Two, &g[1], &g[2]),
            code.encode(LinearRole::Three, &g[2], &g[0]),
        ]
        .map(|s| match s.expect("matching dims").payload {
            Payload::Encoded(v) => v.into_inner(),
            Payload::Replicas(_) => unreachable!(),
        });
        let check = code
            .check(&c[0].clone().into(), &c[1].clone().into(), &c[2].clone().into(), 1e-9)
            .expect("matching dims");
        honest_ok &= !check.detected
            && check.reconstructions.iter().all(|r| {
                r.as_slice().iter().zip(&sum).all(|(a, b)| (a - b).abs() <= 1e-9)
            });

        let victim = rng.gen_range(0..3);
        let k = rng.gen_range(0..4);
        let delta = loop {
            let d: f64 = rng.gen_range(-10.0..10.0);
            if d.abs() > 1e-6 {
                break d;
            }
        };
        c[victim][k] += delta;
        let tampered = code
            .check(&c[0].clone().into(), &c[1].clone().into(), &c[2].clone().into(), 1e-9)
            .expect("matching dims");
        if !tampered.detected {
            missed += 1;
        }
    }
    (
        honest_ok && missed == 0,
        format!("honest reconstructions agree within 1e-9: {honest_ok}; undetected tampers {missed}/1000"),
    )
}

fn finite_difference(task: Task, w: &[f64], z: &DataPoint) -> Vec<f64> {
    let h = 1e-6;
    (0..w.len())
        .map(|k| {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[k] += h;
            minus[k] -= h;
            (task.loss(&plus, z) - task.loss(&minus, z)) / (2.0 * h)
        })
        .collect()
}

fn numerical_hygiene() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for task in [Task::LinearRegression, Task::LogisticRegression] {
        for _ in 0..100 {
            let d = rng.gen_range(1..8);
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let features: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let label = match task {
                Task::LinearRegression => rng.gen_range(-3.0..3.0),
                Task::LogisticRegression => {
                    if rng.gen::<bool>() { 1.0 } else { -1.0 }
                }
            };
            let z = DataPoint { features, label };
            let analytic = task.gradient(&w, &z);
            let numeric = finite_difference(task, &w, &z);
            let err = analytic
                .as_slice()
                .iter()
                .zip(&numeric)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(err / analytic.norm().max(1e-3));
        }
    }

    // Fixed seeds: a Monte-Carlo experiment repeated gives identical records.
    let mut cfg = ExperimentConfig::from_toml_str(FAULTY_UPDATES)?;
    cfg.trials = 8;
    cfg.iterations = 200;
    let repeatable = cfg.execute()? == cfg.execute()?;
    let dataset = Dataset::generate(Task::LogisticRegression, 50, 2, 3)?;
    let optimum_ok = dataset.full_gradient(&dataset.optimum).norm() <= 1e-8;
    Ok((
        worst <= 1e-5 && repeatable && optimum_ok,
        format!("max relative FD error {worst:.2e} (≤ 1e-5) over 200 probes; repeated Monte-Carlo run identical: {repeatable}"),
    ))
}
