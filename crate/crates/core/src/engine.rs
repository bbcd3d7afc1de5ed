//! Synchronous master/worker rounds.
//!
//! Every iteration samples a mini-batch, assigns its points to active
//! workers, collects their copies (Byzantine ones filtered through the
//! adversary), and applies one SGD step. The four schemes differ only in how
//! much replication they ask for and when:
//!
//! * traditional: one copy per point, never checked;
//! * deterministic: `f_t + 1` copies always, `f_t` more for suspect points;
//! * randomized: one copy by default; with probability `q` the batch is
//!   raised to `f_t + 1` copies, checked, and suspects raised to `2f_t + 1`;
//! * adaptive: randomized, with `q` recomputed each round from the observed
//!   loss.
//!
//! Workers identified by majority vote are eliminated from later rounds.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryConfig, ByzantineRound};
use crate::codes::{self, Assignment, Copies};
use crate::error::{Error, Result};
use crate::model::{self, Dataset, Gradient, Parameter, StepSchedule};
use crate::policy::{self, PolicyState, Scheme};
use crate::rng::{self, Role};
use crate::WorkerId;

/// Where the adaptive rule gets its loss from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSource {
    /// Exact mean loss on the mini-batch, computed by the master.
    Exact,
    /// Trimmed mean of the per-worker average losses the workers report.
    Trimmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialParameter {
    Zeros,
    /// Every component set to the same value.
    Fill(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub f: usize,
    pub m: usize,
    pub scheme: Scheme,
    /// Fault-check probability (randomized scheme).
    pub q: f64,
    /// Tamper probability the adaptive rule assumes.
    pub assumed_p: f64,
    pub loss_source: LossSource,
    /// Values trimmed from each end; defaults to `f_t`.
    pub trim_count: Option<usize>,
    pub schedule: StepSchedule,
    /// Remove identified workers from later rounds.
    pub eliminate: bool,
    pub init: InitialParameter,
    pub adversary: AdversaryConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(n: usize, f: usize, m: usize, scheme: Scheme) -> Self {
        RunConfig {
            n,
            f,
            m,
            scheme,
            q: 0.0,
            assumed_p: 0.0,
            loss_source: LossSource::Exact,
            trim_count: None,
            schedule: StepSchedule::default(),
            eliminate: true,
            init: InitialParameter::Zeros,
            adversary: AdversaryConfig::none(),
            seed: 0,
        }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let mut problems = Vec::new();
        if 2 * self.f >= self.n {
            problems.push(format!("f < n/2 violated (n = {}, f = {})", self.n, self.f));
        }
        if self.m == 0 || self.m > dataset.len() {
            problems.push(format!("need 1 <= m <= N (m = {}, N = {})", self.m, dataset.len()));
        }
        if self.adversary.byzantine_count() > self.f {
            problems.push(format!(
                "{} Byzantine workers exceed the fault budget f = {}",
                self.adversary.byzantine_count(),
                self.f
            ));
        }
        if let Err(Error::Config(mut more)) = self.adversary.validate(self.n) {
            problems.append(&mut more);
        }
        if !(0.0..=1.0).contains(&self.q) {
            problems.push(format!("q = {} outside [0, 1]", self.q));
        }
        if !(0.0..=1.0).contains(&self.assumed_p) {
            problems.push(format!("assumed p = {} outside [0, 1]", self.assumed_p));
        }
        if !(self.schedule.eta0 > 0.0) || !(self.schedule.gamma >= 0.0) {
            problems.push("step size needs eta0 > 0 and gamma >= 0".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub parameter: Parameter,
    pub active: BTreeSet<WorkerId>,
    pub eliminated: BTreeSet<WorkerId>,
    /// Workers ever identified, whether or not elimination is enabled.
    pub identified: BTreeSet<WorkerId>,
    pub policy: PolicyState,
}

/// Everything observable about one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub trial: u64,
    pub iteration: u64,
    pub scheme: Scheme,
    /// Dataset indices of the mini-batch, in sampling order.
    pub sampled: Vec<usize>,
    pub fault_check: bool,
    pub suspects: usize,
    pub identified: BTreeSet<WorkerId>,
    pub identified_cum: usize,
    pub gradients_computed: usize,
    pub gradients_used: usize,
    /// Ground truth: the applied update used a tampered gradient.
    pub update_faulty: bool,
    /// Exact mean loss on the mini-batch at the pre-update parameter.
    pub loss: f64,
    /// Distance to the optimum after the update.
    pub dist_to_opt: f64,
    pub q_t: f64,
    pub lambda_t: Option<f64>,
}

impl RoundRecord {
    pub fn efficiency(&self) -> f64 {
        self.gradients_used as f64 / self.gradients_computed as f64
    }
}

/// Mini-batch for `(trial, iteration)`: `m` distinct indices out of `n_points`.
pub fn sample_batch(seed: u64, trial: u64, iteration: u64, n_points: usize, m: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, trial, iteration, Role::Sample);
    index::sample(&mut rng, n_points, m).into_vec()
}

/// One trial of a configured run.
pub struct Simulation<'a> {
    config: &'a RunConfig,
    dataset: &'a Dataset,
    trial: u64,
}

/// Per-iteration worker pool: honest values plus lazily created Byzantine
/// behaviors.
struct Workers<'a> {
    honest: &'a [Gradient],
    adversary: &'a AdversaryConfig,
    rounds: BTreeMap<WorkerId, ByzantineRound>,
    seed: u64,
    trial: u64,
    iteration: u64,
}

impl<'a> Workers<'a> {
    fn round(&mut self, w: WorkerId) -> Option<&mut ByzantineRound> {
        if !self.adversary.is_byzantine(w) {
            return None;
        }
        let (seed, trial, t, p) = (self.seed, self.trial, self.iteration, self.adversary.tamper_prob(w));
        Some(self.rounds.entry(w).or_insert_with(|| {
            ByzantineRound::new(w, t, p, rng::stream(seed, trial, t, Role::Adversary(w)))
        }))
    }

    fn copy(&mut self, w: WorkerId, point: usize) -> Gradient {
        let honest = &self.honest[point];
        let strategy = &self.adversary.strategy;
        match self.round(w) {
            Some(r) => r.deliver(point, honest, strategy),
            None => honest.clone(),
        }
    }

    /// Copies from the assignees of `points` in positions `from..`.
    fn gather(&mut self, assignment: &Assignment, points: impl IntoIterator<Item = usize>, from: usize) -> Copies {
        let mut out = Copies::new();
        for p in points {
            for w in &assignment.assignees(p)[from..] {
                let g = self.copy(*w, p);
                out.entry(p).or_default().insert(*w, g);
            }
        }
        out
    }
}

/// Outcome of the gradient-collection phase of a round.
struct Collected {
    used: Vec<Gradient>,
    computed: usize,
    fault_check: bool,
    suspects: usize,
    identified: BTreeSet<WorkerId>,
}

fn merge(into: &mut Copies, more: Copies) {
    for (p, by_worker) in more {
        into.entry(p).or_default().extend(by_worker);
    }
}

fn single_copies(copies: &Copies, m: usize) -> Vec<Gradient> {
    (0..m)
        .map(|p| copies[&p].values().next().expect("every point has a copy").clone())
        .collect()
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a RunConfig, dataset: &'a Dataset, trial: u64) -> Result<Self> {
        config.validate(dataset)?;
        Ok(Simulation {
            config,
            dataset,
            trial,
        })
    }

    pub fn initial_state(&self) -> Result<RunState> {
        let d = self.dataset.dim();
        let value = match self.config.init {
            InitialParameter::Zeros => vec![0.0; d],
            InitialParameter::Fill(v) => vec![v; d],
        };
        Ok(RunState {
            parameter: Parameter::new(value),
            active: (0..self.config.n).map(WorkerId).collect(),
            eliminated: BTreeSet::new(),
            identified: BTreeSet::new(),
            policy: PolicyState::new(
                self.config.scheme,
                self.config.f,
                self.config.q,
                self.config.assumed_p,
            )?,
        })
    }

    fn stream(&self, t: u64, role: Role) -> rng::StreamRng {
        rng::stream(self.config.seed, self.trial, t, role)
    }

    pub fn run_iteration(&self, state: &mut RunState) -> Result<RoundRecord> {
        match self.config.scheme {
            Scheme::Traditional => self.run_iteration_traditional(state),
            Scheme::Deterministic => self.run_iteration_deterministic(state),
            Scheme::Randomized => self.run_iteration_randomized(state),
            Scheme::Adaptive => self.run_iteration_adaptive(state),
        }
    }

    pub fn run_iteration_traditional(&self, state: &mut RunState) -> Result<RoundRecord> {
        self.round(state, |sim, state, workers, t| {
            let assign = codes::replicate_assign(sim.config.m, &state.active, 1, &mut sim.stream(t, Role::Assign))?;
            let copies = workers.gather(&assign, 0..sim.config.m, 0);
            Ok(Collected {
                used: single_copies(&copies, sim.config.m),
                computed: assign.total_copies(),
                fault_check: false,
                suspects: 0,
                identified: BTreeSet::new(),
            })
        }, 0.0, None)
    }

    pub fn run_iteration_deterministic(&self, state: &mut RunState) -> Result<RoundRecord> {
        self.round(state, |sim, state, workers, t| {
            let m = sim.config.m;
            let f_t = state.policy.f_t();
            sim.require_quorum(state, f_t)?;
            let assign = codes::replicate_assign(m, &state.active, f_t + 1, &mut sim.stream(t, Role::Assign))?;
            let copies = workers.gather(&assign, 0..m, 0);
            if f_t == 0 {
                return Ok(Collected {
                    used: single_copies(&copies, m),
                    computed: assign.total_copies(),
                    fault_check: false,
                    suspects: 0,
                    identified: BTreeSet::new(),
                });
            }
            sim.check_and_correct(state, workers, assign, copies, f_t, t)
        }, 1.0, None)
    }

    pub fn run_iteration_randomized(&self, state: &mut RunState) -> Result<RoundRecord> {
        let q = state.policy.q;
        self.randomized_round(state, q, None)
    }

    pub fn run_iteration_adaptive(&self, state: &mut RunState) -> Result<RoundRecord> {
        let t = state.parameter.iteration;
        let batch = sample_batch(self.config.seed, self.trial, t, self.dataset.len(), self.config.m);
        let loss = match self.config.loss_source {
            LossSource::Exact => self.batch_loss(&state.parameter, &batch),
            LossSource::Trimmed => self.reported_loss(state, &batch)?,
        };
        let q = state.policy.adapt(loss.max(0.0))?;
        let lambda = state.policy.lambda;
        self.randomized_round(state, q, Some(lambda))
    }

    fn randomized_round(&self, state: &mut RunState, q: f64, lambda: Option<f64>) -> Result<RoundRecord> {
        self.round(state, |sim, state, workers, t| {
            let m = sim.config.m;
            let f_t = state.policy.f_t();
            sim.require_quorum(state, f_t)?;
            let assign = codes::replicate_assign(m, &state.active, 1, &mut sim.stream(t, Role::Assign))?;
            let mut copies = workers.gather(&assign, 0..m, 0);
            let coin = sim.stream(t, Role::FaultCheck).gen::<f64>() < q;
            if !coin || f_t == 0 {
                return Ok(Collected {
                    used: single_copies(&copies, m),
                    computed: assign.total_copies(),
                    fault_check: false,
                    suspects: 0,
                    identified: BTreeSet::new(),
                });
            }
            let all: BTreeSet<usize> = (0..m).collect();
            let mut reactive = sim.stream(t, Role::Reactive);
            let replicated = codes::reactive_assign(&all, &assign, f_t, &state.active, &mut reactive)?;
            merge(&mut copies, workers.gather(&replicated, 0..m, 1));
            sim.check_and_correct_with(state, workers, replicated, copies, f_t, reactive)
        }, q, lambda)
    }

    fn require_quorum(&self, state: &RunState, f_t: usize) -> Result<()> {
        if state.active.len() < 2 * f_t + 1 {
            return Err(Error::InsufficientWorkers {
                needed: 2 * f_t + 1,
                available: state.active.len(),
            });
        }
        Ok(())
    }

    fn check_and_correct(
        &self,
        state: &RunState,
        workers: &mut Workers<'_>,
        assign: Assignment,
        copies: Copies,
        f_t: usize,
        t: u64,
    ) -> Result<Collected> {
        let reactive = self.stream(t, Role::Reactive);
        self.check_and_correct_with(state, workers, assign, copies, f_t, reactive)
    }

    /// Detects on `f_t + 1` copies per point, recruits `f_t` more for each
    /// suspect and resolves it by majority.
    fn check_and_correct_with(
        &self,
        state: &RunState,
        workers: &mut Workers<'_>,
        assign: Assignment,
        copies: Copies,
        f_t: usize,
        mut reactive: rng::StreamRng,
    ) -> Result<Collected> {
        let m = self.config.m;
        let report = codes::detect(copies)?;
        let grown = codes::reactive_assign(&report.suspects, &assign, f_t, &state.active, &mut reactive)?;
        let extra = workers.gather(&grown, report.suspects.iter().copied(), f_t + 1);
        let ident = codes::identify_all(&report, &extra, f_t)?;
        let used = (0..m)
            .map(|p| match ident.resolved.get(&p) {
                Some(g) => g.clone(),
                None => report.copies[&p].values().next().expect("copies present").clone(),
            })
            .collect();
        Ok(Collected {
            used,
            computed: grown.total_copies(),
            fault_check: true,
            suspects: report.suspects.len(),
            identified: ident.identified,
        })
    }

    fn batch_loss(&self, w: &Parameter, batch: &[usize]) -> f64 {
        model::observed_loss(self.dataset.task, &w.value, batch.iter().map(|i| &self.dataset.points[*i]))
            .expect("mini-batch is nonempty")
    }

    /// Trimmed mean of the average losses reported by the workers holding
    /// points under a degree-one split of the batch.
    fn reported_loss(&self, state: &RunState, batch: &[usize]) -> Result<f64> {
        let t = state.parameter.iteration;
        let assign = codes::replicate_assign(self.config.m, &state.active, 1, &mut self.stream(t, Role::Assign))?;
        let mut reports = Vec::new();
        for (w, points) in assign.loads() {
            let idx: Vec<usize> = points.iter().map(|p| batch[*p]).collect();
            let honest = self.batch_loss(&state.parameter, &idx);
            let reported = if self.config.adversary.is_byzantine(w) {
                let p = self.config.adversary.tamper_prob(w);
                let mut round = ByzantineRound::new(w, t, p, self.stream(t, Role::Adversary(w)));
                round.report_loss(honest, &self.config.adversary.strategy)
            } else {
                honest
            };
            reports.push(reported);
        }
        let trim = self.config.trim_count.unwrap_or(state.policy.f_t());
        policy::trimmed_mean(&reports, trim)
    }

    /// Shared skeleton: sample, collect, update, eliminate, record.
    fn round<F>(&self, state: &mut RunState, collect: F, q_t: f64, lambda_t: Option<f64>) -> Result<RoundRecord>
    where
        F: FnOnce(&Self, &RunState, &mut Workers<'_>, u64) -> Result<Collected>,
    {
        if state.active.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        let t = state.parameter.iteration;
        let batch = sample_batch(self.config.seed, self.trial, t, self.dataset.len(), self.config.m);
        let task = self.dataset.task;
        let w = &state.parameter;
        let honest: Vec<Gradient> = batch
            .iter()
            .map(|i| task.gradient(&w.value, &self.dataset.points[*i]))
            .collect();
        let loss = self.batch_loss(w, &batch);

        let mut workers = Workers {
            honest: &honest,
            adversary: &self.config.adversary,
            rounds: BTreeMap::new(),
            seed: self.config.seed,
            trial: self.trial,
            iteration: t,
        };
        let collected = collect(self, state, &mut workers, t)?;

        let update_faulty = collected
            .used
            .iter()
            .zip(&honest)
            .any(|(u, h)| !u.same_bits(h));
        if update_faulty && collected.fault_check {
            return Err(Error::Invariant(format!(
                "checked round {t} applied a tampered gradient"
            )));
        }
        let avg = model::average_gradient(&collected.used)?;
        let next = model::sgd_step(&state.parameter, &avg, self.config.schedule.eta(t))?;

        for w in &collected.identified {
            if !self.config.adversary.is_byzantine(*w) {
                return Err(Error::HonestWorkerEliminated(*w));
            }
        }
        let newly: BTreeSet<WorkerId> = collected
            .identified
            .difference(&state.identified)
            .copied()
            .collect();
        state.identified.extend(newly.iter().copied());
        if self.config.eliminate {
            for w in &newly {
                state.active.remove(w);
                state.eliminated.insert(*w);
            }
            state.policy.record_identified(newly.len())?;
        }
        state.parameter = next;

        Ok(RoundRecord {
            trial: self.trial,
            iteration: t,
            scheme: self.config.scheme,
            sampled: batch,
            fault_check: collected.fault_check,
            suspects: collected.suspects,
            identified: collected.identified,
            identified_cum: state.identified.len(),
            gradients_computed: collected.computed,
            gradients_used: collected.used.len(),
            update_faulty,
            loss,
            dist_to_opt: state.parameter.distance_to(&self.dataset.optimum),
            q_t,
            lambda_t,
        })
    }

    /// Runs `iterations` rounds, handing each record to `visit`, which may
    /// stop the trial early.
    pub fn run_with<F>(&self, iterations: u64, mut visit: F) -> Result<RunState>
    where
        F: FnMut(&RoundRecord, &RunState) -> ControlFlow<()>,
    {
        let mut state = self.initial_state()?;
        for _ in 0..iterations {
            let record = self.run_iteration(&mut state)?;
            if visit(&record, &state).is_break() {
                break;
            }
        }
        Ok(state)
    }

    pub fn run(&self, iterations: u64) -> Result<(Vec<RoundRecord>, RunState)> {
        let mut records = Vec::with_capacity(iterations as usize);
        let state = self.run_with(iterations, |r, _| {
            records.push(r.clone());
            ControlFlow::Continue(())
        })?;
        Ok((records, state))
    }
}

/// Runs `trials` independent trials, fanned out over threads and returned in
/// trial order.
pub fn run_experiment(
    config: &RunConfig,
    dataset: &Dataset,
    iterations: u64,
    trials: u64,
) -> Result<Vec<Vec<RoundRecord>>> {
    config.validate(dataset)?;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(trials.max(1) as usize);
    let ids: Vec<u64> = (0..trials).collect();
    let chunk = ids.len().div_ceil(threads).max(1);
    let results: Vec<Result<Vec<Vec<RoundRecord>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|trial| {
                            Simulation::new(config, dataset, *trial)?
                                .run(iterations)
                                .map(|(r, _)| r)
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(trials as usize);
    for part in results {
        out.extend(part?);
    }
    Ok(out)
}
