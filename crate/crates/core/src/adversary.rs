//! Byzantine worker behavior.
//!
//! Each Byzantine worker flips one coin per iteration. On heads every copy it
//! sends that iteration is tampered, including copies requested later by
//! reactive redundancy; on tails it behaves honestly. A lie about a given
//! point is reused for every message in the iteration unless the strategy is
//! [`Strategy::InconsistentCopies`]. All tampering is logged in
//! [`TamperRecord`]s so tests can compare the master's view with ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codes::{Payload, Symbol};
use crate::error::{Error, Result};
use crate::model::Gradient;
use crate::rng::StreamRng;
use crate::WorkerId;

/// Added to the first component when a strategy would reproduce the honest
/// value, e.g. `zero` applied to a zero gradient.
pub const COLLISION_NUDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    SignFlip,
    GaussianNoise { sigma: f64 },
    Constant { value: Vec<f64> },
    Zero,
    /// Gaussian noise redrawn for every copy, so one worker's copies of the
    /// same point disagree with each other.
    InconsistentCopies { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryConfig {
    tamper_prob: BTreeMap<WorkerId, f64>,
    pub strategy: Strategy,
}

impl AdversaryConfig {
    /// No Byzantine workers.
    pub fn none() -> Self {
        AdversaryConfig {
            tamper_prob: BTreeMap::new(),
            strategy: Strategy::SignFlip,
        }
    }

    /// Every worker in `byzantine` tampers with the same probability `p`.
    pub fn uniform(byzantine: impl IntoIterator<Item = WorkerId>, p: f64, strategy: Strategy) -> Result<Self> {
        Self::with_probabilities(byzantine.into_iter().map(|w| (w, p)), strategy)
    }

    pub fn with_probabilities(
        probs: impl IntoIterator<Item = (WorkerId, f64)>,
        strategy: Strategy,
    ) -> Result<Self> {
        let tamper_prob: BTreeMap<WorkerId, f64> = probs.into_iter().collect();
        for p in tamper_prob.values() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::OutOfRange {
                    name: "p",
                    value: *p,
                    range: "[0, 1]",
                });
            }
        }
        if let Strategy::GaussianNoise { sigma } | Strategy::InconsistentCopies { sigma } = strategy {
            if !(sigma > 0.0) {
                return Err(Error::OutOfRange {
                    name: "sigma",
                    value: sigma,
                    range: "(0, inf)",
                });
            }
        }
        Ok(AdversaryConfig {
            tamper_prob,
            strategy,
        })
    }

    /// Checks the Byzantine set against a system of `n` workers: ids must be
    /// in range and fewer than half the workers may be Byzantine.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut problems = Vec::new();
        if let Some(w) = self.tamper_prob.keys().find(|w| w.0 >= n) {
            problems.push(format!("byzantine worker {w} is not among the {n} workers"));
        }
        if 2 * self.byzantine_count() >= n {
            problems.push(format!(
                "{} Byzantine of {n} workers violates f < n/2",
                self.byzantine_count()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn byzantine(&self) -> BTreeSet<WorkerId> {
        self.tamper_prob.keys().copied().collect()
    }

    pub fn byzantine_count(&self) -> usize {
        self.tamper_prob.len()
    }

    pub fn is_byzantine(&self, w: WorkerId) -> bool {
        self.tamper_prob.contains_key(&w)
    }

    pub fn tamper_prob(&self, w: WorkerId) -> f64 {
        self.tamper_prob.get(&w).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct TamperEntry {
    /// Mini-batch position, or `None` for an encoded symbol.
    pub point: Option<usize>,
    pub honest: Gradient,
    pub sent: Gradient,
}

#[derive(Debug, Clone)]
pub struct TamperRecord {
    pub iteration: u64,
    pub worker: WorkerId,
    pub entries: Vec<TamperEntry>,
}

impl TamperRecord {
    pub fn points(&self) -> BTreeSet<usize> {
        self.entries.iter().filter_map(|e| e.point).collect()
    }
}

fn numerically_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

/// Returns a faulty version of `g` that differs from it in at least one
/// component.
pub fn tamper_value(g: &Gradient, strategy: &Strategy, rng: &mut StreamRng) -> Gradient {
    let honest = g.as_slice();
    let mut out: Vec<f64> = match strategy {
        Strategy::SignFlip => honest.iter().map(|v| -v).collect(),
        Strategy::Zero => vec![0.0; honest.len()],
        Strategy::Constant { value } => {
            let mut v = value.clone();
            v.resize(honest.len(), 0.0);
            v
        }
        Strategy::GaussianNoise { sigma } | Strategy::InconsistentCopies { sigma } => loop {
            let draw: Vec<f64> = honest
                .iter()
                .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            if !numerically_equal(&draw, honest) {
                break draw;
            }
        },
    };
    if numerically_equal(&out, honest) {
        if let Some(first) = out.first_mut() {
            *first += COLLISION_NUDGE;
        }
    }
    Gradient::new(out)
}

/// One Byzantine worker's behavior within one iteration.
#[derive(Debug)]
pub struct ByzantineRound {
    worker: WorkerId,
    iteration: u64,
    tampering: bool,
    rng: StreamRng,
    lies: BTreeMap<usize, Gradient>,
    entries: Vec<TamperEntry>,
}

impl ByzantineRound {
    /// Flips this iteration's tamper coin; it is the first draw of `rng`.
    pub fn new(worker: WorkerId, iteration: u64, p: f64, mut rng: StreamRng) -> Self {
        let tampering = rng.gen::<f64>() < p;
        ByzantineRound {
            worker,
            iteration,
            tampering,
            rng,
            lies: BTreeMap::new(),
            entries: Vec::new(),
        }
    }

    pub fn is_tampering(&self) -> bool {
        self.tampering
    }

    /// The copy this worker sends for `point`.
    pub fn deliver(&mut self, point: usize, honest: &Gradient, strategy: &Strategy) -> Gradient {
        if !self.tampering {
            return honest.clone();
        }
        let sent = match (strategy, self.lies.get(&point)) {
            (Strategy::InconsistentCopies { .. }, _) | (_, None) => {
                let lie = tamper_value(honest, strategy, &mut self.rng);
                self.lies.insert(point, lie.clone());
                lie
            }
            (_, Some(lie)) => lie.clone(),
        };
        self.entries.push(TamperEntry {
            point: Some(point),
            honest: honest.clone(),
            sent: sent.clone(),
        });
        sent
    }

    /// Loss this worker reports for its points. A tampering worker reports a
    /// faulty value produced by the same strategy.
    pub fn report_loss(&mut self, honest: f64, strategy: &Strategy) -> f64 {
        if !self.tampering {
            return honest;
        }
        let lie = tamper_value(&Gradient::new(vec![honest]), strategy, &mut self.rng);
        lie.as_slice()[0]
    }

    pub fn finish(self) -> Option<TamperRecord> {
        (!self.entries.is_empty()).then_some(TamperRecord {
            iteration: self.iteration,
            worker: self.worker,
            entries: self.entries,
        })
    }
}

/// Applies a Byzantine worker's behavior to a whole symbol.
pub fn act(
    worker: WorkerId,
    honest: &Symbol,
    iteration: u64,
    config: &AdversaryConfig,
    rng: StreamRng,
) -> (Symbol, Option<TamperRecord>) {
    let mut round = ByzantineRound::new(worker, iteration, config.tamper_prob(worker), rng);
    let payload = match &honest.payload {
        Payload::Replicas(copies) => Payload::Replicas(
            copies
                .iter()
                .map(|(p, g)| (*p, round.deliver(*p, g, &config.strategy)))
                .collect(),
        ),
        Payload::Encoded(g) => {
            if round.tampering {
                let sent = tamper_value(g, &config.strategy, &mut round.rng);
                round.entries.push(TamperEntry {
                    point: None,
                    honest: g.clone(),
                    sent: sent.clone(),
                });
                Payload::Encoded(sent)
            } else {
                Payload::Encoded(g.clone())
            }
        }
    };
    (
        Symbol {
            worker,
            payload,
        },
        round.finish(),
    )
}
