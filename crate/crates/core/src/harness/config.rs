//! Experiment config files.
//!
//! TOML with one table per concern:
//!
//! ```toml
//! [system]
//! n = 5
//! f = 2
//!
//! [data]
//! task = "linear_regression"
//! points = 200
//! dim = 5
//!
//! [training]
//! batch = 20
//! iterations = 2000
//!
//! [scheme]
//! kind = "randomized"
//! delta = 0.1
//!
//! [adversary]
//! strategy = "sign_flip"
//! p = 1.0
//!
//! [run]
//! trials = 1
//! seed = 7
//! ```
//!
//! Every violated invariant is reported with the offending field and, when
//! the field appears in the file, its line.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::adversary::{AdversaryConfig, Strategy};
use crate::engine::{self, InitialParameter, LossSource, RoundRecord, RunConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, StepSchedule, Task};
use crate::policy::{self, Scheme};
use crate::WorkerId;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    data: RawData,
    training: RawTraining,
    scheme: RawScheme,
    adversary: Option<RawAdversary>,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n: usize,
    f: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    task: Task,
    points: usize,
    dim: usize,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    batch: usize,
    iterations: u64,
    eta0: Option<f64>,
    gamma: Option<f64>,
    init: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    kind: Scheme,
    q: Option<f64>,
    delta: Option<f64>,
    assumed_p: Option<f64>,
    loss_source: Option<LossSource>,
    trim_count: Option<usize>,
    eliminate: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdversary {
    strategy: String,
    p: f64,
    sigma: Option<f64>,
    constant: Option<Vec<f64>>,
    byzantine: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    trials: Option<u64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub task: Task,
    pub points: usize,
    pub dim: usize,
    /// Dataset seed; the master seed when unset.
    pub data_seed: Option<u64>,
    pub iterations: u64,
    pub trials: u64,
    pub output: Option<PathBuf>,
}

/// 1-based line of `key` inside `[section]`, if present.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let header = format!("[{section}]");
    let mut inside = false;
    for (i, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('[') {
            inside = line == header;
            continue;
        }
        if inside {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Diagnostics<'a> {
    src: &'a str,
    problems: Vec<String>,
}

impl Diagnostics<'_> {
    fn push(&mut self, section: &str, key: &str, message: impl Into<String>) {
        let location = match locate(self.src, section, key) {
            Some(line) => format!("line {line}: "),
            None => String::new(),
        };
        self.problems
            .push(format!("{location}{section}.{key}: {}", message.into()));
    }
}

fn parse_strategy(raw: &RawAdversary) -> std::result::Result<Strategy, String> {
    let sigma = || raw.sigma.ok_or_else(|| format!("strategy {} needs sigma", raw.strategy));
    Ok(match raw.strategy.as_str() {
        "sign_flip" => Strategy::SignFlip,
        "zero" => Strategy::Zero,
        "gaussian_noise" => Strategy::GaussianNoise { sigma: sigma()? },
        "inconsistent_copies" => Strategy::InconsistentCopies { sigma: sigma()? },
        "constant" => Strategy::Constant {
            value: raw
                .constant
                .clone()
                .ok_or("strategy constant needs a constant vector")?,
        },
        other => return Err(format!("unknown strategy {other:?}")),
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        Self::from_toml_str(&src)
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let mut diag = Diagnostics {
            src,
            problems: Vec::new(),
        };
        let RawSystem { n, f } = raw.system;

        if 2 * f >= n {
            diag.push("system", "f", format!("f < n/2 violated (n = {n}, f = {f})"));
        }
        if raw.data.dim < 1 || raw.data.points < raw.data.dim {
            diag.push("data", "points", format!(
                "need points >= dim >= 1 (points = {}, dim = {})",
                raw.data.points, raw.data.dim
            ));
        }
        let m = raw.training.batch;
        if m == 0 || m > raw.data.points {
            diag.push("training", "batch", format!("need 1 <= batch <= points (batch = {m})"));
        }
        let schedule = StepSchedule {
            eta0: raw.training.eta0.unwrap_or(StepSchedule::default().eta0),
            gamma: raw.training.gamma.unwrap_or(StepSchedule::default().gamma),
        };
        if !(schedule.eta0 > 0.0) {
            diag.push("training", "eta0", "step size must be positive");
        }
        if !(schedule.gamma >= 0.0) {
            diag.push("training", "gamma", "decay must be nonnegative");
        }

        let s = &raw.scheme;
        let mut q = 0.0;
        match s.kind {
            Scheme::Randomized => match (s.q, s.delta) {
                (Some(_), Some(_)) => diag.push("scheme", "q", "set exactly one of q and delta"),
                (None, None) => diag.push("scheme", "kind", "randomized scheme needs q or delta"),
                (Some(v), None) => {
                    if (0.0..=1.0).contains(&v) {
                        q = v;
                    } else {
                        diag.push("scheme", "q", format!("q = {v} outside [0, 1]"));
                    }
                }
                (None, Some(delta)) => match policy::q_for_delta(delta, f) {
                    Ok(v) => q = v,
                    Err(e) => diag.push("scheme", "delta", e.to_string()),
                },
            },
            _ => {
                if s.q.is_some() || s.delta.is_some() {
                    diag.push("scheme", if s.q.is_some() { "q" } else { "delta" }, format!(
                        "only the randomized scheme takes q or delta (kind = {})",
                        s.kind.name()
                    ));
                }
            }
        }
        let assumed_p = match (s.kind, s.assumed_p) {
            (Scheme::Adaptive, None) => {
                diag.push("scheme", "kind", "adaptive scheme needs assumed_p");
                0.0
            }
            (_, Some(p)) if !(0.0..=1.0).contains(&p) => {
                diag.push("scheme", "assumed_p", format!("assumed_p = {p} outside [0, 1]"));
                0.0
            }
            (_, p) => p.unwrap_or(0.0),
        };
        if let Some(trim) = s.trim_count {
            if n <= 2 * trim {
                diag.push("scheme", "trim_count", format!("cannot trim {trim} from each end of {n} reports"));
            }
        }

        let adversary = match &raw.adversary {
            None => AdversaryConfig::none(),
            Some(a) => {
                let ids: Vec<usize> = a.byzantine.clone().unwrap_or_else(|| (n.saturating_sub(f)..n).collect());
                if ids.len() > f {
                    diag.push("adversary", "byzantine", format!(
                        "{} Byzantine workers exceed f = {f}",
                        ids.len()
                    ));
                }
                if let Some(bad) = ids.iter().find(|w| **w >= n) {
                    diag.push("adversary", "byzantine", format!("worker {bad} is not among the {n} workers"));
                }
                if !(0.0..=1.0).contains(&a.p) {
                    diag.push("adversary", "p", format!("p = {} outside [0, 1]", a.p));
                }
                match parse_strategy(a) {
                    Err(msg) => {
                        diag.push("adversary", "strategy", msg);
                        AdversaryConfig::none()
                    }
                    Ok(strategy) => {
                        match AdversaryConfig::uniform(ids.into_iter().map(WorkerId), a.p, strategy) {
                            Ok(cfg) => cfg,
                            Err(e) => {
                                diag.push("adversary", "sigma", e.to_string());
                                AdversaryConfig::none()
                            }
                        }
                    }
                }
            }
        };

        let trials = raw.run.trials.unwrap_or(1);
        if trials == 0 {
            diag.push("run", "trials", "need at least one trial");
        }

        if !diag.problems.is_empty() {
            return Err(Error::Config(diag.problems));
        }
        Ok(ExperimentConfig {
            run: RunConfig {
                n,
                f,
                m,
                scheme: s.kind,
                q,
                assumed_p,
                loss_source: s.loss_source.unwrap_or(LossSource::Exact),
                trim_count: s.trim_count,
                schedule,
                eliminate: s.eliminate.unwrap_or(true),
                init: raw.training.init.map_or(InitialParameter::Zeros, InitialParameter::Fill),
                adversary,
                seed: raw.run.seed.unwrap_or(0),
            },
            task: raw.data.task,
            points: raw.data.points,
            dim: raw.data.dim,
            data_seed: raw.data.seed,
            iterations: raw.training.iterations,
            trials,
            output: raw.run.output,
        })
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::generate(self.task, self.points, self.dim, self.data_seed.unwrap_or(self.run.seed))
    }

    /// Generates the dataset and runs every trial.
    pub fn execute(&self) -> Result<Vec<Vec<RoundRecord>>> {
        let dataset = self.dataset()?;
        engine::run_experiment(&self.run, &dataset, self.iterations, self.trials)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[system]
n = 3
f = 1

[data]
task = "linear_regression"
points = 30
dim = 2

[training]
batch = 6
iterations = 10

[scheme]
kind = "deterministic"
"#;

    fn problems(src: &str) -> Vec<String> {
        match ExperimentConfig::from_toml_str(src) {
            Err(Error::Config(p)) => p,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_is_valid() {
        let c = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!((c.run.n, c.run.f, c.run.m), (3, 1, 6));
        assert_eq!(c.trials, 1);
        assert_eq!(c.run.adversary.byzantine_count(), 0);
        assert_eq!(c.run.schedule, StepSchedule::default());
    }

    #[test]
    fn rejects_half_byzantine() {
        let src = BASE.replace("n = 3\nf = 1", "n = 4\nf = 2");
        let p = problems(&src);
        assert_eq!(p.len(), 1);
        assert!(p[0].contains("f < n/2 violated"), "{p:?}");
        assert!(p[0].starts_with("line 4: system.f"), "{p:?}");
    }

    #[test]
    fn randomized_needs_exactly_one_of_q_and_delta() {
        let src = BASE.replace("deterministic", "randomized");
        assert!(problems(&src)[0].contains("needs q or delta"));
        let both = format!("{src}q = 0.1\ndelta = 0.1\n");
        assert!(problems(&both)[0].contains("exactly one"));
        let delta = format!("{src}delta = 0.1\n");
        let c = ExperimentConfig::from_toml_str(&delta).unwrap();
        assert!((c.run.q - 0.15).abs() < 1e-15);
    }

    #[test]
    fn reports_every_violation() {
        let src = BASE
            .replace("n = 3\nf = 1", "n = 4\nf = 2")
            .replace("batch = 6", "batch = 60");
        let p = problems(&src);
        assert_eq!(p.len(), 2, "{p:?}");
        assert!(p.iter().any(|m| m.contains("training.batch")));
    }

    #[test]
    fn adversary_defaults_to_last_workers() {
        let src = format!("{BASE}\n[adversary]\nstrategy = \"sign_flip\"\np = 0.5\n");
        let c = ExperimentConfig::from_toml_str(&src).unwrap();
        assert_eq!(c.run.adversary.byzantine(), [WorkerId(2)].into());
        assert_eq!(c.run.adversary.tamper_prob(WorkerId(2)), 0.5);
    }

    #[test]
    fn adversary_errors() {
        let src = format!("{BASE}\n[adversary]\nstrategy = \"gaussian_noise\"\np = 1.5\nbyzantine = [0, 5]\n");
        let p = problems(&src);
        assert!(p.iter().any(|m| m.contains("exceed f")));
        assert!(p.iter().any(|m| m.contains("not among")));
        assert!(p.iter().any(|m| m.contains("adversary.p")));
        assert!(p.iter().any(|m| m.contains("needs sigma")));
    }

    #[test]
    fn adaptive_requires_assumed_p() {
        let src = BASE.replace("deterministic", "adaptive");
        assert!(problems(&src)[0].contains("assumed_p"));
        let ok = format!("{src}assumed_p = 0.5\nloss_source = \"trimmed\"\n");
        let c = ExperimentConfig::from_toml_str(&ok).unwrap();
        assert_eq!(c.run.loss_source, LossSource::Trimmed);
    }

    #[test]
    fn syntax_errors_are_config_errors() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("[system\nn = 3"),
            Err(Error::Config(_))
        ));
        let unknown = format!("{BASE}bogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&unknown), Err(Error::Config(_))));
    }
}
