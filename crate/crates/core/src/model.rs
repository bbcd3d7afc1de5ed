//! Learning tasks: per-point losses, analytic gradients, synthetic datasets
//! with a known optimum, and the SGD update.
//!
//! Every reduction runs in index order so that two workers computing the
//! same gradient at the same parameter produce bit-identical vectors. The
//! replication code compares copies bit-for-bit and relies on this.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Role};

/// Ridge weight added to every logistic per-point loss so the average loss
/// has a unique minimizer even when the sample is linearly separable.
pub const LOGISTIC_RIDGE: f64 = 1e-2;

/// Gradient-norm tolerance the cached optimum must satisfy.
pub const OPTIMUM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    LinearRegression,
    LogisticRegression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: f64,
}

/// A gradient vector. Equality between copies is bit-exact; see
/// [`Gradient::same_bits`].
#[derive(Debug, Clone)]
pub struct Gradient(Vec<f64>);

impl Gradient {
    pub fn new(value: Vec<f64>) -> Self {
        Gradient(value)
    }

    pub fn zeros(dim: usize) -> Self {
        Gradient(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Bit-for-bit equality. `0.0` and `-0.0` are different copies.
    pub fn same_bits(&self, other: &Gradient) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Hashable key identifying the exact bit pattern.
    pub fn bit_key(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

impl From<Vec<f64>> for Gradient {
    fn from(value: Vec<f64>) -> Self {
        Gradient(value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Vec<f64>,
    pub iteration: u64,
}

impl Parameter {
    pub fn new(value: Vec<f64>) -> Self {
        Parameter { value, iteration: 0 }
    }

    pub fn distance_to(&self, other: &[f64]) -> f64 {
        self.value
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Bit-exact comparison of two parameter vectors.
    pub fn same_bits(&self, other: &Parameter) -> bool {
        self.value.len() == other.value.len()
            && self
                .value
                .iter()
                .zip(&other.value)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Decaying step size `eta0 / (1 + gamma * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub eta0: f64,
    pub gamma: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            eta0: 0.1,
            gamma: 0.01,
        }
    }
}

impl StepSchedule {
    pub fn eta(&self, t: u64) -> f64 {
        self.eta0 / (1.0 + self.gamma * t as f64)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

impl Task {
    /// Per-point loss. Linear: `½(x·w − y)²`. Logistic (labels ±1):
    /// `ln(1 + e^{−y x·w}) + (μ/2)‖w‖²`.
    pub fn loss(self, w: &[f64], z: &DataPoint) -> f64 {
        match self {
            Task::LinearRegression => {
                let r = dot(&z.features, w) - z.label;
                0.5 * r * r
            }
            Task::LogisticRegression => {
                let margin = z.label * dot(&z.features, w);
                softplus(-margin) + 0.5 * LOGISTIC_RIDGE * dot(w, w)
            }
        }
    }

    pub fn gradient(self, w: &[f64], z: &DataPoint) -> Gradient {
        match self {
            Task::LinearRegression => {
                let r = dot(&z.features, w) - z.label;
                Gradient(z.features.iter().map(|x| r * x).collect())
            }
            Task::LogisticRegression => {
                let margin = z.label * dot(&z.features, w);
                let scale = -z.label * sigmoid(-margin);
                Gradient(
                    z.features
                        .iter()
                        .zip(w)
                        .map(|(x, wi)| scale * x + LOGISTIC_RIDGE * wi)
                        .collect(),
                )
            }
        }
    }
}

/// Componentwise mean, summed in slice order and scaled by `1/m`.
pub fn average_gradient(gradients: &[Gradient]) -> Result<Gradient> {
    let first = gradients.first().ok_or(Error::EmptyInput("gradients"))?;
    let dim = first.dim();
    let mut sum = vec![0.0; dim];
    for g in gradients {
        if g.dim() != dim {
            return Err(Error::InvalidDimensions(format!(
                "gradient of dimension {} among dimension {dim}",
                g.dim()
            )));
        }
        for (s, v) in sum.iter_mut().zip(g.as_slice()) {
            *s += v;
        }
    }
    let scale = 1.0 / gradients.len() as f64;
    Ok(Gradient(sum.into_iter().map(|s| s * scale).collect()))
}

/// `w' = w − eta·g`, advancing the iteration counter.
pub fn sgd_step(w: &Parameter, g: &Gradient, eta: f64) -> Result<Parameter> {
    if !(eta > 0.0) {
        return Err(Error::NonpositiveStepSize(eta));
    }
    if g.dim() != w.value.len() {
        return Err(Error::InvalidDimensions(format!(
            "gradient dimension {} vs parameter dimension {}",
            g.dim(),
            w.value.len()
        )));
    }
    Ok(Parameter {
        value: w
            .value
            .iter()
            .zip(g.as_slice())
            .map(|(wi, gi)| wi - eta * gi)
            .collect(),
        iteration: w.iteration + 1,
    })
}

/// Mean per-point loss over `batch`.
pub fn observed_loss<'a>(
    task: Task,
    w: &[f64],
    batch: impl IntoIterator<Item = &'a DataPoint>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for z in batch {
        total += task.loss(w, z);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput("batch"));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
    pub optimum: Vec<f64>,
    pub task: Task,
}

impl Dataset {
    /// Draws `n` points of dimension `d` from the seeded stream.
    ///
    /// Linear labels are exact (`y = x·w_true`), so `w_true` is the optimum
    /// and the minimum average loss is zero. The logistic optimum is solved
    /// by Newton's method and cached.
    pub fn generate(task: Task, n: usize, d: usize, seed: u64) -> Result<Self> {
        if d < 1 || n < d {
            return Err(Error::InvalidDimensions(format!(
                "need N >= d >= 1, got N = {n}, d = {d}"
            )));
        }
        let mut rng = rng::stream(seed, 0, 0, Role::Dataset);
        let normal = |rng: &mut rng::StreamRng, k: usize| -> Vec<f64> {
            (0..k).map(|_| rng.sample(StandardNormal)).collect()
        };
        let w_true = normal(&mut rng, d);
        let features: Vec<Vec<f64>> = (0..n).map(|_| normal(&mut rng, d)).collect();
        match task {
            Task::LinearRegression => Dataset::linear_from_features(features, w_true),
            Task::LogisticRegression => {
                let points = features
                    .into_iter()
                    .map(|x| {
                        let p = sigmoid(dot(&x, &w_true));
                        let label = if rng.gen::<f64>() < p { 1.0 } else { -1.0 };
                        DataPoint { features: x, label }
                    })
                    .collect();
                Dataset::logistic_from_points(points)
            }
        }
    }

    /// Builds a zero-noise linear dataset with labels `x·w_true`.
    pub fn linear_from_features(features: Vec<Vec<f64>>, w_true: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptyInput("features"));
        }
        if let Some(bad) = features.iter().find(|x| x.len() != w_true.len()) {
            return Err(Error::InvalidDimensions(format!(
                "feature dimension {} vs optimum dimension {}",
                bad.len(),
                w_true.len()
            )));
        }
        let points = features
            .into_iter()
            .map(|x| {
                let label = dot(&x, &w_true);
                DataPoint { features: x, label }
            })
            .collect();
        Ok(Dataset {
            points,
            optimum: w_true,
            task: Task::LinearRegression,
        })
    }

    /// Builds a logistic dataset from labelled points (labels ±1) and
    /// solves for its optimum.
    pub fn logistic_from_points(points: Vec<DataPoint>) -> Result<Self> {
        let d = points.first().ok_or(Error::EmptyInput("points"))?.features.len();
        let mut ds = Dataset {
            points,
            optimum: vec![0.0; d],
            task: Task::LogisticRegression,
        };
        ds.optimum = ds.newton_optimum()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.optimum.len()
    }

    /// Gradient of the average loss over all points.
    pub fn full_gradient(&self, w: &[f64]) -> Gradient {
        let grads: Vec<Gradient> = self.points.iter().map(|z| self.task.gradient(w, z)).collect();
        average_gradient(&grads).expect("dataset is nonempty")
    }

    pub fn average_loss(&self, w: &[f64]) -> f64 {
        observed_loss(self.task, w, &self.points).expect("dataset is nonempty")
    }

    fn newton_optimum(&self) -> Result<Vec<f64>> {
        let d = self.dim();
        let n = self.len() as f64;
        let mut w = vec![0.0; d];
        for _ in 0..100 {
            let g = self.full_gradient(&w);
            if g.norm() <= 1e-13 {
                break;
            }
            let mut hessian = vec![vec![0.0; d]; d];
            for z in &self.points {
                let s = sigmoid(dot(&z.features, &w));
                let c = s * (1.0 - s) / n;
                for i in 0..d {
                    for j in 0..d {
                        hessian[i][j] += c * z.features[i] * z.features[j];
                    }
                }
            }
            for (i, row) in hessian.iter_mut().enumerate() {
                row[i] += LOGISTIC_RIDGE;
            }
            let step = cholesky_solve(hessian, g.as_slice())?;
            for (wi, si) in w.iter_mut().zip(&step) {
                *wi -= si;
            }
        }
        let residual = self.full_gradient(&w).norm();
        if residual > OPTIMUM_TOLERANCE {
            return Err(Error::Invariant(format!(
                "logistic optimum did not converge (gradient norm {residual:e})"
            )));
        }
        Ok(w)
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
fn cholesky_solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> Result<Vec<f64>> {
    let d = b.len();
    for j in 0..d {
        let mut diag = a[j][j];
        for k in 0..j {
            diag -= a[j][k] * a[j][k];
        }
        if !(diag > 0.0) {
            return Err(Error::Invariant("Hessian is not positive definite".into()));
        }
        let diag = diag.sqrt();
        a[j][j] = diag;
        for i in j + 1..d {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / diag;
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i][k] * y[k];
        }
        y[i] = v / a[i][i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut v = y[i];
        for k in i + 1..d {
            v -= a[k][i] * x[k];
        }
        x[i] = v / a[i][i];
    }
    Ok(x)
}
