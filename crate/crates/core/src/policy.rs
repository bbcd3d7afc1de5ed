//! Analytical efficiency and reliability formulas, and the fault-check
//! probability rules built on them.
//!
//! With `f_t` unidentified Byzantine workers, checking each round with
//! probability `q` gives
//!
//! ```text
//! comEff(q) = 1 - a q                 a = 2 f_t / (2 f_t + 1)
//! probF(q)  = b (1 - q)               b = 1 - (1 - p)^f_t
//! ```
//!
//! and the adaptive rule picks `q` minimizing
//! `(1 - λ)(1 - comEff(q))² + λ probF(q)²`, a convex quadratic in `q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

fn efficiency_slope(f: usize) -> f64 {
    let f = f as f64;
    2.0 * f / (2.0 * f + 1.0)
}

fn tamper_mass(p: f64, f_t: usize) -> f64 {
    1.0 - (1.0 - p).powi(f_t as i32)
}

/// Worst-case expected computation efficiency `1 - q·2f/(2f+1)`.
pub fn expected_efficiency_bound(q: f64, f: usize) -> Result<f64> {
    check_unit("q", q)?;
    Ok(1.0 - q * efficiency_slope(f))
}

/// Fault-check probability `δ(2f+1)/(2f)` whose efficiency bound is `1 - δ`.
pub fn q_for_delta(delta: f64, f: usize) -> Result<f64> {
    if f == 0 {
        return Err(Error::ZeroFaults);
    }
    let max = efficiency_slope(f);
    if !(delta > 0.0) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, 2f/(2f+1)]",
        });
    }
    if delta > max {
        return Err(Error::DeltaTooLarge { delta, max });
    }
    let f = f as f64;
    Ok((delta * (2.0 * f + 1.0) / (2.0 * f)).min(1.0))
}

/// Probability that an unchecked round applies a faulty update:
/// `(1 - (1-p)^f_t)(1 - q)`.
pub fn prob_faulty_update(q: f64, p: f64, f_t: usize) -> Result<f64> {
    check_unit("q", q)?;
    check_unit("p", p)?;
    Ok(tamper_mass(p, f_t) * (1.0 - q))
}

/// Upper bound `(1 - q p_i)^t` on a Byzantine worker staying unidentified.
pub fn prob_unidentified(q: f64, p_i: f64, t: u64) -> f64 {
    let base = 1.0 - q * p_i;
    base.powf(t as f64)
}

/// `λ = 1 - e^{-loss}`.
pub fn lambda_from_loss(loss: f64) -> Result<f64> {
    if !(loss >= 0.0) {
        return Err(Error::NegativeLoss(loss));
    }
    Ok(-(-loss).exp_m1())
}

pub fn com_eff(q: f64, f_t: usize) -> f64 {
    1.0 - efficiency_slope(f_t) * q
}

pub fn prob_f(q: f64, p: f64, f_t: usize) -> f64 {
    tamper_mass(p, f_t) * (1.0 - q)
}

/// `(1 - λ)(1 - comEff(q))² + λ probF(q)²`.
pub fn objective(q: f64, lambda: f64, p: f64, f_t: usize) -> f64 {
    let ineff = 1.0 - com_eff(q, f_t);
    let fault = prob_f(q, p, f_t);
    (1.0 - lambda) * ineff * ineff + lambda * fault * fault
}

/// Minimizer of [`objective`] over `q ∈ [0, 1]`:
/// `λb² / ((1-λ)a² + λb²)`.
///
/// When the objective does not depend on `q` (no residual faults, `p = 0`
/// with `λ = 1`, ...) the rule returns 0: without possible faults there is
/// nothing to check.
pub fn q_star(lambda: f64, p: f64, f_t: usize) -> f64 {
    let a = efficiency_slope(f_t);
    let b = tamper_mass(p, f_t);
    let pull_up = lambda * b * b;
    let denom = (1.0 - lambda) * a * a + pull_up;
    if f_t == 0 || pull_up == 0.0 || denom == 0.0 {
        return 0.0;
    }
    (pull_up / denom).clamp(0.0, 1.0)
}

/// Symmetric trimmed mean: sort, drop `trim` values from each end, average.
pub fn trimmed_mean(values: &[f64], trim: usize) -> Result<f64> {
    if values.len() <= 2 * trim {
        return Err(Error::OverTrimmed {
            trim,
            len: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kept = &sorted[trim..sorted.len() - trim];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Traditional,
    Deterministic,
    Randomized,
    Adaptive,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Traditional => "traditional",
            Scheme::Deterministic => "deterministic",
            Scheme::Randomized => "randomized",
            Scheme::Adaptive => "adaptive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "traditional" => Some(Scheme::Traditional),
            "deterministic" => Some(Scheme::Deterministic),
            "randomized" => Some(Scheme::Randomized),
            "adaptive" => Some(Scheme::Adaptive),
            _ => None,
        }
    }
}

/// Mutable scheme state carried between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub scheme: Scheme,
    /// Fault-check probability in effect (fixed for the randomized scheme,
    /// recomputed each round by the adaptive one).
    pub q: f64,
    pub f: usize,
    /// Byzantine workers identified so far.
    pub identified: usize,
    /// Tamper probability assumed by the adaptive rule.
    pub assumed_p: f64,
    pub lambda: f64,
}

impl PolicyState {
    pub fn new(scheme: Scheme, f: usize, q: f64, assumed_p: f64) -> Result<Self> {
        check_unit("q", q)?;
        check_unit("assumed p", assumed_p)?;
        Ok(PolicyState {
            scheme,
            q,
            f,
            identified: 0,
            assumed_p,
            lambda: 0.0,
        })
    }

    /// Residual fault budget `f - κ`.
    pub fn f_t(&self) -> usize {
        self.f.saturating_sub(self.identified)
    }

    pub fn record_identified(&mut self, count: usize) -> Result<()> {
        if self.identified + count > self.f {
            return Err(Error::Invariant(format!(
                "{} identified workers exceed the fault budget f = {}",
                self.identified + count,
                self.f
            )));
        }
        self.identified += count;
        Ok(())
    }

    /// Adaptive update from the observed loss; returns the new `q`.
    pub fn adapt(&mut self, loss: f64) -> Result<f64> {
        self.lambda = lambda_from_loss(loss)?;
        self.q = q_star(self.lambda, self.assumed_p, self.f_t());
        Ok(self.q)
    }
}
