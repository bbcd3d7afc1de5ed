//! Aggregates over per-round records. Everything here is computable from
//! the CSV columns alone.

use std::fmt;

use crate::engine::RoundRecord;
use crate::error::{Error, Result};
use crate::policy;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub trials: usize,
    pub rounds: usize,
    /// Per-iteration efficiency averaged across the trials that reached it.
    pub efficiency_by_iteration: Vec<f64>,
    /// Mean of per-round efficiency over all rounds.
    pub mean_efficiency: f64,
    /// Total used over total computed.
    pub pooled_efficiency: f64,
    pub fault_check_rate: f64,
    pub faulty_update_rate: f64,
    /// For each trial, the 1-based round count at which each identification
    /// happened (one entry per identified worker).
    pub identification_rounds: Vec<Vec<u64>>,
    pub final_dist_to_opt: Vec<f64>,
    pub loss_curve: Vec<f64>,
}

fn mean_by_iteration(records: &[Vec<RoundRecord>], value: impl Fn(&RoundRecord) -> f64) -> Vec<f64> {
    let len = records.iter().map(Vec::len).max().unwrap_or(0);
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for trial in records {
        for (i, r) in trial.iter().enumerate() {
            sums[i] += value(r);
            counts[i] += 1;
        }
    }
    sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect()
}

pub fn summarize(records: &[Vec<RoundRecord>]) -> Result<MetricsSummary> {
    let rounds: usize = records.iter().map(Vec::len).sum();
    if rounds == 0 {
        return Err(Error::EmptyInput("records"));
    }
    let all = || records.iter().flatten();
    let n = rounds as f64;
    let used: usize = all().map(|r| r.gradients_used).sum();
    let computed: usize = all().map(|r| r.gradients_computed).sum();
    let identification_rounds = records
        .iter()
        .map(|trial| {
            let mut prev = 0;
            let mut out = Vec::new();
            for r in trial {
                for _ in prev..r.identified_cum {
                    out.push(r.iteration + 1);
                }
                prev = prev.max(r.identified_cum);
            }
            out
        })
        .collect();
    Ok(MetricsSummary {
        trials: records.len(),
        rounds,
        efficiency_by_iteration: mean_by_iteration(records, RoundRecord::efficiency),
        mean_efficiency: all().map(RoundRecord::efficiency).sum::<f64>() / n,
        pooled_efficiency: used as f64 / computed as f64,
        fault_check_rate: all().filter(|r| r.fault_check).count() as f64 / n,
        faulty_update_rate: all().filter(|r| r.update_faulty).count() as f64 / n,
        identification_rounds,
        final_dist_to_opt: records
            .iter()
            .filter_map(|t| t.last().map(|r| r.dist_to_opt))
            .collect(),
        loss_curve: mean_by_iteration(records, |r| r.loss),
    })
}

impl MetricsSummary {
    /// Fraction of trials whose first identification had not happened after
    /// `t` rounds.
    pub fn unidentified_fraction(&self, t: u64) -> f64 {
        let waiting = self
            .identification_rounds
            .iter()
            .filter(|ids| ids.first().is_none_or(|first| *first > t))
            .count();
        waiting as f64 / self.trials as f64
    }

    /// Mean round of first identification over trials that identified.
    pub fn mean_first_identification(&self) -> Option<f64> {
        let firsts: Vec<u64> = self.identification_rounds.iter().filter_map(|ids| ids.first().copied()).collect();
        (!firsts.is_empty()).then(|| firsts.iter().sum::<u64>() as f64 / firsts.len() as f64)
    }

    pub fn mean_final_dist(&self) -> f64 {
        self.final_dist_to_opt.iter().sum::<f64>() / self.final_dist_to_opt.len().max(1) as f64
    }

    /// Sets the empirical figures beside their analytic counterparts.
    pub fn compare(&self, f: usize, q: f64, p: f64) -> Result<BoundComparison> {
        let horizon = self.efficiency_by_iteration.len() as u64;
        Ok(BoundComparison {
            efficiency_bound: policy::expected_efficiency_bound(q, f)?,
            mean_efficiency: self.mean_efficiency,
            predicted_faulty_rate: policy::prob_faulty_update(q, p, f)?,
            faulty_update_rate: self.faulty_update_rate,
            unidentified: (1..=horizon.min(50))
                .map(|t| (t, self.unidentified_fraction(t), policy::prob_unidentified(q, p, t)))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundComparison {
    pub efficiency_bound: f64,
    pub mean_efficiency: f64,
    pub predicted_faulty_rate: f64,
    pub faulty_update_rate: f64,
    /// `(t, empirical unidentified fraction, (1 - q p)^t)`.
    pub unidentified: Vec<(u64, f64, f64)>,
}

impl fmt::Display for MetricsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials               {}", self.trials)?;
        writeln!(f, "rounds               {}", self.rounds)?;
        writeln!(f, "mean efficiency      {:.6}", self.mean_efficiency)?;
        writeln!(f, "pooled efficiency    {:.6}", self.pooled_efficiency)?;
        writeln!(f, "fault-check rate     {:.6}", self.fault_check_rate)?;
        writeln!(f, "faulty-update rate   {:.6}", self.faulty_update_rate)?;
        if let Some(m) = self.mean_first_identification() {
            writeln!(f, "mean first ident.    {m:.3} rounds")?;
        }
        write!(f, "mean final ‖w - w*‖  {:.6e}", self.mean_final_dist())
    }
}

impl fmt::Display for BoundComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "efficiency           {:.6} (bound {:.6})", self.mean_efficiency, self.efficiency_bound)?;
        writeln!(
            f,
            "faulty-update rate   {:.6} (predicted before elimination {:.6})",
            self.faulty_update_rate, self.predicted_faulty_rate
        )?;
        writeln!(f, "t   unidentified  bound")?;
        for (t, emp, bound) in &self.unidentified {
            writeln!(f, "{t:<3} {emp:<13.6} {bound:.6}")?;
        }
        Ok(())
    }
}
