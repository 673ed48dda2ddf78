//! Per-round traces, regret and violation series, and seed aggregation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    /// Hash (or other identifier) of the resolved configuration.
    pub config_id: String,
    pub seed: u64,
    pub variant: String,
    pub pricing: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub f_true: f64,
    pub g_true: f64,
    /// Observed reward, if it became visible within the horizon.
    pub r_obs: Option<f64>,
    pub c_obs: Option<f64>,
    pub q: f64,
    pub beta_f: f64,
    pub beta_g: f64,
    pub extra_scaler: f64,
    pub sigma_f: f64,
    pub sigma_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub rounds: Vec<RoundRecord>,
    /// Penalty after the last update, `Q_{T+1}`.
    pub final_penalty: f64,
}

impl Trace {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    /// `Q_1, ..., Q_{T+1}`.
    pub fn penalties(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self.rounds.iter().map(|r| r.q).collect();
        q.push(self.final_penalty);
        q
    }

    /// Rounds `t` at which `Q_{t+1} < Q_t` or `Q_{t+1} < sqrt(t)`, or `Q_1 < 1`.
    pub fn penalty_violations(&self) -> Vec<usize> {
        let q = self.penalties();
        let mut bad = Vec::new();
        if q[0] < 1.0 {
            bad.push(1);
        }
        for t in 1..q.len() {
            if q[t] < q[t - 1] || q[t] < libm::sqrt(t as f64) {
                bad.push(t);
            }
        }
        bad
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    /// Cumulative regret `R(t)`.
    pub regret: Vec<f64>,
    /// Cumulative hard violation `V(t) = sum g^+`.
    pub violation: Vec<f64>,
    /// Cumulative soft violation `sum g`.
    pub soft_violation: Vec<f64>,
}

fn running_average(series: &[f64]) -> Vec<f64> {
    series
        .iter()
        .enumerate()
        .map(|(i, v)| v / (i + 1) as f64)
        .collect()
}

impl MetricSeries {
    pub fn avg_regret(&self) -> Vec<f64> {
        running_average(&self.regret)
    }

    pub fn avg_violation(&self) -> Vec<f64> {
        running_average(&self.violation)
    }

    pub fn avg_soft_violation(&self) -> Vec<f64> {
        running_average(&self.soft_violation)
    }
}

/// `R(t) = sum_{s <= t} (f_s(x_s*) - f_s(x_s))`; `optimum[s - 1]` is `f_s(x_s*)`.
pub fn regret(trace: &Trace, optimum: &[f64]) -> Result<Vec<f64>> {
    if optimum.len() < trace.rounds.len() {
        return Err(Error::DimensionMismatch {
            expected: trace.rounds.len(),
            got: optimum.len(),
        });
    }
    let mut acc = 0.0;
    Ok(trace
        .rounds
        .iter()
        .zip(optimum)
        .map(|(r, opt)| {
            acc += opt - r.f_true;
            acc
        })
        .collect())
}

/// Hard and soft cumulative violation.
pub fn violation(trace: &Trace) -> (Vec<f64>, Vec<f64>) {
    let (mut hard, mut soft) = (0.0, 0.0);
    trace
        .rounds
        .iter()
        .map(|r| {
            hard += r.g_true.max(0.0);
            soft += r.g_true;
            (hard, soft)
        })
        .unzip()
}

pub fn metric_series(trace: &Trace, optimum: &[f64]) -> Result<MetricSeries> {
    let regret = regret(trace, optimum)?;
    let (violation, soft_violation) = violation(trace);
    Ok(MetricSeries {
        regret,
        violation,
        soft_violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub mean_avg_regret: f64,
    pub std_avg_regret: f64,
    pub mean_avg_violation: f64,
    pub std_avg_violation: f64,
    pub mean_avg_soft_violation: f64,
    pub std_avg_soft_violation: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1.0)))
}

/// Per-round seed statistics of `R(t)/t`, `V(t)/t` and the soft violation.
/// All traces must share configuration and horizon, in any seed order.
pub fn aggregate(traces: &[Trace], optimum: &[f64]) -> Result<Vec<SummaryRow>> {
    let first = traces.first().ok_or(Error::HeterogeneousTraces)?;
    for tr in traces {
        if tr.meta.config_id != first.meta.config_id
            || tr.meta.variant != first.meta.variant
            || tr.meta.pricing != first.meta.pricing
            || tr.horizon() != first.horizon()
        {
            return Err(Error::HeterogeneousTraces);
        }
    }
    let mut order: Vec<&Trace> = traces.iter().collect();
    order.sort_by_key(|t| t.meta.seed);
    let series: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = order
        .iter()
        .map(|tr| {
            let m = metric_series(tr, optimum)?;
            Ok((m.avg_regret(), m.avg_violation(), m.avg_soft_violation()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(first.horizon());
    let mut col = Vec::with_capacity(series.len());
    for i in 0..first.horizon() {
        let mut stat = |pick: fn(&(Vec<f64>, Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
            col.clear();
            col.extend(series.iter().map(|s| pick(s)[i]));
            mean_std(&col)
        };
        let (mr, sr) = stat(|s| &s.0);
        let (mv, sv) = stat(|s| &s.1);
        let (ms, ss) = stat(|s| &s.2);
        rows.push(SummaryRow {
            t: i + 1,
            mean_avg_regret: mr,
            std_avg_regret: sr,
            mean_avg_violation: mv,
            std_avg_violation: sv,
            mean_avg_soft_violation: ms,
            std_avg_soft_violation: ss,
        });
    }
    Ok(rows)
}
