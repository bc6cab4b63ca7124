//! Trace alignment and accuracy metrics against a reference rate.

use serde::{Deserialize, Serialize};

use crate::amtc::FrequencyTrace;
use crate::error::{contract, Error, Result};

/// Minimum overlap, in seconds, for alignment and metrics.
pub const MIN_OVERLAP_S: f64 = 10.0;

/// Rate samples on a strictly increasing time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTrace {
    pub time_s: Vec<f64>,
    pub bpm: Vec<f64>,
}

impl RateTrace {
    pub fn new(time_s: Vec<f64>, bpm: Vec<f64>) -> Result<Self> {
        if time_s.len() != bpm.len() {
            return Err(Error::Data(format!(
                "rate trace has {} times but {} values",
                time_s.len(),
                bpm.len()
            )));
        }
        if time_s.len() < 2 {
            return Err(Error::Data("rate trace needs at least 2 samples".into()));
        }
        if time_s.iter().chain(&bpm).any(|x| !x.is_finite()) {
            return Err(Error::Data("rate trace contains non-finite values".into()));
        }
        if time_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("rate trace times are not strictly increasing".into()));
        }
        Ok(RateTrace { time_s, bpm })
    }

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    /// Median sample spacing.
    pub fn sample_period(&self) -> f64 {
        let mut d: Vec<f64> = self.time_s.windows(2).map(|w| w[1] - w[0]).collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    }

    /// Linear interpolation; `None` outside the sampled span.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let ts = &self.time_s;
        if t < ts[0] || t > ts[ts.len() - 1] {
            return None;
        }
        let i = ts.partition_point(|&x| x <= t);
        if i == 0 {
            return Some(self.bpm[0]);
        }
        if i == ts.len() {
            return Some(self.bpm[ts.len() - 1]);
        }
        let (t0, t1) = (ts[i - 1], ts[i]);
        let a = (t - t0) / (t1 - t0);
        Some(self.bpm[i - 1] + a * (self.bpm[i] - self.bpm[i - 1]))
    }

    /// Shifts every timestamp by `d` seconds.
    pub fn shifted(&self, d: f64) -> RateTrace {
        RateTrace {
            time_s: self.time_s.iter().map(|t| t + d).collect(),
            bpm: self.bpm.clone(),
        }
    }
}

impl From<&FrequencyTrace> for RateTrace {
    fn from(t: &FrequencyTrace) -> Self {
        RateTrace {
            time_s: t.time_axis.clone(),
            bpm: t.freqs_bpm.clone(),
        }
    }
}

/// Both traces on a common grid at the coarser sample period.
#[derive(Debug, Clone)]
struct CommonGrid {
    dt: f64,
    est: Vec<Option<f64>>,
    reference: Vec<Option<f64>>,
}

impl CommonGrid {
    fn build(est: &RateTrace, reference: &RateTrace, max_lag_s: f64) -> Self {
        // Grid points coincide with the coarser trace's samples and extend by
        // the lag range so shifted samples still land on it.
        let coarse = if est.sample_period() >= reference.sample_period() { est } else { reference };
        let n_c = coarse.len();
        let dt = (coarse.time_s[n_c - 1] - coarse.time_s[0]) / (n_c - 1) as f64;
        let start = est.time_s[0].min(reference.time_s[0]) - max_lag_s;
        let end = est.time_s[est.len() - 1].max(reference.time_s[reference.len() - 1]) + max_lag_s;
        let before = ((coarse.time_s[0] - start) / dt).ceil() as i64;
        let t0 = coarse.time_s[0] - before as f64 * dt;
        let n = ((end - t0) / dt + 1e-9).floor() as usize + 1;
        let at = |k: usize| t0 + k as f64 * dt;
        CommonGrid {
            dt,
            est: (0..n).map(|k| est.value_at(at(k))).collect(),
            reference: (0..n).map(|k| reference.value_at(at(k))).collect(),
        }
    }

    /// Pairs `(est(t), ref(t - lag))` on the grid.
    fn pairs(&self, lag_steps: i64) -> Vec<(f64, f64)> {
        let n = self.est.len() as i64;
        (0..n)
            .filter_map(|k| {
                let j = k - lag_steps;
                if j < 0 || j >= n {
                    return None;
                }
                Some((self.est[k as usize]?, self.reference[j as usize]?))
            })
            .collect()
    }
}

fn overlap_s(n: usize, dt: f64) -> f64 {
    n.saturating_sub(1) as f64 * dt
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let constant = |f: fn(&(f64, f64)) -> f64| pairs.iter().all(|p| f(p) == f(&pairs[0]));
    if pairs.is_empty() || constant(|p| p.0) || constant(|p| p.1) {
        return None;
    }
    let n = pairs.len() as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Lag `d` (seconds) in `[-max_lag_s, max_lag_s]` maximizing the Pearson
/// correlation of `est(t)` with `reference(t - d)`. Ties prefer smaller `|d|`,
/// then negative `d`.
pub fn align(est: &RateTrace, reference: &RateTrace, max_lag_s: f64) -> Result<f64> {
    contract!(
        max_lag_s.is_finite() && max_lag_s >= 0.0,
        "max_lag_s must be finite and >= 0, got {max_lag_s}"
    );
    let grid = CommonGrid::build(est, reference, max_lag_s);
    let max_steps = (max_lag_s / grid.dt + 1e-9).floor() as i64;
    let mut best: Option<(i64, f64)> = None;
    let mut any_overlap = false;
    let mut order = vec![0i64];
    for k in 1..=max_steps {
        order.push(-k);
        order.push(k);
    }
    for lag in order {
        let pairs = grid.pairs(lag);
        if overlap_s(pairs.len(), grid.dt) < MIN_OVERLAP_S {
            continue;
        }
        any_overlap = true;
        let Some(r) = pearson(&pairs) else {
            continue;
        };
        if best.is_none_or(|(_, b)| r > b + 1e-12) {
            best = Some((lag, r));
        }
    }
    contract!(any_overlap, "traces overlap by less than {MIN_OVERLAP_S} s at every lag");
    let (lag, _) = best
        .ok_or_else(|| Error::Contract("correlation undefined: a trace has zero variance".into()))?;
    Ok(lag as f64 * grid.dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse_bpm: f64,
    pub sd_abs_error_bpm: f64,
    pub me_rate_percent: f64,
    pub applied_lag_s: f64,
    pub n_samples: usize,
}

/// Metrics of `est(t)` against `reference(t - lag_s)` over their overlap on
/// the common grid.
pub fn compute_metrics(est: &RateTrace, reference: &RateTrace, lag_s: f64) -> Result<EvalReport> {
    if let Some(r) = reference.bpm.iter().find(|&&r| r <= 0.0) {
        return Err(Error::Contract(format!(
            "reference value {r} <= 0 makes the relative error undefined"
        )));
    }
    let grid = CommonGrid::build(est, reference, lag_s.abs());
    let steps = (lag_s / grid.dt).round() as i64;
    let pairs = grid.pairs(steps);
    contract!(
        overlap_s(pairs.len(), grid.dt) >= MIN_OVERLAP_S,
        "aligned overlap of {:.3} s is below {MIN_OVERLAP_S} s",
        overlap_s(pairs.len(), grid.dt)
    );
    let n = pairs.len() as f64;
    let abs: Vec<f64> = pairs.iter().map(|(e, r)| (e - r).abs()).collect();
    let mse = abs.iter().map(|a| a * a).sum::<f64>() / n;
    let mean_abs = abs.iter().sum::<f64>() / n;
    let var_abs = abs.iter().map(|a| (a - mean_abs).powi(2)).sum::<f64>() / n;
    let rel = pairs.iter().zip(&abs).map(|((_, r), a)| a / r).sum::<f64>() / n;
    Ok(EvalReport {
        rmse_bpm: mse.sqrt(),
        sd_abs_error_bpm: var_abs.sqrt(),
        me_rate_percent: 100.0 * rel,
        applied_lag_s: steps as f64 * grid.dt,
        n_samples: pairs.len(),
    })
}

/// Aligns within `max_lag_s` (no search when zero) and computes metrics.
pub fn evaluate(est: &RateTrace, reference: &RateTrace, max_lag_s: f64) -> Result<EvalReport> {
    let lag = if max_lag_s > 0.0 {
        align(est, reference, max_lag_s)?
    } else {
        0.0
    };
    compute_metrics(est, reference, lag)
}

/// Converts event timestamps (one per breath or beat) into a rate trace with
/// sliding windows: rate = 60 (n - 1) / (last - first) over the events inside
/// each window.
pub fn events_to_rate_trace(events: &[f64], window_s: f64, step_s: f64) -> Result<RateTrace> {
    contract!(window_s > 0.0 && step_s > 0.0, "window and step must be positive");
    if events.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Data("event times are not strictly increasing".into()));
    }
    if events.len() < 2 {
        return Err(Error::Data("need at least 2 events".into()));
    }
    let (first, last) = (events[0], events[events.len() - 1]);
    let mut time_s = Vec::new();
    let mut bpm = Vec::new();
    let mut k = 0usize;
    loop {
        let start = first + k as f64 * step_s;
        let end = start + window_s;
        if end > last + 1e-9 {
            break;
        }
        let inside: Vec<f64> = events.iter().copied().filter(|&e| e >= start && e <= end).collect();
        if inside.len() >= 2 {
            let span = inside[inside.len() - 1] - inside[0];
            time_s.push(start + window_s / 2.0);
            bpm.push(60.0 * (inside.len() - 1) as f64 / span);
        }
        k += 1;
    }
    RateTrace::new(time_s, bpm)
}
