//! Dynamic-programming frequency tracking over a spectrogram.
//!
//! A trace maximizes `sum_t M[t, b_t] - lambda * sum_t |b_t - b_{t-1}|`. The
//! transition max over all source bins is split into a forward and a backward
//! running scan, so each column costs O(F). Ties go to the lower bin index.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::spectral::{argmax, Spectrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmtcParams {
    /// Score units per bin of frequency change.
    pub jump_penalty_lambda: f64,
    /// Columns that stay revisable in online tracking.
    pub backtrack_len: usize,
    pub num_traces: usize,
    pub suppression_halfwidth_bins: usize,
}

impl Default for AmtcParams {
    fn default() -> Self {
        AmtcParams {
            jump_penalty_lambda: 0.15,
            backtrack_len: 10,
            num_traces: 1,
            suppression_halfwidth_bins: 14,
        }
    }
}

impl AmtcParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("amtc: {m}")));
        if !(self.jump_penalty_lambda.is_finite() && self.jump_penalty_lambda >= 0.0) {
            return bad("jump_penalty_lambda must be finite and >= 0");
        }
        if self.backtrack_len < 1 {
            return bad("backtrack_len must be >= 1");
        }
        if self.num_traces < 1 {
            return bad("num_traces must be >= 1");
        }
        if self.suppression_halfwidth_bins < 1 {
            return bad("suppression_halfwidth_bins must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    pub time_axis: Vec<f64>,
    pub freqs_bpm: Vec<f64>,
    /// Objective value of `bins`.
    pub score: f64,
    pub bins: Vec<usize>,
    /// Per-column reward minus the jump penalty paid to enter that column.
    pub score_contrib: Vec<f64>,
}

impl FrequencyTrace {
    /// Builds a trace from a bin path, scoring it against `magnitudes`.
    pub fn from_path(spec: &Spectrogram, bins: Vec<usize>, lambda: f64) -> Self {
        let score_contrib = path_contributions(&spec.magnitudes, &bins, lambda);
        let score = path_score(&spec.magnitudes, &bins, lambda);
        FrequencyTrace {
            time_axis: spec.time_axis.clone(),
            freqs_bpm: bins.iter().map(|&b| spec.freq_axis_bpm[b]).collect(),
            score,
            bins,
            score_contrib,
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Reward of each column minus the jump penalty paid to enter it.
fn path_contributions(m: &[Vec<f64>], bins: &[usize], lambda: f64) -> Vec<f64> {
    bins.iter()
        .enumerate()
        .map(|(t, &b)| {
            let jump = if t == 0 { 0 } else { b.abs_diff(bins[t - 1]) };
            m[t][b] - lambda * jump as f64
        })
        .collect()
}

/// Objective of a path, accumulated in the same order as the DP.
pub(crate) fn path_score(m: &[Vec<f64>], bins: &[usize], lambda: f64) -> f64 {
    let mut acc = m[0][bins[0]];
    for t in 1..bins.len() {
        acc = (acc - lambda * bins[t].abs_diff(bins[t - 1]) as f64) + m[t][bins[t]];
    }
    acc
}

/// One DP step: `next[i] = max_j (prev[j] - lambda*|i-j|) + col[i]`, with the
/// winning `j` written to `from`.
fn dp_step(prev: &[f64], col: &[f64], lambda: f64, next: &mut [f64], from: &mut [u32]) {
    let f = prev.len();
    // Forward: best source j <= i. The carried source wins ties (lower index).
    let mut fwd_val = vec![0.0; f];
    let mut fwd_src = vec![0u32; f];
    let mut src = 0usize;
    for i in 0..f {
        let carried = prev[src] - lambda * (i - src) as f64;
        if i > 0 && carried >= prev[i] {
            fwd_val[i] = carried;
        } else {
            src = i;
            fwd_val[i] = prev[i];
        }
        fwd_src[i] = src as u32;
    }
    // Backward: best source j >= i. Self wins ties (lower index).
    let mut src = f - 1;
    for i in (0..f).rev() {
        let carried = prev[src] - lambda * (src - i) as f64;
        let (val, s) = if i < f - 1 && carried > prev[i] {
            (carried, src)
        } else {
            src = i;
            (prev[i], i)
        };
        if fwd_val[i] >= val {
            next[i] = fwd_val[i] + col[i];
            from[i] = fwd_src[i];
        } else {
            next[i] = val + col[i];
            from[i] = s as u32;
        }
    }
}

fn check_column(col: &[f64], bins: usize, t: usize) -> Result<()> {
    contract!(
        col.len() == bins,
        "column {t} has {} bins, expected {bins}",
        col.len()
    );
    contract!(
        col.iter().all(|m| m.is_finite() && *m >= 0.0),
        "column {t} has a negative or non-finite magnitude"
    );
    Ok(())
}

/// Offline DP over the whole spectrogram.
pub fn track_trace(spec: &Spectrogram, params: &AmtcParams) -> Result<FrequencyTrace> {
    params.validate()?;
    let t_cols = spec.num_columns();
    let f = spec.num_bins();
    contract!(t_cols >= 1, "cannot track an empty spectrogram");
    contract!(f >= 2, "tracking needs at least 2 bins, got {f}");
    let lambda = params.jump_penalty_lambda;
    let mut acc = spec.magnitudes[0].clone();
    check_column(&acc, f, 0)?;
    let mut next = vec![0.0; f];
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(t_cols);
    back.push(Vec::new());
    for t in 1..t_cols {
        let col = &spec.magnitudes[t];
        check_column(col, f, t)?;
        let mut from = vec![0u32; f];
        dp_step(&acc, col, lambda, &mut next, &mut from);
        std::mem::swap(&mut acc, &mut next);
        back.push(from);
    }
    let mut bins = vec![0usize; t_cols];
    bins[t_cols - 1] = argmax(&acc);
    for t in (1..t_cols).rev() {
        bins[t - 1] = back[t][bins[t]] as usize;
    }
    Ok(FrequencyTrace::from_path(spec, bins, lambda))
}

/// Column-at-a-time tracker. After each column the last `backtrack_len`
/// estimates are replaced by the current optimal path's suffix; older ones
/// are frozen.
#[derive(Debug, Clone)]
pub struct OnlineTracker {
    params: AmtcParams,
    num_bins: usize,
    acc: Vec<f64>,
    back: Vec<Vec<u32>>,
    columns: Vec<Vec<f64>>,
    estimates: Vec<usize>,
}

impl OnlineTracker {
    pub fn new(num_bins: usize, params: &AmtcParams) -> Result<Self> {
        params.validate()?;
        contract!(num_bins >= 2, "tracking needs at least 2 bins, got {num_bins}");
        Ok(OnlineTracker {
            params: params.clone(),
            num_bins,
            acc: Vec::new(),
            back: Vec::new(),
            columns: Vec::new(),
            estimates: Vec::new(),
        })
    }

    /// Consumes one column and returns the current bin estimates for every
    /// column seen so far.
    pub fn push(&mut self, column: &[f64]) -> Result<&[usize]> {
        let t = self.columns.len();
        check_column(column, self.num_bins, t)?;
        if t == 0 {
            self.acc = column.to_vec();
            self.back.push(Vec::new());
        } else {
            let mut next = vec![0.0; self.num_bins];
            let mut from = vec![0u32; self.num_bins];
            dp_step(&self.acc, column, self.params.jump_penalty_lambda, &mut next, &mut from);
            self.acc = next;
            self.back.push(from);
        }
        self.columns.push(column.to_vec());
        self.estimates.push(0);
        let mut b = argmax(&self.acc);
        let oldest = (t + 1).saturating_sub(self.params.backtrack_len);
        for c in (oldest..=t).rev() {
            self.estimates[c] = b;
            if c > 0 {
                b = self.back[c][b] as usize;
            }
        }
        Ok(&self.estimates)
    }

    pub fn estimates(&self) -> &[usize] {
        &self.estimates
    }

    /// Number of leading estimates that can no longer change.
    pub fn frozen_len(&self) -> usize {
        self.estimates.len().saturating_sub(self.params.backtrack_len)
    }

    /// Final trace over all pushed columns.
    pub fn finish(self, time_axis: Vec<f64>, freq_axis_bpm: &[f64]) -> Result<FrequencyTrace> {
        contract!(!self.estimates.is_empty(), "online tracker received no columns");
        contract!(
            time_axis.len() == self.estimates.len() && freq_axis_bpm.len() == self.num_bins,
            "axes do not match the tracked columns"
        );
        let lambda = self.params.jump_penalty_lambda;
        let score_contrib = path_contributions(&self.columns, &self.estimates, lambda);
        let score = path_score(&self.columns, &self.estimates, lambda);
        Ok(FrequencyTrace {
            time_axis,
            freqs_bpm: self.estimates.iter().map(|&b| freq_axis_bpm[b]).collect(),
            score,
            bins: self.estimates,
            score_contrib,
        })
    }
}

/// Streams the spectrogram's columns through an [`OnlineTracker`].
pub fn track_online(spec: &Spectrogram, params: &AmtcParams) -> Result<FrequencyTrace> {
    let mut tracker = OnlineTracker::new(spec.num_bins(), params)?;
    for col in &spec.magnitudes {
        tracker.push(col)?;
    }
    tracker.finish(spec.time_axis.clone(), &spec.freq_axis_bpm)
}

/// Zeroes bins within `halfwidth` of the trace in every column.
pub fn suppress_trace(spec: &Spectrogram, trace: &FrequencyTrace, halfwidth: usize) -> Result<Spectrogram> {
    contract!(
        trace.bins.len() == spec.num_columns(),
        "trace has {} columns, spectrogram has {}",
        trace.bins.len(),
        spec.num_columns()
    );
    let f = spec.num_bins();
    let mut out = spec.clone();
    for (col, &b) in out.magnitudes.iter_mut().zip(&trace.bins) {
        contract!(b < f, "trace bin {b} outside {f} bins");
        let lo = b.saturating_sub(halfwidth);
        let hi = (b + halfwidth).min(f - 1);
        col[lo..=hi].iter_mut().for_each(|m| *m = 0.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Strongest first.
    pub traces: Vec<FrequencyTrace>,
    /// Set when suppression emptied the spectrogram before `num_traces` traces
    /// were found.
    pub exhausted: bool,
}

/// Repeated track-then-suppress.
pub fn extract_traces(spec: &Spectrogram, params: &AmtcParams) -> Result<Extraction> {
    params.validate()?;
    let mut current = spec.clone();
    let mut traces = Vec::with_capacity(params.num_traces);
    let mut exhausted = false;
    for k in 0..params.num_traces {
        if k > 0 && current.is_all_zero() {
            warn!(
                "spectrogram exhausted after {k} of {} requested traces",
                params.num_traces
            );
            exhausted = true;
            break;
        }
        let trace = track_trace(&current, params)?;
        if k + 1 < params.num_traces {
            current = suppress_trace(&current, &trace, params.suppression_halfwidth_bins)?;
        }
        traces.push(trace);
    }
    Ok(Extraction { traces, exhausted })
}
