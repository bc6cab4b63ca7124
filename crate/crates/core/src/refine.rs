//! Time-domain refinement: moving-average detrending, hard clipping and
//! overlapping-window standardization.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::roi::RawSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub detrend_window_s: f64,
    /// In the signal's native units (pixels or gray levels).
    pub clip_limit: f64,
    pub std_window_s: f64,
    pub zero_variance_epsilon: f64,
    pub detrend: bool,
    pub clip: bool,
    pub standardize: bool,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams::breathing()
    }
}

impl RefineParams {
    /// 2 s detrend, ±1 clip, 4 s standardization.
    pub fn breathing() -> Self {
        RefineParams {
            detrend_window_s: 2.0,
            clip_limit: 1.0,
            std_window_s: 4.0,
            zero_variance_epsilon: 1e-8,
            detrend: true,
            clip: true,
            standardize: true,
        }
    }

    /// Same as [`breathing`](Self::breathing) with a 2 s standardization window.
    pub fn heart_rate() -> Self {
        RefineParams {
            std_window_s: 2.0,
            ..RefineParams::breathing()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("detrend_window_s", self.detrend_window_s),
            ("clip_limit", self.clip_limit),
            ("std_window_s", self.std_window_s),
            ("zero_variance_epsilon", self.zero_variance_epsilon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("refine: {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Output of the refinement chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedSignal {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub provenance: RefineParams,
}

impl RefinedSignal {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn window_samples(window_s: f64, fs: f64) -> usize {
    (window_s * fs).round().max(0.0) as usize
}

/// Subtracts a centred moving average of `window` samples.
///
/// Even windows use `window + 1` taps with half-weight ends so the average
/// stays centred. Near the edges the window shrinks symmetrically to the
/// samples available on both sides.
pub fn detrend_samples(x: &[f64], window: usize) -> Result<Vec<f64>> {
    contract!(x.len() >= 2, "detrend needs at least 2 samples, got {}", x.len());
    contract!(
        window >= 2 && window <= x.len(),
        "detrend window of {window} samples outside [2, {}]",
        x.len()
    );
    let n = x.len();
    let half = window / 2;
    let even = window % 2 == 0;
    let out = (0..n)
        .map(|t| {
            let r = half.min(t).min(n - 1 - t);
            let trend = if r == half && even {
                let inner: f64 = x[t + 1 - r..t + r].iter().sum();
                (inner + 0.5 * (x[t - r] + x[t + r])) / (2 * r) as f64
            } else {
                x[t - r..=t + r].iter().sum::<f64>() / (2 * r + 1) as f64
            };
            x[t] - trend
        })
        .collect();
    Ok(out)
}

pub fn detrend(signal: &RawSignal, window_s: f64) -> Result<RawSignal> {
    contract!(
        signal.len() >= 2,
        "detrend needs at least 2 samples, got {}",
        signal.len()
    );
    let w = window_samples(window_s, signal.fs);
    Ok(signal.with_samples(detrend_samples(&signal.samples, w)?))
}

pub fn clip_samples(x: &[f64], limit: f64) -> Vec<f64> {
    x.iter().map(|v| v.clamp(-limit, limit)).collect()
}

pub fn clip(signal: &RawSignal, limit: f64) -> Result<RawSignal> {
    contract!(limit > 0.0, "clip limit must be > 0, got {limit}");
    Ok(signal.with_samples(clip_samples(&signal.samples, limit)))
}

/// Standardizes every length-`window` segment (one per start index) to zero
/// mean and unit variance and averages the overlapping results per sample.
/// Segments with standard deviation below `epsilon` contribute zeros.
pub fn standardize_samples(x: &[f64], window: usize, epsilon: f64) -> Result<Vec<f64>> {
    let n = x.len();
    contract!(
        window >= 2 && window <= n,
        "standardization window of {window} samples outside [2, {n}]"
    );
    let mut acc = vec![0.0; n];
    let mut count = vec![0u32; n];
    let l = window as f64;
    for s in 0..=n - window {
        let seg = &x[s..s + window];
        let mean = seg.iter().sum::<f64>() / l;
        let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / l;
        let std = var.sqrt();
        if std >= epsilon {
            for (a, v) in acc[s..s + window].iter_mut().zip(seg) {
                *a += (v - mean) / std;
            }
        }
        for c in &mut count[s..s + window] {
            *c += 1;
        }
    }
    Ok(acc.iter().zip(&count).map(|(a, &c)| a / c as f64).collect())
}

pub fn standardize_windows(signal: &RawSignal, window_s: f64, epsilon: f64) -> Result<RefinedSignal> {
    let l = window_samples(window_s, signal.fs);
    Ok(RefinedSignal {
        samples: standardize_samples(&signal.samples, l, epsilon)?,
        fs: signal.fs,
        provenance: RefineParams {
            std_window_s: window_s,
            zero_variance_epsilon: epsilon,
            detrend: false,
            clip: false,
            standardize: true,
            ..RefineParams::default()
        },
    })
}

/// Detrend → clip → standardize, each stage skipped when disabled in `params`.
pub fn refine(signal: &RawSignal, params: &RefineParams) -> Result<RefinedSignal> {
    params.validate()?;
    let mut x = signal.samples.clone();
    if params.detrend {
        x = detrend_samples(&x, window_samples(params.detrend_window_s, signal.fs))?;
    }
    if params.clip {
        x = clip_samples(&x, params.clip_limit);
    }
    if params.standardize {
        x = standardize_samples(
            &x,
            window_samples(params.std_window_s, signal.fs),
            params.zero_variance_epsilon,
        )?;
    }
    Ok(RefinedSignal {
        samples: x,
        fs: signal.fs,
        provenance: params.clone(),
    })
}
