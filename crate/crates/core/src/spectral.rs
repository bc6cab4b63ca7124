//! Short-time magnitude spectra, band-limited and max-normalized per column.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::refine::RefinedSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFunction {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl WindowFunction {
    /// Symmetric taper of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let d = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let c = (2.0 * PI * i as f64 / d).cos();
                match self {
                    WindowFunction::Hann => 0.5 - 0.5 * c,
                    WindowFunction::Hamming => 0.54 - 0.46 * c,
                    WindowFunction::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrogramParams {
    pub window_s: f64,
    pub overlap_fraction: f64,
    pub fft_points: usize,
    pub band_lo_bpm: f64,
    pub band_hi_bpm: f64,
    pub window_function: WindowFunction,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        SpectrogramParams::breathing()
    }
}

impl SpectrogramParams {
    /// 10 s window, 98 % overlap, 2048-point FFT, 15–50 bpm.
    pub fn breathing() -> Self {
        SpectrogramParams {
            window_s: 10.0,
            overlap_fraction: 0.98,
            fft_points: 2048,
            band_lo_bpm: 15.0,
            band_hi_bpm: 50.0,
            window_function: WindowFunction::Hann,
        }
    }

    /// Same framing as [`breathing`](Self::breathing), 40–180 bpm.
    pub fn heart_rate() -> Self {
        SpectrogramParams {
            band_lo_bpm: 40.0,
            band_hi_bpm: 180.0,
            ..SpectrogramParams::breathing()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("spectral: {m}")));
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return bad(format!("window_s must be > 0, got {}", self.window_s));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad(format!("overlap_fraction must be in [0, 1), got {}", self.overlap_fraction));
        }
        if !(self.band_lo_bpm > 0.0 && self.band_lo_bpm < self.band_hi_bpm) {
            return bad(format!(
                "band must satisfy 0 < lo < hi, got {}..{}",
                self.band_lo_bpm, self.band_hi_bpm
            ));
        }
        if self.fft_points < 2 {
            return bad("fft_points must be >= 2".into());
        }
        Ok(())
    }

    /// `(W, hop)` in samples at sampling rate `fs`.
    pub fn framing(&self, fs: f64) -> (usize, usize) {
        let w = (self.window_s * fs).round() as usize;
        let hop = ((w as f64 * (1.0 - self.overlap_fraction)).round() as usize).max(1);
        (w, hop)
    }
}

/// Number of columns for `n` samples, window `w` and step `hop`.
pub fn column_count(n: usize, w: usize, hop: usize) -> usize {
    if n < w {
        0
    } else {
        (n - w) / hop + 1
    }
}

/// Time × frequency magnitude matrix, stored column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// `magnitudes[t][k]`: column `t`, retained bin `k`.
    pub magnitudes: Vec<Vec<f64>>,
    /// Centre of each column's window, seconds.
    pub time_axis: Vec<f64>,
    pub freq_axis_bpm: Vec<f64>,
    pub fs: f64,
}

impl Spectrogram {
    /// Checks shape, non-negativity and strictly increasing axes.
    pub fn new(magnitudes: Vec<Vec<f64>>, time_axis: Vec<f64>, freq_axis_bpm: Vec<f64>, fs: f64) -> Result<Self> {
        let bins = freq_axis_bpm.len();
        if magnitudes.len() != time_axis.len() {
            return Err(Error::Data(format!(
                "spectrogram has {} columns but {} time stamps",
                magnitudes.len(),
                time_axis.len()
            )));
        }
        if let Some(col) = magnitudes.iter().position(|c| c.len() != bins) {
            return Err(Error::Data(format!("column {col} does not have {bins} bins")));
        }
        if magnitudes.iter().flatten().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Data("spectrogram magnitudes must be finite and >= 0".into()));
        }
        for (name, axis) in [("time", &time_axis), ("frequency", &freq_axis_bpm)] {
            if axis.windows(2).any(|p| !(p[1] > p[0])) {
                return Err(Error::Data(format!("{name} axis is not strictly increasing")));
            }
        }
        Ok(Spectrogram {
            magnitudes,
            time_axis,
            freq_axis_bpm,
            fs,
        })
    }

    pub fn num_columns(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn num_bins(&self) -> usize {
        self.freq_axis_bpm.len()
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.magnitudes[t]
    }

    pub fn is_all_zero(&self) -> bool {
        self.magnitudes.iter().flatten().all(|&m| m == 0.0)
    }

    /// Bin index of the column maximum; lowest index on ties.
    pub fn column_argmax(&self, t: usize) -> usize {
        argmax(&self.magnitudes[t])
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Tapered, zero-padded FFT magnitudes of sliding windows, restricted to the
/// configured band and normalized so each column peaks at 1.
pub fn spectrogram(signal: &RefinedSignal, params: &SpectrogramParams) -> Result<Spectrogram> {
    params.validate()?;
    let fs = signal.fs;
    let (w, hop) = params.framing(fs);
    contract!(w >= 2, "spectrogram window of {w} samples is too short");
    contract!(
        params.fft_points >= w,
        "fft_points {} smaller than the {w}-sample window",
        params.fft_points
    );
    let n = signal.samples.len();
    contract!(n >= w, "signal of {n} samples is shorter than one {w}-sample window");

    let nfft = params.fft_points;
    let bin_bpm = fs * 60.0 / nfft as f64;
    let bins: Vec<usize> = (0..=nfft / 2)
        .filter(|&k| {
            let f = k as f64 * bin_bpm;
            f >= params.band_lo_bpm && f <= params.band_hi_bpm
        })
        .collect();
    contract!(
        !bins.is_empty(),
        "band {}..{} bpm holds no FFT bin at {fs} Hz / {nfft} points",
        params.band_lo_bpm,
        params.band_hi_bpm
    );
    let taper = params.window_function.coefficients(w);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let columns = column_count(n, w, hop);
    let mut magnitudes = Vec::with_capacity(columns);
    let mut time_axis = Vec::with_capacity(columns);
    for c in 0..columns {
        let start = c * hop;
        buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        for (i, (x, t)) in signal.samples[start..start + w].iter().zip(&taper).enumerate() {
            buf[i] = Complex::new(x * t, 0.0);
        }
        fft.process(&mut buf);
        let mut col: Vec<f64> = bins.iter().map(|&k| buf[k].norm()).collect();
        let peak = col.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            col.iter_mut().for_each(|m| *m /= peak);
        }
        magnitudes.push(col);
        time_axis.push((start as f64 + w as f64 / 2.0) / fs);
    }
    let freq_axis_bpm = bins.iter().map(|&k| k as f64 * bin_bpm).collect();
    Spectrogram::new(magnitudes, time_axis, freq_axis_bpm, fs)
}

/// Keeps exactly the bins with `lo <= f <= hi`.
pub fn restrict_band(spec: &Spectrogram, lo_bpm: f64, hi_bpm: f64) -> Result<Spectrogram> {
    let keep: Vec<usize> = spec
        .freq_axis_bpm
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= lo_bpm && f <= hi_bpm)
        .map(|(i, _)| i)
        .collect();
    contract!(
        !keep.is_empty(),
        "band {lo_bpm}..{hi_bpm} bpm does not intersect the spectrogram axis"
    );
    Ok(Spectrogram {
        magnitudes: spec
            .magnitudes
            .iter()
            .map(|col| keep.iter().map(|&k| col[k]).collect())
            .collect(),
        time_axis: spec.time_axis.clone(),
        freq_axis_bpm: keep.iter().map(|&k| spec.freq_axis_bpm[k]).collect(),
        fs: spec.fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::RefineParams;
    use proptest::prelude::*;

    fn refined(samples: Vec<f64>, fs: f64) -> RefinedSignal {
        RefinedSignal {
            samples,
            fs,
            provenance: RefineParams::default(),
        }
    }

    fn tone(bpm: f64, fs: f64, secs: f64) -> RefinedSignal {
        let n = (fs * secs) as usize;
        refined(
            (0..n)
                .map(|i| (2.0 * PI * bpm / 60.0 * i as f64 / fs).sin())
                .collect(),
            fs,
        )
    }

    #[test]
    fn default_framing_at_30_fps() {
        assert_eq!(SpectrogramParams::breathing().framing(30.0), (300, 6));
    }

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let p = SpectrogramParams::breathing();
        let s = spectrogram(&tone(25.0, 30.0, 60.0), &p).unwrap();
        let bin_bpm = 30.0 * 60.0 / 2048.0;
        assert_eq!(s.num_columns(), column_count(1800, 300, 6));
        assert!((s.time_axis[0] - 5.0).abs() < 1e-12);
        for t in 0..s.num_columns() {
            let f = s.freq_axis_bpm[s.column_argmax(t)];
            assert!((f - 25.0).abs() <= bin_bpm, "column {t}: {f}");
            let max = s.column(t).iter().cloned().fold(0.0, f64::max);
            assert_eq!(max, 1.0);
        }
        assert!(s.freq_axis_bpm.iter().all(|&f| (15.0..=50.0).contains(&f)));
    }

    #[test]
    fn silence_gives_zeros() {
        let s = spectrogram(&refined(vec![0.0; 600], 30.0), &SpectrogramParams::breathing()).unwrap();
        assert!(s.is_all_zero());
    }

    #[test]
    fn too_short_signal() {
        let err = spectrogram(&refined(vec![0.0; 299], 30.0), &SpectrogramParams::breathing()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn band_restriction() {
        let wide = SpectrogramParams {
            band_lo_bpm: 10.0,
            band_hi_bpm: 80.0,
            ..SpectrogramParams::breathing()
        };
        let s = spectrogram(&tone(30.0, 30.0, 20.0), &wide).unwrap();
        let same = restrict_band(&s, 0.0, 1000.0).unwrap();
        assert_eq!(same, s);
        let br = restrict_band(&s, 15.0, 50.0).unwrap();
        assert!(br.freq_axis_bpm.iter().all(|&f| (15.0..=50.0).contains(&f)));
        let expected = s.freq_axis_bpm.iter().filter(|&&f| (15.0..=50.0).contains(&f)).count();
        assert_eq!(br.num_bins(), expected);
        assert!(matches!(restrict_band(&s, 500.0, 600.0), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn column_count_matches_framing(n in 300usize..3000, win in 0.5f64..10.0, overlap in 0.0f64..0.99) {
            let p = SpectrogramParams {
                window_s: win,
                overlap_fraction: overlap,
                fft_points: 4096,
                band_lo_bpm: 1.0,
                band_hi_bpm: 900.0,
                window_function: WindowFunction::Hann,
            };
            let (w, hop) = p.framing(30.0);
            prop_assume!(w >= 2 && w <= n);
            let s = spectrogram(&refined((0..n).map(|i| ((i * 7919) % 13) as f64).collect(), 30.0), &p).unwrap();
            prop_assert_eq!(s.num_columns(), (n - w) / hop + 1);
            prop_assert!(s.magnitudes.iter().flatten().all(|&m| (0.0..=1.0).contains(&m)));
        }

        #[test]
        fn tone_localization(bpm in 16.0f64..49.0) {
            let p = SpectrogramParams::breathing();
            let s = spectrogram(&tone(bpm, 30.0, 14.0), &p).unwrap();
            let bin_bpm = 30.0 * 60.0 / 2048.0;
            for t in 0..s.num_columns() {
                let f = s.freq_axis_bpm[s.column_argmax(t)];
                prop_assert!((f - bpm).abs() <= bin_bpm, "{} vs {}", f, bpm);
            }
        }
    }
}
