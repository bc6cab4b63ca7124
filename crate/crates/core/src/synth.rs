//! Synthetic videos and signals with known embedded rates.
//!
//! Every frame is a pure function of the spec and the frame index, so frames
//! can be rendered in any order and the output is reproducible from the seed.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::RateTrace;
use crate::io::{write_rate_trace, write_signal_csv};
use crate::media::{write_frame_sequence, Frame, SequenceManifest};
use crate::roi::{RawSignal, RoiRect, SignalKind};
use crate::spectral::SpectrogramParams;

/// Piecewise-linear frequency schedule, constant outside its knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct FreqSchedule {
    knots: Vec<(f64, f64)>,
}

impl FreqSchedule {
    /// Knots as `(time_s, bpm)`, strictly increasing in time, rates > 0.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Config("frequency schedule needs at least one knot".into()));
        }
        if knots.iter().any(|&(t, f)| !(t.is_finite() && f.is_finite() && f > 0.0)) {
            return Err(Error::Config("schedule knots must be finite with rate > 0".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config("schedule times must be strictly increasing".into()));
        }
        Ok(FreqSchedule { knots })
    }

    pub fn constant(bpm: f64) -> Result<Self> {
        FreqSchedule::new(vec![(0.0, bpm)])
    }

    /// Linear ramp from `from` at t=0 to `to` at `duration_s`.
    pub fn ramp(from: f64, to: f64, duration_s: f64) -> Result<Self> {
        FreqSchedule::new(vec![(0.0, from), (duration_s, to)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn bpm_at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((t0, f0), (t1, f1)) = (w[0], w[1]);
            if t <= t1 {
                return f0 + (f1 - f0) * (t - t0) / (t1 - t0);
            }
        }
        k[k.len() - 1].1
    }

    /// Cycles elapsed over `[0, t]`: the exact integral of `bpm / 60`.
    pub fn cycles(&self, t: f64) -> f64 {
        // Integral from 0 of the piecewise-linear rate; trapezoids are exact.
        let mut prev_t = 0.0;
        let mut area = 0.0;
        let mut points: Vec<f64> = self.knots.iter().map(|k| k.0).filter(|&x| x > 0.0 && x < t).collect();
        points.push(t);
        for x in points {
            area += 0.5 * (self.bpm_at(prev_t) + self.bpm_at(x)) * (x - prev_t);
            prev_t = x;
        }
        area / 60.0
    }

    pub fn min_bpm(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min)
    }

    pub fn max_bpm(&self) -> f64 {
        self.knots.iter().map(|k| k.1).fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<[f64; 2]>> for FreqSchedule {
    type Error = Error;

    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        FreqSchedule::new(v.into_iter().map(|[t, f]| (t, f)).collect())
    }
}

impl From<FreqSchedule> for Vec<[f64; 2]> {
    fn from(s: FreqSchedule) -> Self {
        s.knots.into_iter().map(|(t, f)| [t, f]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    BreathingMotion,
    PulseColor,
    PattingPlusBreath,
}

/// How surfaces are painted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surface {
    /// Value-noise textures on patch and background.
    #[default]
    Textured,
    /// White patch on black background, for centroid checks.
    Silhouette,
}

/// Rectangle with real-valued origin, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn contains_rect(&self, r: &RoiRect) -> bool {
        r.x0 as f64 >= self.x0
            && r.y0 as f64 >= self.y0
            && (r.x0 + r.w) as f64 <= self.x0 + self.w
            && (r.y0 + r.h) as f64 <= self.y0 + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub scenario: Scenario,
    pub freq_trace_bpm: FreqSchedule,
    /// Pixels for motion scenarios, gray levels for the colour scenario.
    pub amplitude: f64,
    /// Pixels per frame (vertical) or gray levels per frame.
    #[serde(default)]
    pub drift_per_frame: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub interference_freq_bpm: Option<f64>,
    #[serde(default)]
    pub interference_amplitude: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub surface: Surface,
    /// Subject patch in first-frame coordinates; defaults to [`default_patch`].
    #[serde(default)]
    pub patch: Option<Rect>,
}

/// Central patch covering 3/8 of the width and 1/3 of the height.
pub fn default_patch(width: usize, height: usize) -> Rect {
    let (w, h) = (width as f64, height as f64);
    Rect {
        x0: (w * 5.0 / 16.0).round(),
        y0: (h / 6.0).round(),
        w: (w * 3.0 / 8.0).round(),
        h: (h / 3.0).round(),
    }
}

impl SynthSpec {
    /// Desk-scale breathing scene: 320x240 @ 30 fps, 60 s.
    pub fn breathing(freq: FreqSchedule, seed: u64) -> Self {
        SynthSpec {
            duration_s: 60.0,
            fps: 30.0,
            width: 320,
            height: 240,
            scenario: Scenario::BreathingMotion,
            freq_trace_bpm: freq,
            amplitude: 2.0,
            drift_per_frame: 0.03,
            noise_sigma: 2.0,
            interference_freq_bpm: None,
            interference_amplitude: None,
            seed,
            surface: Surface::Textured,
            patch: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synth: {e}")))
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn patch(&self) -> Rect {
        self.patch.unwrap_or_else(|| default_patch(self.width, self.height))
    }

    /// Second patch for the patting scenario: a hand covering the left half of
    /// the subject patch, centred vertically.
    pub fn hand(&self) -> Rect {
        let p = self.patch();
        Rect {
            x0: p.x0 - (p.w / 8.0).round(),
            y0: p.y0 + (p.h / 4.0).round(),
            w: (p.w * 5.0 / 8.0).round(),
            h: (p.h / 2.0).round(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth: {m}")));
        if !(self.duration_s > 0.0 && self.fps > 0.0) {
            return bad("duration_s and fps must be > 0".into());
        }
        if self.frame_count() < 2 {
            return bad("fewer than 2 frames".into());
        }
        if self.width < 16 || self.height < 16 {
            return bad(format!("frame {}x{} too small", self.width, self.height));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return bad(format!("amplitude must be >= 0, got {}", self.amplitude));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0".into());
        }
        if !self.drift_per_frame.is_finite() {
            return bad("drift_per_frame must be finite".into());
        }
        let interference = self.interference();
        if self.scenario == Scenario::PattingPlusBreath && interference.is_none() {
            return bad("patting scenario needs interference_freq_bpm and interference_amplitude".into());
        }
        match self.scenario {
            Scenario::BreathingMotion | Scenario::PattingPlusBreath => self.check_motion_bounds(),
            Scenario::PulseColor => self.check_headroom(),
        }
    }

    fn interference(&self) -> Option<(f64, f64)> {
        Some((self.interference_freq_bpm?, self.interference_amplitude?))
    }

    /// Checks the schedule against a tracking band and the duration against
    /// two spectrogram windows.
    pub fn check_trackable(&self, spectral: &SpectrogramParams) -> Result<()> {
        let s = &self.freq_trace_bpm;
        if s.min_bpm() < spectral.band_lo_bpm || s.max_bpm() > spectral.band_hi_bpm {
            return Err(Error::Config(format!(
                "synth: schedule {}..{} bpm leaves the {}..{} bpm band",
                s.min_bpm(),
                s.max_bpm(),
                spectral.band_lo_bpm,
                spectral.band_hi_bpm
            )));
        }
        let (w, _) = spectral.framing(self.fps);
        if self.frame_count() < 2 * w {
            return Err(Error::Config(format!(
                "synth: {} frames is shorter than two {w}-sample windows",
                self.frame_count()
            )));
        }
        Ok(())
    }

    fn check_motion_bounds(&self) -> Result<()> {
        let n = self.frame_count();
        let p = self.patch();
        let total_drift = self.drift_per_frame * (n - 1) as f64;
        let lo = p.y0 - self.amplitude + total_drift.min(0.0);
        let hi = p.y0 + p.h + self.amplitude + total_drift.max(0.0);
        let mut boxes = vec![(p.x0, p.x0 + p.w, lo, hi)];
        if self.scenario == Scenario::PattingPlusBreath {
            let (_, amp) = self.interference().unwrap_or((0.0, 0.0));
            let hd = self.hand();
            boxes.push((hd.x0 - amp, hd.x0 + hd.w + amp, hd.y0 + total_drift.min(0.0), hd.y0 + hd.h + total_drift.max(0.0)));
        }
        for (x0, x1, y0, y1) in boxes {
            if x0 < 1.0 || y0 < 1.0 || x1 > self.width as f64 - 1.0 || y1 > self.height as f64 - 1.0 {
                return Err(Error::Config(format!(
                    "synth: patch would leave the {}x{} frame (x {x0:.1}..{x1:.1}, y {y0:.1}..{y1:.1})",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }

    fn check_headroom(&self) -> Result<()> {
        let total_drift = self.drift_per_frame * (self.frame_count() - 1) as f64;
        for (c, &(base, spread)) in SKIN.iter().enumerate() {
            let amp = self.amplitude * PULSE_GAIN[c];
            let lo = base - spread - amp + total_drift.min(0.0);
            let hi = base + spread + amp + total_drift.max(0.0);
            if lo < 0.0 || hi > 255.0 {
                return Err(Error::Config(format!(
                    "synth: amplitude {} with drift {total_drift:.1} exceeds channel {c} head-room",
                    self.amplitude
                )));
            }
        }
        Ok(())
    }
}

/// Skin colour per channel as (base, half-range of the texture).
const SKIN: [(f64, f64); 3] = [(170.0, 25.0), (120.0, 25.0), (100.0, 25.0)];
/// Pulse modulation gain per channel.
const PULSE_GAIN: [f64; 3] = [0.5, 1.0, 0.0];

/// Smooth value noise: random lattice values joined by Catmull-Rom splines,
/// two octaves, mapped to roughly `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ValueNoise {
    cell: f64,
    cols: usize,
    rows: usize,
    coarse: Vec<f64>,
    fine: Vec<f64>,
}

impl ValueNoise {
    pub fn new(seed: u64, stream: u64, cell: f64, cols: usize, rows: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect() };
        let coarse = draw(cols * rows);
        let fine = draw(4 * cols * rows);
        ValueNoise {
            cell,
            cols,
            rows,
            coarse,
            fine,
        }
    }

    fn lattice(vals: &[f64], cols: usize, rows: usize, x: f64, y: f64) -> f64 {
        let fx = x.floor();
        let fy = y.floor();
        let (tx, ty) = (x - fx, y - fy);
        let (ix, iy) = (fx as i64, fy as i64);
        let at = |i: i64, j: i64| {
            let i = i.rem_euclid(cols as i64) as usize;
            let j = j.rem_euclid(rows as i64) as usize;
            vals[j * cols + i]
        };
        let mut rows_v = [0.0; 4];
        for (r, dj) in (-1..=2).enumerate() {
            rows_v[r] = catmull_rom(
                at(ix - 1, iy + dj),
                at(ix, iy + dj),
                at(ix + 1, iy + dj),
                at(ix + 2, iy + dj),
                tx,
            );
        }
        catmull_rom(rows_v[0], rows_v[1], rows_v[2], rows_v[3], ty)
    }

    /// Texture value at a continuous position in texture pixels.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let c = Self::lattice(&self.coarse, self.cols, self.rows, x / self.cell, y / self.cell);
        let f = Self::lattice(
            &self.fine,
            2 * self.cols,
            2 * self.rows,
            2.0 * x / self.cell,
            2.0 * y / self.cell,
        );
        0.7 * c + 0.3 * f
    }
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * (2.0 * p1 + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3)
}

/// Length of `[a, b] ∩ [c, d]`.
fn overlap(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (b.min(d) - a.max(c)).max(0.0)
}

/// Per-frame placement of the scene's moving parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Subject patch displacement (dx, dy).
    pub patch: (f64, f64),
    /// Hand displacement, patting scenario only.
    pub hand: (f64, f64),
    /// Gray-level offset added to the whole frame.
    pub illumination: f64,
    /// Colour modulation added inside the skin region.
    pub pulse: f64,
}

/// Renderer and ground-truth source for one [`SynthSpec`].
#[derive(Debug, Clone)]
pub struct SynthVideo {
    spec: SynthSpec,
    /// Static background, evaluated once.
    background: Vec<f64>,
    patch_tex: ValueNoise,
    hand_tex: ValueNoise,
}

const BACKGROUND_STREAM: u64 = 1 << 40;
const PATCH_STREAM: u64 = (1 << 40) + 1;
const HAND_STREAM: u64 = (1 << 40) + 2;

impl SynthVideo {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let seed = spec.seed;
        let bg_cell = 11.0;
        let cell = 6.0;
        let background = ValueNoise::new(
            seed,
            BACKGROUND_STREAM,
            bg_cell,
            (spec.width as f64 / bg_cell).ceil() as usize + 4,
            (spec.height as f64 / bg_cell).ceil() as usize + 4,
        );
        let p = spec.patch();
        let patch_tex = ValueNoise::new(
            seed,
            PATCH_STREAM,
            cell,
            (p.w / cell).ceil() as usize + 4,
            (p.h / cell).ceil() as usize + 4,
        );
        let background = if spec.surface == Surface::Silhouette {
            vec![0.0; spec.width * spec.height]
        } else {
            (0..spec.width * spec.height)
                .map(|i| 40.0 + 100.0 * background.value((i % spec.width) as f64, (i / spec.width) as f64))
                .collect()
        };
        let hd = spec.hand();
        let hand_tex = ValueNoise::new(
            seed,
            HAND_STREAM,
            cell,
            (hd.w / cell).ceil() as usize + 4,
            (hd.h / cell).ceil() as usize + 4,
        );
        Ok(SynthVideo {
            spec,
            background,
            patch_tex,
            hand_tex,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn frame_count(&self) -> usize {
        self.spec.frame_count()
    }

    pub fn manifest(&self) -> SequenceManifest {
        SequenceManifest {
            fps: self.spec.fps,
            frame_count: self.frame_count(),
            width: self.spec.width,
            height: self.spec.height,
            frame_name_pattern: "frame_%06d.ppm".into(),
        }
    }

    fn time(&self, index: usize) -> f64 {
        index as f64 / self.spec.fps
    }

    pub fn pose(&self, index: usize) -> Pose {
        let s = &self.spec;
        let t = self.time(index);
        let osc = s.amplitude * (2.0 * PI * s.freq_trace_bpm.cycles(t)).sin();
        let drift = s.drift_per_frame * index as f64;
        match s.scenario {
            Scenario::BreathingMotion => Pose {
                patch: (0.0, osc + drift),
                hand: (0.0, 0.0),
                illumination: 0.0,
                pulse: 0.0,
            },
            Scenario::PattingPlusBreath => {
                let (f, a) = s.interference().unwrap_or((0.0, 0.0));
                Pose {
                    patch: (0.0, osc + drift),
                    hand: (a * (2.0 * PI * f / 60.0 * t).sin(), drift),
                    illumination: 0.0,
                    pulse: 0.0,
                }
            }
            Scenario::PulseColor => Pose {
                patch: (0.0, 0.0),
                hand: (0.0, 0.0),
                illumination: drift,
                pulse: osc,
            },
        }
    }

    /// Noise-free RGB values at every pixel as f64, row-major per channel.
    pub fn render_clean(&self, index: usize) -> [Vec<f64>; 3] {
        let s = &self.spec;
        let pose = self.pose(index);
        let (w, h) = (s.width, s.height);
        let mut out = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
        let silhouette = s.surface == Surface::Silhouette;
        let p = s.patch();
        let hand = s.hand();
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let i = y * w + x;
                let bg = self.background[i];
                let mut rgb = match s.scenario {
                    Scenario::PulseColor => {
                        let a = coverage(xf, yf, &p, (0.0, 0.0));
                        let skin_t = if silhouette { 0.5 } else { self.patch_tex.value(xf - p.x0, yf - p.y0) };
                        let mut c = [0.0; 3];
                        for (k, &(base, spread)) in SKIN.iter().enumerate() {
                            let skin = base + spread * (2.0 * skin_t - 1.0) + pose.pulse * PULSE_GAIN[k];
                            c[k] = a * skin + (1.0 - a) * bg;
                        }
                        c
                    }
                    _ => {
                        let a = coverage(xf, yf, &p, pose.patch);
                        let v = if a > 0.0 {
                            let tv = if silhouette {
                                255.0
                            } else {
                                100.0 + 120.0 * self.patch_tex.value(xf - p.x0 - pose.patch.0, yf - p.y0 - pose.patch.1)
                            };
                            a * tv + (1.0 - a) * bg
                        } else {
                            bg
                        };
                        let v = if s.scenario == Scenario::PattingPlusBreath {
                            let ah = coverage(xf, yf, &hand, pose.hand);
                            if ah > 0.0 {
                                let tv = 60.0
                                    + 150.0 * self.hand_tex.value(xf - hand.x0 - pose.hand.0, yf - hand.y0 - pose.hand.1);
                                ah * tv + (1.0 - ah) * v
                            } else {
                                v
                            }
                        } else {
                            v
                        };
                        [v; 3]
                    }
                };
                for c in rgb.iter_mut() {
                    *c += pose.illumination;
                }
                for k in 0..3 {
                    out[k][i] = rgb[k];
                }
            }
        }
        out
    }

    /// Final quantized frame with sensor noise. Motion scenes are grayscale
    /// with one noise draw per pixel; the colour scene draws per channel.
    pub fn frame(&self, index: usize) -> Result<Frame> {
        let s = &self.spec;
        let clean = self.render_clean(index);
        let n = s.width * s.height;
        let mut planes = [vec![0u8; n], vec![0u8; n], vec![0u8; n]];
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(index as u64);
        let normal = Normal::new(0.0, s.noise_sigma.max(0.0))
            .map_err(|e| Error::Config(format!("synth: noise: {e}")))?;
        let quant = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        let gray = s.scenario != Scenario::PulseColor;
        for i in 0..n {
            if gray {
                let e = if s.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                let q = quant(clean[0][i] + e);
                for p in planes.iter_mut() {
                    p[i] = q;
                }
            } else {
                for k in 0..3 {
                    let e = if s.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                    planes[k][i] = quant(clean[k][i] + e);
                }
            }
        }
        let [r, g, b] = planes;
        Frame::new(s.width, s.height, index, r, g, b)
    }

    /// All frames in index order, rendered lazily.
    pub fn frames(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.frame_count()).map(move |i| self.frame(i))
    }

    /// Instantaneous rate at every frame time.
    pub fn truth_trace(&self) -> RateTrace {
        let n = self.frame_count();
        let time_s: Vec<f64> = (0..n).map(|i| self.time(i)).collect();
        let bpm = time_s.iter().map(|&t| self.spec.freq_trace_bpm.bpm_at(t)).collect();
        RateTrace { time_s, bpm }
    }

    /// Embedded displacement (motion) or modulation (colour), drift included.
    pub fn truth_signal(&self) -> RawSignal {
        let n = self.frame_count();
        let (kind, samples) = match self.spec.scenario {
            Scenario::PulseColor => (
                SignalKind::ColorWeighted,
                (0..n).map(|i| {
                    let p = self.pose(i);
                    p.pulse + p.illumination
                })
                .collect(),
            ),
            _ => (SignalKind::MotionVertical, (0..n).map(|i| self.pose(i).patch.1).collect()),
        };
        RawSignal {
            samples,
            fs: self.spec.fps,
            kind,
        }
    }

    /// Writes manifest, frames, `truth_trace.csv`, `truth_signal.csv` and
    /// `synth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        const CHUNK: usize = 32;
        let n = self.frame_count();
        let mut chunks = (0..n).step_by(CHUNK).map(|start| {
            let end = (start + CHUNK).min(n);
            (start..end).into_par_iter().map(|i| self.frame(i)).collect::<Vec<_>>()
        });
        let frames = std::iter::from_fn(move || chunks.next()).flatten();
        write_frame_sequence(dir, &self.manifest(), frames)?;
        write_rate_trace(&dir.join("truth_trace.csv"), &self.truth_trace())?;
        write_signal_csv(&dir.join("truth_signal.csv"), &self.truth_signal())?;
        let json = serde_json::to_string_pretty(&self.spec).map_err(|e| Error::Data(e.to_string()))?;
        fs::write(dir.join("synth.json"), json + "\n").map_err(|e| Error::io(dir.join("synth.json"), e))?;
        Ok(())
    }
}

/// Fraction of pixel `[x-0.5, x+0.5] x [y-0.5, y+0.5]` covered by `r` moved by `d`.
fn coverage(x: f64, y: f64, r: &Rect, d: (f64, f64)) -> f64 {
    let (x0, y0) = (r.x0 + d.0 - 0.5, r.y0 + d.1 - 0.5);
    overlap(x - 0.5, x + 0.5, x0, x0 + r.w) * overlap(y - 0.5, y + 0.5, y0, y0 + r.h)
}

/// Parameters of a rendered-free 1-D test signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSynth {
    pub freq: FreqSchedule,
    pub fs: f64,
    pub duration_s: f64,
    pub amplitude: f64,
    /// Linear drift per second.
    pub drift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Optional second tone `(bpm, amplitude)`.
    pub interference: Option<(f64, f64)>,
}

/// `amplitude * sin(phase) + drift * t + noise`, with the instantaneous rate
/// at each sample as ground truth.
pub fn synth_signal(p: &SignalSynth) -> Result<(RawSignal, RateTrace)> {
    if !(p.fs > 0.0 && p.duration_s > 0.0) {
        return Err(Error::Config("synth: fs and duration must be > 0".into()));
    }
    let n = (p.duration_s * p.fs).round() as usize;
    let normal = Normal::new(0.0, p.noise_sigma).map_err(|e| Error::Config(format!("synth: noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut samples = Vec::with_capacity(n);
    let mut time_s = Vec::with_capacity(n);
    let mut bpm = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / p.fs;
        let mut v = p.amplitude * (2.0 * PI * p.freq.cycles(t)).sin() + p.drift * t;
        if let Some((f, a)) = p.interference {
            v += a * (2.0 * PI * f / 60.0 * t).sin();
        }
        if p.noise_sigma > 0.0 {
            v += normal.sample(&mut rng);
        }
        samples.push(v);
        time_s.push(t);
        bpm.push(p.freq.bpm_at(t));
    }
    Ok((
        RawSignal {
            samples,
            fs: p.fs,
            kind: SignalKind::MotionVertical,
        },
        RateTrace::new(time_s, bpm)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::to_gray;

    fn small(scenario: Scenario) -> SynthSpec {
        SynthSpec {
            duration_s: 2.0,
            fps: 10.0,
            width: 96,
            height: 72,
            scenario,
            freq_trace_bpm: FreqSchedule::constant(30.0).unwrap(),
            amplitude: 1.5,
            drift_per_frame: 0.0,
            noise_sigma: 0.0,
            interference_freq_bpm: Some(55.0),
            interference_amplitude: Some(2.0),
            seed: 7,
            surface: Surface::Textured,
            patch: None,
        }
    }

    #[test]
    fn ramp_phase_integral() {
        let s = FreqSchedule::ramp(20.0, 35.0, 60.0).unwrap();
        // Integral of 20 + t/4 over [0, 60] = 1200 + 450 bpm*s.
        assert!((s.cycles(60.0) - 1650.0 / 60.0).abs() < 1e-12);
        assert!((s.cycles(90.0) - (1650.0 + 35.0 * 30.0) / 60.0).abs() < 1e-12);
        let h = 1e-4;
        for t in [0.5, 13.0, 42.0, 59.0] {
            let d = (s.cycles(t + h) - s.cycles(t - h)) / (2.0 * h) * 60.0;
            assert!((d - s.bpm_at(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn schedule_rejects_bad_knots() {
        assert!(FreqSchedule::new(vec![]).is_err());
        assert!(FreqSchedule::new(vec![(0.0, 20.0), (0.0, 25.0)]).is_err());
        assert!(FreqSchedule::new(vec![(0.0, -1.0)]).is_err());
    }

    #[test]
    fn zero_amplitude_frames_repeat() {
        let mut s = small(Scenario::BreathingMotion);
        s.amplitude = 0.0;
        let v = SynthVideo::new(s).unwrap();
        assert_eq!(v.frame(0).unwrap().to_interleaved(), v.frame(7).unwrap().to_interleaved());
    }

    #[test]
    fn seeded_frames_are_reproducible() {
        let mut s = small(Scenario::PulseColor);
        s.noise_sigma = 2.0;
        let a = SynthVideo::new(s.clone()).unwrap().frame(5).unwrap();
        let b = SynthVideo::new(s.clone()).unwrap().frame(5).unwrap();
        assert_eq!(a, b);
        s.seed = 8;
        let c = SynthVideo::new(s).unwrap().frame(5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn texture_contrast() {
        let v = SynthVideo::new(small(Scenario::BreathingMotion)).unwrap();
        let g = to_gray(&v.frame(0).unwrap());
        let p = v.spec().patch();
        let mut lo: f32 = 1.0;
        let mut hi: f32 = 0.0;
        for y in p.y0 as usize..(p.y0 + p.h) as usize {
            for x in p.x0 as usize..(p.x0 + p.w) as usize {
                lo = lo.min(g.get(x, y));
                hi = hi.max(g.get(x, y));
            }
        }
        assert!((hi - lo) * 255.0 >= 30.0, "contrast {}", (hi - lo) * 255.0);
    }

    #[test]
    fn patch_leaving_frame_is_rejected() {
        let mut s = small(Scenario::BreathingMotion);
        s.drift_per_frame = 5.0;
        assert!(matches!(SynthVideo::new(s), Err(Error::Config(_))));
    }

    #[test]
    fn headroom_is_checked() {
        let mut s = small(Scenario::PulseColor);
        // Green peaks at 120 + 25 + 80 = 225: fits.
        s.amplitude = 80.0;
        assert!(SynthVideo::new(s.clone()).is_ok());
        // 120 + 25 + 120 = 265: does not.
        s.amplitude = 120.0;
        assert!(matches!(SynthVideo::new(s), Err(Error::Config(_))));
    }

    #[test]
    fn patting_needs_interference() {
        let mut s = small(Scenario::PattingPlusBreath);
        s.interference_amplitude = None;
        assert!(SynthVideo::new(s).is_err());
    }

    #[test]
    fn signal_without_noise() {
        let p = SignalSynth {
            freq: FreqSchedule::constant(30.0).unwrap(),
            fs: 30.0,
            duration_s: 4.0,
            amplitude: 1.0,
            drift: 0.5,
            noise_sigma: 0.0,
            seed: 1,
            interference: None,
        };
        let (sig, truth) = synth_signal(&p).unwrap();
        assert_eq!(sig.samples.len(), 120);
        // t = 0.5 s at 0.5 Hz is a quarter cycle; drift adds 0.5 * 0.5.
        assert!((sig.samples[15] - ((PI / 2.0).sin() + 0.25)).abs() < 1e-12);
        assert!(truth.bpm.iter().all(|&b| b == 30.0));
    }
}
