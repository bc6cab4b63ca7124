//! End-to-end run from a TOML configuration.
//!
//! ```toml
//! [input]
//! manifest = "video/manifest.json"
//!
//! [roi]
//! rects = [[130, 60, 60, 40]]
//! spacing = 4.0
//!
//! [signal]
//! kind = "motion-vertical"
//!
//! [eval]
//! reference = "video/truth_trace.csv"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Omitted `[flow]`, `[tracking]`, `[refine]`, `[spectral]` and `[amtc]`
//! blocks take their defaults; `[refine]` and `[spectral]` default to the
//! breathing or heart-rate preset according to the signal kind. Relative
//! paths are resolved against the configuration file's directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::amtc::{extract_traces, AmtcParams, Extraction};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, RateTrace};
use crate::flow::FlowParams;
use crate::io;
use crate::media::{read_frame_sequence, Frame, SequenceManifest};
use crate::refine::{refine, RefineParams, RefinedSignal};
use crate::roi::{make_grid, MotionAxis, RawSignal, RoiRect, SignalExtractor, SignalKind, SignalSpec, TrackingOptions};
use crate::spectral::{spectrogram, Spectrogram, SpectrogramParams};

/// Longest run of ROIs per configuration.
pub const MAX_ROIS: usize = 3;

/// Definition recorded next to every MeRate value.
pub const ME_RATE_DEFINITION: &str = "100 * mean(|est - ref| / ref)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Extract,
    Refine,
    Spectrogram,
    Track,
    Eval,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Refine => "refine",
            Stage::Spectrogram => "spectrogram",
            Stage::Track => "track",
            Stage::Eval => "eval",
            Stage::Output => "output",
        })
    }
}

/// An [`Error`] tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {error}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub error: Error,
}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    pub rects: Vec<RoiRect>,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
}

fn default_spacing() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub kind: SignalKind,
    /// RGB weights for `color-weighted`.
    #[serde(default = "default_weights")]
    pub weights: [f64; 3],
}

fn default_weights() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl SignalConfig {
    pub fn spec(&self) -> SignalSpec {
        match self.kind {
            SignalKind::MotionHorizontal => SignalSpec::Motion(MotionAxis::X),
            SignalKind::MotionVertical => SignalSpec::Motion(MotionAxis::Y),
            SignalKind::MotionSum => SignalSpec::Motion(MotionAxis::Xy),
            SignalKind::ColorWeighted => SignalSpec::Color(self.weights),
        }
    }

    fn is_color(&self) -> bool {
        self.kind == SignalKind::ColorWeighted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Reference rate file (any layout [`io::read_rate_trace`] accepts).
    pub reference: Option<PathBuf>,
    /// Lag search range; 0 disables alignment.
    pub max_lag_s: f64,
    /// 1-based index of the extracted trace to score.
    pub trace_index: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            reference: None,
            max_lag_s: 0.0,
            trace_index: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub roi: RoiConfig,
    pub signal: SignalConfig,
    #[serde(default)]
    pub tracking: TrackingOptions,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub refine: Option<RefineParams>,
    #[serde(default)]
    pub spectral: Option<SpectrogramParams>,
    #[serde(default)]
    pub amtc: AmtcParams,
    #[serde(default)]
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Parses TOML and resolves relative paths against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.input.manifest = resolve(base_dir, &cfg.input.manifest);
        cfg.output.dir = resolve(base_dir, &cfg.output.dir);
        if let Some(r) = &cfg.eval.reference {
            cfg.eval.reference = Some(resolve(base_dir, r));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::from_toml(&text, base)
    }

    pub fn refine_params(&self) -> RefineParams {
        self.refine.clone().unwrap_or_else(|| {
            if self.signal.is_color() {
                RefineParams::heart_rate()
            } else {
                RefineParams::breathing()
            }
        })
    }

    pub fn spectral_params(&self) -> SpectrogramParams {
        self.spectral.clone().unwrap_or_else(|| {
            if self.signal.is_color() {
                SpectrogramParams::heart_rate()
            } else {
                SpectrogramParams::breathing()
            }
        })
    }

    /// Parameter checks that need no file access.
    pub fn validate_params(&self) -> Result<()> {
        if self.roi.rects.is_empty() || self.roi.rects.len() > MAX_ROIS {
            return Err(Error::Config(format!(
                "roi.rects must hold 1 to {MAX_ROIS} rectangles, got {}",
                self.roi.rects.len()
            )));
        }
        if !(self.roi.spacing >= 1.0) {
            return Err(Error::Config(format!("roi.spacing must be >= 1, got {}", self.roi.spacing)));
        }
        if self.signal.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("signal.weights must be finite".into()));
        }
        self.flow.validate()?;
        self.refine_params().validate()?;
        self.spectral_params().validate()?;
        self.amtc.validate()?;
        if self.eval.trace_index < 1 || self.eval.trace_index > self.amtc.num_traces {
            return Err(Error::Config(format!(
                "eval.trace_index {} outside 1..={}",
                self.eval.trace_index, self.amtc.num_traces
            )));
        }
        if !(self.eval.max_lag_s.is_finite() && self.eval.max_lag_s >= 0.0) {
            return Err(Error::Config("eval.max_lag_s must be >= 0".into()));
        }
        Ok(())
    }

    /// Parameter checks plus existence of every referenced input file.
    pub fn validate(&self) -> Result<()> {
        self.validate_params()?;
        for p in std::iter::once(&self.input.manifest).chain(self.eval.reference.as_ref()) {
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        Ok(())
    }
}

/// Command-line adjustments to a loaded configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOverrides {
    /// 1-based ROI to process alone.
    pub roi_index: Option<usize>,
    pub disable_detrend: bool,
    pub disable_clip: bool,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        if self.disable_detrend || self.disable_clip {
            let mut r = cfg.refine_params();
            r.detrend &= !self.disable_detrend;
            r.clip &= !self.disable_clip;
            cfg.refine = Some(r);
        }
        if let Some(k) = self.roi_index {
            if k < 1 || k > cfg.roi.rects.len() {
                return Err(Error::Config(format!(
                    "roi index {k} outside 1..={}",
                    cfg.roi.rects.len()
                )));
            }
        }
        Ok(())
    }
}

/// Everything produced for one ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiOutput {
    /// 1-based position in `roi.rects`.
    pub index: usize,
    pub rect: RoiRect,
    pub raw: RawSignal,
    pub refined: RefinedSignal,
    pub spectrogram: Spectrogram,
    pub extraction: Extraction,
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub extract_s: f64,
    pub refine_s: f64,
    pub spectrogram_s: f64,
    pub track_s: f64,
    pub eval_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rois: Vec<RoiOutput>,
    pub timings: Timings,
}

/// Refine, spectrogram, track and (optionally) score one raw signal.
pub fn process_signal(
    cfg: &PipelineConfig,
    raw: &RawSignal,
    reference: Option<&RateTrace>,
    timings: &mut Timings,
) -> Result<(RefinedSignal, Spectrogram, Extraction, Option<EvalReport>), StageError> {
    let t = Instant::now();
    let refined = refine(raw, &cfg.refine_params()).stage(Stage::Refine)?;
    timings.refine_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let spec = spectrogram(&refined, &cfg.spectral_params()).stage(Stage::Spectrogram)?;
    timings.spectrogram_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let extraction = extract_traces(&spec, &cfg.amtc).stage(Stage::Track)?;
    timings.track_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let report = match reference {
        Some(r) => {
            let k = cfg.eval.trace_index - 1;
            let trace = extraction.traces.get(k).ok_or_else(|| StageError {
                stage: Stage::Eval,
                error: Error::Data(format!("trace {} was not extracted", k + 1)),
            })?;
            Some(evaluate(&RateTrace::from(trace), r, cfg.eval.max_lag_s).stage(Stage::Eval)?)
        }
        None => None,
    };
    timings.eval_s += t.elapsed().as_secs_f64();
    Ok((refined, spec, extraction, report))
}

/// Raw signals of the selected ROIs as `(1-based index, signal)`.
/// `cfg` must already carry `overrides`.
pub fn extract_signals<I>(
    cfg: &PipelineConfig,
    overrides: &RunOverrides,
    fps: f64,
    frames: I,
) -> Result<Vec<(usize, RawSignal)>, StageError>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let selected: Vec<usize> = (1..=cfg.roi.rects.len())
        .filter(|i| overrides.roi_index.is_none_or(|k| k == *i))
        .collect();
    let grids = selected
        .iter()
        .map(|&i| make_grid(cfg.roi.rects[i - 1], cfg.roi.spacing))
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Config)?;
    let extractor = SignalExtractor {
        grids,
        spec: cfg.signal.spec(),
        flow: cfg.flow.clone(),
        tracking: cfg.tracking.clone(),
        fs: fps,
    };
    let raws = extractor.run(frames).map_err(|error| StageError {
        stage: match error {
            Error::Ingest { .. } | Error::Decode { .. } | Error::Io { .. } => Stage::Ingest,
            _ => Stage::Extract,
        },
        error,
    })?;
    Ok(selected.into_iter().zip(raws).collect())
}

/// Runs every selected ROI over an in-memory or streamed frame sequence.
pub fn run_on_frames<I>(
    cfg: &PipelineConfig,
    overrides: &RunOverrides,
    fps: f64,
    frames: I,
    reference: Option<&RateTrace>,
) -> Result<RunOutput, StageError>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let mut cfg = cfg.clone();
    overrides.apply(&mut cfg).stage(Stage::Config)?;
    cfg.validate_params().stage(Stage::Config)?;
    let mut timings = Timings::default();
    let t = Instant::now();
    let raws = extract_signals(&cfg, overrides, fps, frames)?;
    timings.extract_s = t.elapsed().as_secs_f64();
    info!("extracted {} signal(s) of {} samples", raws.len(), raws[0].1.len());

    let mut rois = Vec::with_capacity(raws.len());
    for (index, raw) in raws {
        let rect = cfg.roi.rects[index - 1];
        let (refined, spectrogram, extraction, report) = process_signal(&cfg, &raw, reference, &mut timings)?;
        rois.push(RoiOutput {
            index,
            rect,
            raw,
            refined,
            spectrogram,
            extraction,
            report,
        });
    }
    Ok(RunOutput { rois, timings })
}

/// Every applied parameter, for `run_meta.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta<'a> {
    pub input_manifest: &'a Path,
    pub frame_count: usize,
    pub fps: f64,
    pub rois: &'a [RoiRect],
    pub processed_rois: Vec<usize>,
    pub roi_spacing: f64,
    pub signal: &'a SignalConfig,
    pub tracking: &'a TrackingOptions,
    pub flow: &'a FlowParams,
    pub refine: RefineParams,
    pub spectral: SpectrogramParams,
    pub amtc: &'a AmtcParams,
    pub eval: &'a EvalConfig,
    pub me_rate_definition: &'static str,
}

#[derive(Debug, Clone, Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    me_rate_definition: &'static str,
    trace_index: usize,
    refine: &'a RefineParams,
    spectral: SpectrogramParams,
    amtc: &'a AmtcParams,
}

/// Directory holding one ROI's artifacts.
pub fn roi_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("roi_{index}"))
}

/// Writes one ROI's signal, spectrogram, traces and report.
pub fn write_roi_outputs(cfg: &PipelineConfig, out: &Path, roi: &RoiOutput) -> Result<()> {
    let dir = roi_dir(out, roi.index);
    io::write_raw_signal(&dir.join("raw.csv"), &roi.raw)?;
    io::write_refined_signal(&dir.join("refined.csv"), &roi.refined, roi.raw.kind)?;
    io::write_spectrogram(&dir.join("spec.csv"), &roi.spectrogram)?;
    write_traces(&dir, &roi.extraction)?;
    if let Some(report) = &roi.report {
        write_report(&dir.join("report.json"), cfg, report)?;
    }
    Ok(())
}

/// `trace_1.csv`, `trace_2.csv`, ... in extraction order.
pub fn write_traces(dir: &Path, extraction: &Extraction) -> Result<()> {
    for (k, trace) in extraction.traces.iter().enumerate() {
        io::write_trace(&dir.join(format!("trace_{}.csv", k + 1)), trace)?;
    }
    Ok(())
}

pub fn write_report(path: &Path, cfg: &PipelineConfig, report: &EvalReport) -> Result<()> {
    let refine = cfg.refine_params();
    io::write_json(
        path,
        &ReportFile {
            report,
            me_rate_definition: ME_RATE_DEFINITION,
            trace_index: cfg.eval.trace_index,
            refine: &refine,
            spectral: cfg.spectral_params(),
            amtc: &cfg.amtc,
        },
    )
}

/// Writes every artifact of a finished run under `out`.
pub fn write_run(
    cfg: &PipelineConfig,
    manifest: &SequenceManifest,
    out: &Path,
    result: &RunOutput,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for roi in &result.rois {
        write_roi_outputs(cfg, out, roi)?;
    }
    let meta = RunMeta {
        input_manifest: &cfg.input.manifest,
        frame_count: manifest.frame_count,
        fps: manifest.fps,
        rois: &cfg.roi.rects,
        processed_rois: result.rois.iter().map(|r| r.index).collect(),
        roi_spacing: cfg.roi.spacing,
        signal: &cfg.signal,
        tracking: &cfg.tracking,
        flow: &cfg.flow,
        refine: cfg.refine_params(),
        spectral: cfg.spectral_params(),
        amtc: &cfg.amtc,
        eval: &cfg.eval,
        me_rate_definition: ME_RATE_DEFINITION,
    };
    io::write_json(&out.join("run_meta.json"), &meta)?;
    // Wall-clock numbers vary between runs, so they live apart from the data.
    io::write_json(&out.join("timings.json"), &result.timings)
}

/// Loads the manifest and reference named in `cfg`, runs, and writes all
/// artifacts to `cfg.output.dir`.
pub fn run_pipeline(cfg: &PipelineConfig, overrides: &RunOverrides) -> Result<RunOutput, StageError> {
    let mut cfg = cfg.clone();
    overrides.apply(&mut cfg).stage(Stage::Config)?;
    cfg.validate().map_err(|error| StageError {
        stage: match error {
            Error::Io { .. } => Stage::Ingest,
            _ => Stage::Config,
        },
        error,
    })?;
    let seq = read_frame_sequence(&cfg.input.manifest).stage(Stage::Ingest)?;
    let manifest = seq.manifest().clone();
    for r in &cfg.roi.rects {
        r.validate_within(manifest.width, manifest.height).stage(Stage::Config)?;
    }
    let reference = cfg
        .eval
        .reference
        .as_deref()
        .map(io::read_rate_trace)
        .transpose()
        .stage(Stage::Eval)?;
    let result = run_on_frames(&cfg, overrides, manifest.fps, seq, reference.as_ref())?;
    write_run(&cfg, &manifest, &cfg.output.dir, &result).stage(Stage::Output)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [input]
        manifest = "clip/manifest.json"
        [roi]
        rects = [[10, 10, 40, 30]]
        [signal]
        kind = "color-weighted"
        [output]
        dir = "out"
    "#;

    #[test]
    fn defaults_follow_signal_kind() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(cfg.input.manifest, Path::new("/data/clip/manifest.json"));
        assert_eq!(cfg.output.dir, Path::new("/data/out"));
        assert_eq!(cfg.spectral_params(), SpectrogramParams::heart_rate());
        assert_eq!(cfg.refine_params(), RefineParams::heart_rate());
        assert_eq!(cfg.signal.weights, [1.0, 1.0, 1.0]);
        cfg.validate_params().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_too_many_rois() {
        let bad = MINIMAL.replace("[output]", "[output]\ncolour = 1");
        assert!(matches!(PipelineConfig::from_toml(&bad, Path::new(".")), Err(Error::Config(_))));
        let four = MINIMAL.replace(
            "rects = [[10, 10, 40, 30]]",
            "rects = [[10, 10, 40, 30], [10, 10, 40, 30], [10, 10, 40, 30], [10, 10, 40, 30]]",
        );
        let cfg = PipelineConfig::from_toml(&four, Path::new(".")).unwrap();
        assert!(matches!(cfg.validate_params(), Err(Error::Config(_))));
    }

    #[test]
    fn missing_manifest_names_path() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/nonexistent")).unwrap();
        let err = run_pipeline(&cfg, &RunOverrides::default()).unwrap_err();
        assert_eq!(err.stage, Stage::Ingest);
        assert!(err.to_string().contains("/nonexistent/clip/manifest.json"));
    }

    #[test]
    fn overrides() {
        let mut cfg = PipelineConfig::from_toml(MINIMAL, Path::new(".")).unwrap();
        let o = RunOverrides {
            roi_index: None,
            disable_detrend: true,
            disable_clip: false,
        };
        o.apply(&mut cfg).unwrap();
        let r = cfg.refine_params();
        assert!(!r.detrend && r.clip && r.standardize);
        let o = RunOverrides {
            roi_index: Some(2),
            ..RunOverrides::default()
        };
        assert!(o.apply(&mut cfg).is_err());
    }
}
