//! `vitaltrace` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numerical.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use vitaltrace::amtc::extract_traces;
use vitaltrace::eval::evaluate;
use vitaltrace::flow::{estimate_flow, FlowParams};
use vitaltrace::media::{read_frame_sequence, to_gray};
use vitaltrace::pipeline::{
    extract_signals, roi_dir, run_pipeline, write_report, write_traces, PipelineConfig, RunOverrides, Stage,
    StageError, StageExt,
};
use vitaltrace::refine::{refine, RefineParams};
use vitaltrace::roi::SignalKind;
use vitaltrace::spectral::{spectrogram, SpectrogramParams};
use vitaltrace::synth::{FreqSchedule, Scenario, SynthSpec, SynthVideo};
use vitaltrace::{io, Error};

#[derive(Debug, Parser)]
#[command(name = "vitaltrace", version, about = "Breathing and heart-rate traces from video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic frame sequence with ground truth.
    Synth(SynthArgs),
    /// Dense flow from frame 0 to one frame, written as u.csv / v.csv.
    Flow(FlowArgs),
    /// Raw ROI signals (raw.csv + raw.json per ROI).
    Extract(ExtractArgs),
    /// Detrend, clip and standardize a raw signal.
    Refine(RefineArgs),
    /// Band-limited spectrogram of a refined signal.
    Spectrogram(StageArgs),
    /// Frequency traces from a saved spectrogram.
    Track(TrackArgs),
    /// Compare an estimated trace with a reference.
    Eval(EvalArgs),
    /// Full pipeline from a configuration file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML scene description; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Linear rate ramp over the clip, `FROM:TO` in bpm.
    #[arg(long, value_parser = parse_pair)]
    ramp: Option<(f64, f64)>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    drift: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    /// Second tone, `BPM:AMPLITUDE`.
    #[arg(long, value_parser = parse_pair)]
    interference: Option<(f64, f64)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Target frame index; the reference is frame 0.
    #[arg(long)]
    frame: usize,
    /// Optional run configuration supplying `[flow]`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    roi_index: Option<usize>,
    /// Output directory; defaults to the configuration's.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Run configuration supplying parameters; presets by signal kind otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RefineArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    disable_detrend: bool,
    #[arg(long)]
    disable_clip: bool,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Saved `spec.csv` (with `spec_meta.json` next to it).
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving trace_1.csv, trace_2.csv, ...
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    max_lag: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Process only this ROI (1-based).
    #[arg(long)]
    roi_index: Option<usize>,
    #[arg(long)]
    disable_detrend: bool,
    #[arg(long)]
    disable_clip: bool,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected A:B, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    match s {
        "breathing-motion" => Ok(Scenario::BreathingMotion),
        "pulse-color" => Ok(Scenario::PulseColor),
        "patting-plus-breath" => Ok(Scenario::PattingPlusBreath),
        _ => Err(format!(
            "unknown scenario {s:?} (breathing-motion | pulse-color | patting-plus-breath)"
        )),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numerical(_) => 3,
        Error::Ingest { .. }
        | Error::Decode { .. }
        | Error::Data(_)
        | Error::Contract(_)
        | Error::Io { .. } => 2,
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig, StageError> {
    let cfg = PipelineConfig::load(path).map_err(|error| StageError {
        stage: Stage::Config,
        error: match error {
            // An unreadable config file is a usage problem, not bad data.
            Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
            other => other,
        },
    })?;
    cfg.validate_params().stage(Stage::Config)?;
    Ok(cfg)
}

fn synth(args: SynthArgs) -> Result<(), StageError> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
                .stage(Stage::Config)?;
            SynthSpec::from_toml(&text).stage(Stage::Config)?
        }
        None => SynthSpec::breathing(FreqSchedule::ramp(20.0, 35.0, 60.0).stage(Stage::Config)?, 0),
    };
    if let Some(s) = args.scenario {
        spec.scenario = s;
        if s == Scenario::PulseColor && args.spec.is_none() {
            spec.amplitude = 1.5;
            spec.drift_per_frame = 0.01;
            spec.freq_trace_bpm = FreqSchedule::ramp(70.0, 95.0, spec.duration_s).stage(Stage::Config)?;
        }
    }
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                spec.$field = v;
            }
        };
    }
    set!(duration_s, args.duration);
    set!(fps, args.fps);
    set!(width, args.width);
    set!(height, args.height);
    set!(amplitude, args.amplitude);
    set!(drift_per_frame, args.drift);
    set!(noise_sigma, args.noise);
    set!(seed, args.seed);
    if let Some((a, b)) = args.ramp {
        spec.freq_trace_bpm = FreqSchedule::ramp(a, b, spec.duration_s).stage(Stage::Config)?;
    }
    if let Some((f, a)) = args.interference {
        spec.interference_freq_bpm = Some(f);
        spec.interference_amplitude = Some(a);
    }
    let video = SynthVideo::new(spec).stage(Stage::Config)?;
    video.write_to(&args.out).stage(Stage::Output)?;
    println!("synth: {} frames -> {}", video.frame_count(), args.out.display());
    Ok(())
}

fn flow(args: FlowArgs) -> Result<(), StageError> {
    let params = match &args.config {
        Some(p) => load_config(p)?.flow,
        None => FlowParams::default(),
    };
    let seq = read_frame_sequence(&args.manifest).stage(Stage::Ingest)?;
    let reference = to_gray(&seq.read(0).stage(Stage::Ingest)?);
    let target = to_gray(&seq.read(args.frame).stage(Stage::Ingest)?);
    let field = estimate_flow(&reference, &target, &params).stage(Stage::Extract)?;
    io::write_flow(&args.out, &field).stage(Stage::Output)?;
    println!(
        "flow: frame 0 -> {} mean |d| {:.4} px -> {}",
        args.frame,
        field.mean_magnitude(),
        args.out.display()
    );
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<(), StageError> {
    let cfg = load_config(&args.config)?;
    cfg.validate().stage(Stage::Ingest)?;
    let seq = read_frame_sequence(&cfg.input.manifest).stage(Stage::Ingest)?;
    let fps = seq.manifest().fps;
    let out = args.out.unwrap_or_else(|| cfg.output.dir.clone());
    let overrides = RunOverrides {
        roi_index: args.roi_index,
        ..RunOverrides::default()
    };
    // Only the raw signals are kept; downstream stages run separately.
    let result = extract_signals(&cfg, &overrides, fps, seq)?;
    for (index, raw) in result {
        let path = roi_dir(&out, index).join("raw.csv");
        io::write_raw_signal(&path, &raw).stage(Stage::Output)?;
        println!("extract: roi_{index} {} samples -> {}", raw.len(), path.display());
    }
    Ok(())
}

fn refine_cmd(args: RefineArgs) -> Result<(), StageError> {
    let raw = io::read_raw_signal(&args.stage.input).stage(Stage::Ingest)?;
    let mut params = match &args.stage.config {
        Some(p) => load_config(p)?.refine_params(),
        None if raw.kind == SignalKind::ColorWeighted => RefineParams::heart_rate(),
        None => RefineParams::breathing(),
    };
    params.detrend &= !args.disable_detrend;
    params.clip &= !args.disable_clip;
    let refined = refine(&raw, &params).stage(Stage::Refine)?;
    io::write_refined_signal(&args.stage.output, &refined, raw.kind).stage(Stage::Output)?;
    println!("refine: {} samples -> {}", refined.len(), args.stage.output.display());
    Ok(())
}

fn spectrogram_cmd(args: StageArgs) -> Result<(), StageError> {
    let refined = io::read_refined_signal(&args.input).stage(Stage::Ingest)?;
    let kind = io::read_signal_kind(&args.input).stage(Stage::Ingest)?;
    let params = match &args.config {
        Some(p) => load_config(p)?.spectral_params(),
        None if kind == SignalKind::ColorWeighted => SpectrogramParams::heart_rate(),
        None => SpectrogramParams::breathing(),
    };
    let spec = spectrogram(&refined, &params).stage(Stage::Spectrogram)?;
    io::write_spectrogram(&args.output, &spec).stage(Stage::Output)?;
    println!(
        "spectrogram: {} columns x {} bins -> {}",
        spec.num_columns(),
        spec.num_bins(),
        args.output.display()
    );
    Ok(())
}

fn track(args: TrackArgs) -> Result<(), StageError> {
    let amtc = match &args.config {
        Some(p) => load_config(p)?.amtc,
        None => Default::default(),
    };
    let spec = io::read_spectrogram(&args.input).stage(Stage::Ingest)?;
    let extraction = extract_traces(&spec, &amtc).stage(Stage::Track)?;
    write_traces(&args.out_dir, &extraction).stage(Stage::Output)?;
    println!(
        "track: {} trace(s){} -> {}",
        extraction.traces.len(),
        if extraction.exhausted { " (spectrogram exhausted)" } else { "" },
        args.out_dir.display()
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<(), StageError> {
    let est = io::read_rate_trace(&args.est).stage(Stage::Ingest)?;
    let reference = io::read_rate_trace(&args.reference).stage(Stage::Ingest)?;
    let report = evaluate(&est, &reference, args.max_lag).stage(Stage::Eval)?;
    match (&args.output, &args.config) {
        (Some(out), Some(cfg)) => write_report(out, &load_config(cfg)?, &report).stage(Stage::Output)?,
        (Some(out), None) => io::write_json(out, &report).stage(Stage::Output)?,
        (None, _) => {}
    }
    println!(
        "eval: rmse {:.4} bpm, sd|e| {:.4} bpm, me_rate {:.3} %, lag {} s, n {}",
        report.rmse_bpm, report.sd_abs_error_bpm, report.me_rate_percent, report.applied_lag_s, report.n_samples
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), StageError> {
    let cfg = load_config(&args.config)?;
    let overrides = RunOverrides {
        roi_index: args.roi_index,
        disable_detrend: args.disable_detrend,
        disable_clip: args.disable_clip,
    };
    let result = run_pipeline(&cfg, &overrides)?;
    for roi in &result.rois {
        let mean = |f: &[f64]| f.iter().sum::<f64>() / f.len() as f64;
        let traces: Vec<String> = roi
            .extraction
            .traces
            .iter()
            .map(|t| format!("{:.1}", mean(&t.freqs_bpm)))
            .collect();
        print!("run: roi_{} mean trace bpm [{}]", roi.index, traces.join(", "));
        match &roi.report {
            Some(r) => println!(
                ", rmse {:.3} bpm, sd|e| {:.3} bpm, me_rate {:.2} %",
                r.rmse_bpm, r.sd_abs_error_bpm, r.me_rate_percent
            ),
            None => println!(),
        }
    }
    info!("timings: {:?}", result.timings);
    println!("run: outputs in {}", cfg.output.dir.display());
    Ok(())
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("VITALTRACE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("VITALTRACE_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Flow(a) => flow(a),
        Command::Extract(a) => extract(a),
        Command::Refine(a) => refine_cmd(a),
        Command::Spectrogram(a) => spectrogram_cmd(a),
        Command::Track(a) => track(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Run(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e.error))
        }
    }
}
