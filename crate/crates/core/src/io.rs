//! On-disk formats for intermediate artifacts.
//!
//! Signals and traces are CSV; a JSON sidecar carries what the CSV cannot
//! (sampling rate, signal kind, refinement parameters). Floats are written in
//! shortest round-trip form, so reading a file back yields identical values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::amtc::FrequencyTrace;
use crate::error::{Error, Result};
use crate::eval::{events_to_rate_trace, RateTrace};
use crate::flow::FlowField;
use crate::refine::{RefineParams, RefinedSignal};
use crate::roi::{RawSignal, SignalKind};
use crate::spectral::Spectrogram;

/// Window and step used when breath events are converted to a rate.
pub const EVENT_WINDOW_S: f64 = 10.0;
pub const EVENT_STEP_S: f64 = 1.0;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and numeric rows of a CSV file.
fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::Data(format!("{}: row {}: not a number: {f:?}", path.display(), line + 2))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column_index(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Data(format!("{}: missing column {name:?}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// `foo.csv` -> `foo.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SignalMeta {
    fs: f64,
    kind: SignalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    refine: Option<RefineParams>,
}

fn write_samples(path: &Path, samples: &[f64], fs: f64) -> Result<()> {
    let header = ["index", "time_s", "value"].map(String::from);
    write_rows(
        path,
        &header,
        samples
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), (i as f64 / fs).to_string(), v.to_string()]),
    )
}

fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let (header, rows) = read_rows(path)?;
    let col = column_index(path, &header, "value")?;
    rows.iter()
        .map(|r| {
            r.get(col)
                .copied()
                .ok_or_else(|| Error::Data(format!("{}: short row", path.display())))
        })
        .collect()
}

/// Writes `index,time_s,value` only.
pub fn write_signal_csv(path: &Path, signal: &RawSignal) -> Result<()> {
    write_samples(path, &signal.samples, signal.fs)
}

/// CSV plus JSON sidecar.
pub fn write_raw_signal(path: &Path, signal: &RawSignal) -> Result<()> {
    write_samples(path, &signal.samples, signal.fs)?;
    write_json(
        &sidecar_path(path),
        &SignalMeta {
            fs: signal.fs,
            kind: signal.kind,
            refine: None,
        },
    )
}

pub fn read_raw_signal(path: &Path) -> Result<RawSignal> {
    let meta: SignalMeta = read_json(&sidecar_path(path))?;
    RawSignal::new(read_samples(path)?, meta.fs, meta.kind)
}

/// CSV plus JSON sidecar holding the refinement parameters. `kind` records
/// what the samples were derived from.
pub fn write_refined_signal(path: &Path, signal: &RefinedSignal, kind: SignalKind) -> Result<()> {
    write_samples(path, &signal.samples, signal.fs)?;
    write_json(
        &sidecar_path(path),
        &SignalMeta {
            fs: signal.fs,
            kind,
            refine: Some(signal.provenance.clone()),
        },
    )
}

pub fn read_refined_signal(path: &Path) -> Result<RefinedSignal> {
    let meta: SignalMeta = read_json(&sidecar_path(path))?;
    let samples = read_samples(path)?;
    if !(meta.fs > 0.0) || samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!("{}: invalid refined signal", path.display())));
    }
    Ok(RefinedSignal {
        samples,
        fs: meta.fs,
        provenance: meta.refine.unwrap_or_default(),
    })
}

/// Signal kind recorded in a CSV's sidecar.
pub fn read_signal_kind(csv_path: &Path) -> Result<SignalKind> {
    let meta: SignalMeta = read_json(&sidecar_path(csv_path))?;
    Ok(meta.kind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpectrogramMeta {
    fs: f64,
    num_columns: usize,
    freq_axis_bpm: Vec<f64>,
}

/// `spec.csv` holds one row per column: `time_s` then one magnitude per bin,
/// with the bin frequencies in the header. `spec_meta.json` sits next to it.
pub fn write_spectrogram(csv_path: &Path, spec: &Spectrogram) -> Result<()> {
    let mut header = vec!["time_s".to_string()];
    header.extend(spec.freq_axis_bpm.iter().map(|f| f.to_string()));
    write_rows(
        csv_path,
        &header,
        spec.magnitudes.iter().zip(&spec.time_axis).map(|(col, t)| {
            std::iter::once(t.to_string())
                .chain(col.iter().map(|m| m.to_string()))
                .collect()
        }),
    )?;
    write_json(
        &spectrogram_meta_path(csv_path),
        &SpectrogramMeta {
            fs: spec.fs,
            num_columns: spec.num_columns(),
            freq_axis_bpm: spec.freq_axis_bpm.clone(),
        },
    )
}

/// `.../spec.csv` -> `.../spec_meta.json`.
pub fn spectrogram_meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("spec");
    csv_path.with_file_name(format!("{stem}_meta.json"))
}

pub fn read_spectrogram(csv_path: &Path) -> Result<Spectrogram> {
    let meta: SpectrogramMeta = read_json(&spectrogram_meta_path(csv_path))?;
    let (header, rows) = read_rows(csv_path)?;
    if header.len() != meta.freq_axis_bpm.len() + 1 || rows.len() != meta.num_columns {
        return Err(Error::Data(format!(
            "{}: shape does not match {}",
            csv_path.display(),
            spectrogram_meta_path(csv_path).display()
        )));
    }
    let mut time_axis = Vec::with_capacity(rows.len());
    let mut magnitudes = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Data(format!("{}: row {} is short", csv_path.display(), i + 2)));
        }
        time_axis.push(row[0]);
        magnitudes.push(row[1..].to_vec());
    }
    Spectrogram::new(magnitudes, time_axis, meta.freq_axis_bpm, meta.fs)
}

/// `time_s,freq_bpm,score_contrib`.
pub fn write_trace(path: &Path, trace: &FrequencyTrace) -> Result<()> {
    let header = ["time_s", "freq_bpm", "score_contrib"].map(String::from);
    write_rows(
        path,
        &header,
        trace
            .time_axis
            .iter()
            .zip(&trace.freqs_bpm)
            .zip(&trace.score_contrib)
            .map(|((t, f), s)| vec![t.to_string(), f.to_string(), s.to_string()]),
    )
}

/// `time_s,freq_bpm`.
pub fn write_rate_trace(path: &Path, trace: &RateTrace) -> Result<()> {
    let header = ["time_s", "freq_bpm"].map(String::from);
    write_rows(
        path,
        &header,
        trace
            .time_s
            .iter()
            .zip(&trace.bpm)
            .map(|(t, f)| vec![t.to_string(), f.to_string()]),
    )
}

/// Reads a rate from any supported layout: `time_s` with one of
/// `freq_bpm` / `value_bpm` / `bpm`, or a single `event_time_s` column of
/// breath or beat events.
pub fn read_rate_trace(path: &Path) -> Result<RateTrace> {
    let (header, rows) = read_rows(path)?;
    if let Ok(col) = column_index(path, &header, "event_time_s") {
        let events: Vec<f64> = rows.iter().filter_map(|r| r.get(col).copied()).collect();
        return events_to_rate_trace(&events, EVENT_WINDOW_S, EVENT_STEP_S);
    }
    let t = column_index(path, &header, "time_s")?;
    let v = ["freq_bpm", "value_bpm", "bpm"]
        .iter()
        .find_map(|n| column_index(path, &header, n).ok())
        .ok_or_else(|| Error::Data(format!("{}: no rate column", path.display())))?;
    let mut time_s = Vec::with_capacity(rows.len());
    let mut bpm = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        match (r.get(t), r.get(v)) {
            (Some(&a), Some(&b)) => {
                time_s.push(a);
                bpm.push(b);
            }
            _ => return Err(Error::Data(format!("{}: row {} is short", path.display(), i + 2))),
        }
    }
    RateTrace::new(time_s, bpm)
}

fn write_matrix(path: &Path, width: usize, data: &[f32]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for row in data.chunks(width) {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `u.csv` and `v.csv`, one text row per image row.
pub fn write_flow(dir: &Path, flow: &FlowField) -> Result<()> {
    write_matrix(&dir.join("u.csv"), flow.width(), flow.u())?;
    write_matrix(&dir.join("v.csv"), flow.width(), flow.v())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_signal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("raw.csv");
        let s = RawSignal::new(vec![0.1, -2.5e-7, 1.0 / 3.0], 29.97, SignalKind::MotionSum).unwrap();
        write_raw_signal(&p, &s).unwrap();
        assert_eq!(read_raw_signal(&p).unwrap(), s);
    }

    #[test]
    fn spectrogram_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spec.csv");
        let s = Spectrogram::new(
            vec![vec![0.25, 1.0, 1.0 / 7.0], vec![1.0, 0.0, 0.123456789]],
            vec![5.0, 5.2],
            vec![15.82, 16.7, 17.58],
            30.0,
        )
        .unwrap();
        write_spectrogram(&p, &s).unwrap();
        assert!(dir.path().join("spec_meta.json").exists());
        assert_eq!(read_spectrogram(&p).unwrap(), s);
    }

    #[test]
    fn rate_trace_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.csv");
        fs::write(&p, "time_s,value_bpm\n0,20\n1,21.5\n").unwrap();
        let r = read_rate_trace(&p).unwrap();
        assert_eq!(r.bpm, vec![20.0, 21.5]);

        let events: String = (0..30).map(|i| format!("{}\n", i as f64 * 3.0)).collect();
        fs::write(&p, format!("event_time_s\n{events}")).unwrap();
        let r = read_rate_trace(&p).unwrap();
        assert!(r.bpm.iter().all(|&b| (b - 20.0).abs() < 1e-9));

        fs::write(&p, "time_s,value_bpm\n0,abc\n").unwrap();
        assert!(matches!(read_rate_trace(&p), Err(Error::Data(_))));
        fs::write(&p, "t,x\n0,1\n1,2\n").unwrap();
        assert!(matches!(read_rate_trace(&p), Err(Error::Data(_))));
    }
}
