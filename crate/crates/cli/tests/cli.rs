use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vitaltrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vitaltrace"))
        .args(args)
        .env_remove("VITALTRACE_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Renders a small breathing clip and writes a config with two ROIs.
fn small_clip(dir: &Path) -> std::path::PathBuf {
    let video = dir.join("video");
    let o = vitaltrace(&[
        "synth", "--width", "160", "--height", "120", "--fps", "10", "--duration", "30", "--ramp", "20:30",
        "--drift", "0.01", "--seed", "4", "--out", s(&video),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        "[input]\nmanifest = 'video/manifest.json'\n\
         [roi]\nrects = [[60, 25, 40, 30], [70, 30, 30, 24]]\n\
         [signal]\nkind = 'motion-vertical'\n\
         [eval]\nreference = 'video/truth_trace.csv'\n\
         [output]\ndir = 'out'\n",
    )
    .unwrap();
    cfg
}

#[test]
fn staged_commands_reproduce_the_fused_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_clip(d);

    let o = vitaltrace(&["run", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fused = d.join("out/roi_1");
    for f in ["raw.csv", "refined.csv", "spec.csv", "trace_1.csv", "report.json"] {
        assert!(fused.join(f).is_file(), "{f} missing");
    }
    assert!(d.join("out/run_meta.json").is_file());

    let staged = d.join("staged");
    // Only the first region: its signal must not depend on the second.
    let o = vitaltrace(&["extract", "--config", s(&cfg), "--roi-index", "1", "--out", s(&staged)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!staged.join("roi_2").exists());
    let roi = staged.join("roi_1");
    let (raw, refined, spec) = (roi.join("raw.csv"), roi.join("refined.csv"), roi.join("spec.csv"));
    let steps: [&[&str]; 3] = [
        &["refine", "--config", s(&cfg), "--input", s(&raw), "--output", s(&refined)],
        &["spectrogram", "--config", s(&cfg), "--input", s(&refined), "--output", s(&spec)],
        &["track", "--config", s(&cfg), "--input", s(&spec), "--out-dir", s(&roi)],
    ];
    for args in steps {
        let o = vitaltrace(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    for f in ["raw.csv", "refined.csv", "spec.csv", "trace_1.csv"] {
        assert_eq!(fs::read(roi.join(f)).unwrap(), fs::read(fused.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn eval_of_identical_traces_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let trace = tmp.path().join("t.csv");
    let rows: String = (0..60).map(|i| format!("{},{}\n", i as f64 * 0.5, 20.0 + (i % 7) as f64)).collect();
    fs::write(&trace, format!("time_s,freq_bpm\n{rows}")).unwrap();
    let report = tmp.path().join("report.json");
    let o = vitaltrace(&["eval", "--est", s(&trace), "--ref", s(&trace), "--output", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&report).unwrap();
    for key in ["rmse_bpm", "sd_abs_error_bpm", "me_rate_percent"] {
        assert!(text.contains(&format!("\"{key}\": 0.0")), "{key} not zero in {text}");
    }
}

#[test]
fn missing_manifest_is_a_data_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "[input]\nmanifest = 'nowhere/manifest.json'\n[roi]\nrects = [[10, 10, 40, 30]]\n\
         [signal]\nkind = 'motion-vertical'\n[output]\ndir = 'out'\n",
    )
    .unwrap();
    let o = vitaltrace(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere/manifest.json"), "{}", stderr(&o));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(vitaltrace(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vitaltrace(&["run"]).status.code(), Some(1));
    assert_eq!(vitaltrace(&["--help"]).status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[input]\nmanifest = 'm.json'\n[output]\ndir = 'o'\n[roi]\nrects = [[0, 0, 8, 8]]\n[signal]\nkind = 'infrared'\n").unwrap();
    let o = vitaltrace(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(vitaltrace(&["run", "--config", s(&tmp.path().join("absent.toml"))]).status.code(), Some(1));

    let o = Command::new(env!("CARGO_BIN_EXE_vitaltrace"))
        .args(["eval", "--est", "a", "--ref", "b"])
        .env("VITALTRACE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
