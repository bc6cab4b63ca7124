mod common;

use common::*;
use vitaltrace::amtc::*;
use vitaltrace::spectral::Spectrogram;

fn params(lambda: f64, backtrack_len: usize) -> AmtcParams {
    AmtcParams {
        jump_penalty_lambda: lambda,
        backtrack_len,
        ..AmtcParams::default()
    }
}

#[test]
fn worked_example_against_enumeration() {
    let m = vec![vec![0.9, 0.1, 0.0], vec![0.0, 0.1, 0.9], vec![0.9, 0.1, 0.0]];
    let bf = brute_force(&m, 0.5);
    assert_eq!(bf.path, vec![0, 0, 0]);
    assert_eq!(bf.maximizers, 1);
    let chase = path_score(&m, &[0, 2, 0], 0.5);
    assert!((chase - 0.7).abs() < 1e-12);
    let tr = track_trace(&spectrogram_of(m), &params(0.5, 10)).unwrap();
    assert_eq!(tr.bins, bf.path);
    assert_eq!(tr.score, bf.best_score);
    assert!((tr.score - 1.8).abs() < 1e-12);
}

#[test]
fn dp_matches_exhaustive_search() {
    let mut r = rng(101);
    for _ in 0..300 {
        let t = 1 + (rand::Rng::random::<u32>(&mut r) % 6) as usize;
        let f = 2 + (rand::Rng::random::<u32>(&mut r) % 4) as usize;
        let m = random_matrix(&mut r, t, f);
        for lambda in [0.0, 0.1, 0.5, 2.0] {
            let bf = brute_force(&m, lambda);
            let tr = track_trace(&spectrogram_of(m.clone()), &params(lambda, 10)).unwrap();
            assert_eq!(tr.score, bf.best_score);
            if bf.maximizers == 1 {
                assert_eq!(tr.bins, bf.path);
            }
        }
    }
}

#[test]
fn zero_lambda_is_columnwise_argmax() {
    let mut r = rng(7);
    for _ in 0..100 {
        let m = random_matrix(&mut r, 8, 6);
        let tr = track_trace(&spectrogram_of(m.clone()), &params(0.0, 10)).unwrap();
        for (t, col) in m.iter().enumerate() {
            let mut best = 0;
            for k in 1..col.len() {
                if col[k] > col[best] {
                    best = k;
                }
            }
            assert_eq!(tr.bins[t], best);
        }
    }
}

#[test]
fn large_lambda_gives_constant_trace() {
    let mut r = rng(9);
    for _ in 0..50 {
        let m = random_matrix(&mut r, 12, 7);
        let lambda = 1.0 * 7.0 + 0.01;
        let tr = track_trace(&spectrogram_of(m), &params(lambda, 10)).unwrap();
        assert!(tr.bins.iter().all(|&b| b == tr.bins[0]));
    }
}

#[test]
fn online_full_backtrack_equals_offline() {
    let mut r = rng(3);
    for _ in 0..100 {
        let t = 1 + (rand::Rng::random::<u32>(&mut r) % 30) as usize;
        let m = random_matrix(&mut r, t, 9);
        let s = spectrogram_of(m);
        let off = track_trace(&s, &params(0.2, 10)).unwrap();
        let on = track_online(&s, &params(0.2, t)).unwrap();
        assert_eq!(on, off);
    }
}

#[test]
fn frozen_estimates_never_change() {
    let mut r = rng(5);
    for _ in 0..30 {
        let m = random_matrix(&mut r, 60, 8);
        let mut tracker = OnlineTracker::new(8, &params(0.15, 10)).unwrap();
        let mut frozen: Vec<usize> = Vec::new();
        for col in &m {
            let est = tracker.push(col).unwrap().to_vec();
            assert_eq!(&est[..frozen.len()], &frozen[..]);
            let n_frozen = tracker.frozen_len();
            frozen.extend_from_slice(&est[frozen.len()..n_frozen]);
        }
    }
}

#[test]
fn step_ridge_revisions_stay_inside_backtrack_window() {
    // Ridge at bin 3 for 20 columns, then bin 12.
    let (t, f, k): (usize, usize, usize) = (40, 16, 20);
    let m: Vec<Vec<f64>> = (0..t)
        .map(|c| {
            let mut col = vec![0.05; f];
            col[if c < k { 3 } else { 12 }] = 1.0;
            col
        })
        .collect();
    let s = spectrogram_of(m.clone());
    let offline = track_trace(&s, &params(0.15, 10)).unwrap();
    let mut tracker = OnlineTracker::new(f, &params(0.15, 10)).unwrap();
    let mut history: Vec<Vec<usize>> = Vec::new();
    for col in &m {
        history.push(tracker.push(col).unwrap().to_vec());
    }
    let last = history.last().unwrap();
    assert_eq!(last, &offline.bins);
    for h in &history {
        for c in 0..h.len().min(k.saturating_sub(10)) {
            assert_eq!(h[c], 3);
        }
    }
}

#[test]
fn suppression_exposes_second_ridge() {
    let (t, f) = (25, 40);
    let m: Vec<Vec<f64>> = (0..t)
        .map(|_| {
            let mut col = vec![0.01; f];
            col[30] = 1.0;
            col[29] = 0.6;
            col[31] = 0.6;
            col[8] = 0.4;
            col
        })
        .collect();
    let s = spectrogram_of(m);
    let p = AmtcParams {
        num_traces: 2,
        suppression_halfwidth_bins: 3,
        ..params(0.15, 10)
    };
    let first = track_trace(&s, &p).unwrap();
    assert!(first.bins.iter().all(|&b| b == 30));
    let rest = suppress_trace(&s, &first, 3).unwrap();
    for c in 0..t {
        assert_eq!(rest.column_argmax(c), 8);
        assert!(rest.column(c)[27..=33].iter().all(|&v| v == 0.0));
    }
    let ex = extract_traces(&s, &p).unwrap();
    assert!(!ex.exhausted);
    assert_eq!(ex.traces.len(), 2);
    assert!(ex.traces[1].bins.iter().all(|&b| b == 8));
}

#[test]
fn large_spectrogram_tracks_quickly() {
    let mut r = rng(11);
    let m = random_matrix(&mut r, 600, 1200);
    let s = Spectrogram::new(
        m,
        (0..600).map(|i| i as f64).collect(),
        (0..1200).map(|k| k as f64 * 0.1 + 1.0).collect(),
        30.0,
    )
    .unwrap();
    let start = std::time::Instant::now();
    track_trace(&s, &AmtcParams::default()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
}
