//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vitaltrace::spectral::Spectrogram;

/// Exhaustive search over all `F^T` bin paths.
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub best_score: f64,
    /// Number of paths reaching `best_score`.
    pub maximizers: usize,
    /// One maximizing path (the first in lexicographic order).
    pub path: Vec<usize>,
    /// Smallest total jump among maximizing paths.
    pub min_jump: usize,
}

/// Objective accumulated column by column.
pub fn path_score(m: &[Vec<f64>], path: &[usize], lambda: f64) -> f64 {
    let mut acc = m[0][path[0]];
    for t in 1..path.len() {
        let d = path[t].abs_diff(path[t - 1]) as f64;
        acc = (acc - lambda * d) + m[t][path[t]];
    }
    acc
}

pub fn total_jump(path: &[usize]) -> usize {
    path.windows(2).map(|w| w[0].abs_diff(w[1])).sum()
}

pub fn brute_force(m: &[Vec<f64>], lambda: f64) -> BruteForce {
    let t = m.len();
    let f = m[0].len();
    let mut path = vec![0usize; t];
    let mut best = BruteForce {
        best_score: f64::NEG_INFINITY,
        maximizers: 0,
        path: path.clone(),
        min_jump: usize::MAX,
    };
    loop {
        let s = path_score(m, &path, lambda);
        let j = total_jump(&path);
        if s > best.best_score {
            best = BruteForce {
                best_score: s,
                maximizers: 1,
                path: path.clone(),
                min_jump: j,
            };
        } else if s == best.best_score {
            best.maximizers += 1;
            best.min_jump = best.min_jump.min(j);
        }
        // Odometer increment, last column fastest.
        let mut k = t;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            path[k] += 1;
            if path[k] < f {
                break;
            }
            path[k] = 0;
        }
    }
}

pub fn random_matrix(rng: &mut ChaCha8Rng, t: usize, f: usize) -> Vec<Vec<f64>> {
    (0..t).map(|_| (0..f).map(|_| rng.random::<f64>()).collect()).collect()
}

pub fn spectrogram_of(m: Vec<Vec<f64>>) -> Spectrogram {
    let t = m.len();
    let f = m[0].len();
    Spectrogram::new(
        m,
        (0..t).map(|i| 5.0 + 0.2 * i as f64).collect(),
        (0..f).map(|k| 15.0 + 0.87890625 * k as f64).collect(),
        30.0,
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain arithmetic mean.
pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Dominant frequency of `x` in bpm by direct DFT on a fine grid.
pub fn dft_peak_bpm(x: &[f64], fs: f64, lo_bpm: f64, hi_bpm: f64, step_bpm: f64) -> f64 {
    let m = mean(x);
    let mut best = (lo_bpm, -1.0);
    let mut f = lo_bpm;
    while f <= hi_bpm {
        let w = 2.0 * std::f64::consts::PI * f / 60.0 / fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            re += (v - m) * (w * i as f64).cos();
            im += (v - m) * (w * i as f64).sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (f, p);
        }
        f += step_bpm;
    }
    best.0
}
