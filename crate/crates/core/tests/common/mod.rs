//! Independent oracles and scene helpers shared by integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::sync::Mutex;

use echo_sonar::chirp::{generate_chirp, repeat_chirps, ChirpSpec};
use echo_sonar::geometry::Vec3;
use echo_sonar::rangeprofile::{preprocess, PreprocessConfig, Preprocessed};
use echo_sonar::sim::{propagate, Scene};

/// Serialises timing-sensitive tests.
pub static SERIAL: Mutex<()> = Mutex::new(());

/// Print a verdict line past the test harness's output capture.
pub fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[{verdict}] criterion {criterion:>2} {name}: {detail}").unwrap();
    out.flush().unwrap();
}

/// `r[k] = Σ_n w[(n + k) mod N] · t[n]`, summed directly.
pub fn brute_xcorr(w: &[f64], t: &[f64]) -> Vec<f64> {
    let n = w.len();
    (0..n).map(|k| (0..n).map(|i| w[(i + k) % n] * t[i]).sum()).collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn dist(a: Vec3, b: Vec3) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

/// Extra path length of the echo over the direct path, in samples (not
/// rounded): the profile cell the echo should occupy after anchoring.
pub fn expected_cell(scene: &Scene, spec: &ChirpSpec, p: Vec3, mic: usize) -> f64 {
    let m = scene.mics.positions[mic];
    let s = scene.speaker_pos;
    (dist(s, p) + dist(p, m) - dist(s, m)) * f64::from(spec.sample_rate_hz) / spec.sound_speed_mps
}

/// Point at `(0, y, z)` whose round-trip-equivalent range on `mic` equals
/// `range_m`, found by bisection on `y`.
pub fn place_at_range(scene: &Scene, spec: &ChirpSpec, range_m: f64, z: f64, mic: usize) -> Vec3 {
    let target = 2.0 * range_m * f64::from(spec.sample_rate_hz) / spec.sound_speed_mps;
    let (mut lo, mut hi) = (0.0, 3.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_cell(scene, spec, Vec3::new(0.0, mid, z), mic) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Vec3::new(0.0, 0.5 * (lo + hi), z)
}

/// Render `chirps` periods of the default chirp in `scene` and run the
/// range-profile pipeline.
pub fn run_pipeline(scene: &Scene, spec: &ChirpSpec, chirps: usize) -> Preprocessed {
    let tx = repeat_chirps(&generate_chirp(spec).unwrap(), chirps).unwrap();
    let rec = propagate(scene, &tx, spec).unwrap();
    preprocess(&rec, spec, &PreprocessConfig::default()).unwrap()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Transmit chirp index heard in a cut window.
pub fn window_of(pre: &Preprocessed, i: usize, spec: &ChirpSpec) -> usize {
    (pre.cut[i].origin_samples[0] - pre.anchor.anchor_sample[0]) / spec.chirp_len_samples
}
