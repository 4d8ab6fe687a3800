//! FMCW transmit waveform and the receive-side high-pass filter.
//!
//! The transmit signal is a train of identical linear up-chirps. One chirp
//! has phase `2π (f0 t + B t² / (2 Tc))`, so its instantaneous frequency
//! rises linearly from `f0` to `f0 + B` over `Tc` seconds. No taper is
//! applied at the chirp boundaries.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FMCW chirp parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpSpec {
    pub start_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_len_samples: usize,
    pub sample_rate_hz: u32,
    pub amplitude: f64,
    pub sound_speed_mps: f64,
}

impl Default for ChirpSpec {
    fn default() -> Self {
        Self {
            start_freq_hz: 17_000.0,
            bandwidth_hz: 3_000.0,
            chirp_len_samples: 512,
            sample_rate_hz: 48_000,
            amplitude: 1.0,
            sound_speed_mps: 343.0,
        }
    }
}

impl ChirpSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.start_freq_hz,
            self.bandwidth_hz,
            self.amplitude,
            self.sound_speed_mps,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("chirp parameters must be finite".into()));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::Config("sample_rate_hz must be positive".into()));
        }
        if self.start_freq_hz < 0.0 || self.bandwidth_hz <= 0.0 {
            return Err(Error::Config("start_freq_hz must be >= 0 and bandwidth_hz > 0".into()));
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        if self.start_freq_hz + self.bandwidth_hz > nyquist {
            return Err(Error::Config(format!(
                "start_freq_hz + bandwidth_hz = {} Hz exceeds Nyquist ({} Hz)",
                self.start_freq_hz + self.bandwidth_hz,
                nyquist
            )));
        }
        if self.chirp_len_samples < 2 {
            return Err(Error::Config("chirp_len_samples must be >= 2".into()));
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::Config(format!("amplitude {} outside (0, 1]", self.amplitude)));
        }
        if self.sound_speed_mps <= 0.0 {
            return Err(Error::Config("sound_speed_mps must be > 0".into()));
        }
        Ok(())
    }

    /// Round-trip-equivalent range covered by one delay sample, `c / (2 fs)`.
    pub fn cell_size_m(&self) -> f64 {
        self.sound_speed_mps / (2.0 * f64::from(self.sample_rate_hz))
    }

    pub fn duration_s(&self) -> f64 {
        self.chirp_len_samples as f64 / f64::from(self.sample_rate_hz)
    }

    /// Instantaneous frequency at sample `n` of a chirp.
    pub fn instantaneous_freq_hz(&self, n: f64) -> f64 {
        self.start_freq_hz + self.bandwidth_hz * n / self.chirp_len_samples as f64
    }

    /// Echo delay in samples for a total path length in metres.
    pub fn delay_samples(&self, path_m: f64) -> f64 {
        path_m / self.sound_speed_mps * f64::from(self.sample_rate_hz)
    }
}

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

/// Multichannel recording, one vector per microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate_hz: u32,
}

impl Recording {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel (channels are kept equal length).
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, idx: usize) -> SampleBuffer {
        SampleBuffer::new(self.channels[idx].clone(), self.sample_rate_hz)
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// One linear up-chirp of exactly `chirp_len_samples`.
pub fn generate_chirp(spec: &ChirpSpec) -> Result<SampleBuffer> {
    spec.validate()?;
    let fs = f64::from(spec.sample_rate_hz);
    let tc = spec.duration_s();
    let samples = (0..spec.chirp_len_samples)
        .map(|n| {
            let t = n as f64 / fs;
            let phase = 2.0 * PI * (spec.start_freq_hz * t + spec.bandwidth_hz * t * t / (2.0 * tc));
            spec.amplitude * phase.sin()
        })
        .collect();
    Ok(SampleBuffer::new(samples, spec.sample_rate_hz))
}

/// Concatenate `count` copies of `chirp` for continuous transmission.
pub fn repeat_chirps(chirp: &SampleBuffer, count: usize) -> Result<SampleBuffer> {
    if count == 0 {
        return Err(Error::Input("chirp repeat count must be >= 1".into()));
    }
    let mut samples = Vec::with_capacity(chirp.len() * count);
    for _ in 0..count {
        samples.extend_from_slice(&chirp.samples);
    }
    Ok(SampleBuffer::new(samples, chirp.sample_rate_hz))
}

/// Linear-phase FIR filter designed with a Kaiser window.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
}

/// Stop-band attenuation of a single FIR pass, in dB. Applied forward and
/// backward the total is twice this.
pub const FIR_STOPBAND_DB: f64 = 50.0;

/// Transition band as a fraction of the cutoff: the stop band ends at
/// `(1 - FIR_TRANSITION) * cutoff`, the pass band starts at `cutoff`.
pub const FIR_TRANSITION: f64 = 0.1;

impl FirFilter {
    /// High-pass with pass-band edge at `cutoff_hz` and stop-band edge at
    /// `0.9 * cutoff_hz`.
    pub fn highpass(cutoff_hz: f64, sample_rate_hz: u32) -> Result<Self> {
        let fs = f64::from(sample_rate_hz);
        check_cutoff(cutoff_hz, fs)?;
        let width = FIR_TRANSITION * cutoff_hz;
        let center = cutoff_hz - width / 2.0;
        let lp = windowed_sinc(center / fs, width / fs);
        let mid = lp.len() / 2;
        let taps = lp
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == mid { 1.0 - v } else { -v })
            .collect();
        Ok(Self { taps })
    }

    /// Low-pass with pass-band edge at `0.9 * cutoff_hz` and stop-band edge at
    /// `cutoff_hz`.
    pub fn lowpass(cutoff_hz: f64, sample_rate_hz: u32) -> Result<Self> {
        let fs = f64::from(sample_rate_hz);
        check_cutoff(cutoff_hz, fs)?;
        let width = FIR_TRANSITION * cutoff_hz;
        let center = cutoff_hz - width / 2.0;
        Ok(Self {
            taps: windowed_sinc(center / fs, width / fs),
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Causal convolution, output truncated to the input length. The input
    /// is treated as zero outside its support.
    pub fn apply_causal(&self, x: &[f64]) -> Vec<f64> {
        let l = self.taps.len();
        let mut padded = vec![0.0; x.len() + l - 1];
        padded[l - 1..].copy_from_slice(x);
        let mut y = vec![0.0; x.len()];
        // Accumulate tap by tap: every output sums its terms in tap order.
        for (k, &h) in self.taps.iter().enumerate() {
            let src = &padded[l - 1 - k..l - 1 - k + x.len()];
            for (out, &v) in y.iter_mut().zip(src) {
                *out += h * v;
            }
        }
        y
    }

    /// Zero-phase forward-backward filtering with zero initial state.
    pub fn apply_zero_phase(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.apply_causal(x);
        y.reverse();
        let mut z = self.apply_causal(&y);
        z.reverse();
        z
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: u32) -> (f64, f64) {
        let w = 2.0 * PI * freq_hz / f64::from(sample_rate_hz);
        self.taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &h)| {
            let a = w * n as f64;
            (re + h * a.cos(), im - h * a.sin())
        })
    }
}

fn check_cutoff(cutoff_hz: f64, fs: f64) -> Result<()> {
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(Error::Config(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {} Hz)",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Kaiser-windowed ideal low-pass; `center` and `width` are normalized to fs.
fn windowed_sinc(center: f64, width: f64) -> Vec<f64> {
    let atten = FIR_STOPBAND_DB;
    let beta = if atten > 50.0 {
        0.1102 * (atten - 8.7)
    } else if atten >= 21.0 {
        0.5842 * (atten - 21.0).powf(0.4) + 0.07886 * (atten - 21.0)
    } else {
        0.0
    };
    let mut len = ((atten - 8.0) / (2.285 * 2.0 * PI * width)).ceil() as usize + 1;
    if len % 2 == 0 {
        len += 1;
    }
    let m = (len - 1) as f64 / 2.0;
    let i0_beta = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let t = n as f64 - m;
            let ideal = if t == 0.0 {
                2.0 * center
            } else {
                (2.0 * PI * center * t).sin() / (PI * t)
            };
            let r = t / m;
            ideal * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta
        })
        .collect()
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Zero-phase high-pass of `signal` with pass band starting at `cutoff_hz`.
pub fn highpass(signal: &SampleBuffer, cutoff_hz: f64) -> Result<SampleBuffer> {
    let filter = FirFilter::highpass(cutoff_hz, signal.sample_rate_hz)?;
    Ok(SampleBuffer::new(
        filter.apply_zero_phase(&signal.samples),
        signal.sample_rate_hz,
    ))
}
