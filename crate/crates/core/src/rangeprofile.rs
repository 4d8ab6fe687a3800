//! Range profiles from multichannel recordings.
//!
//! Each non-overlapping chirp-length window of every channel is circularly
//! cross-correlated with the transmit chirp in the frequency domain. Cell `k`
//! of the resulting profile holds the echo strength at a round-trip delay of
//! `k` samples, i.e. a range of `k * c / (2 fs)`.
//!
//! Start-time cancellation: the strongest early peak of each channel is the
//! direct speaker-to-microphone path. Its arrival sample is found once per
//! session and all later windows are framed so that the direct path sits in
//! cell 0; the first 256 cells are kept. Static clutter is then removed by
//! rectified differences of consecutive windows.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::chirp::{generate_chirp, ChirpSpec, FirFilter, Recording};
use crate::error::{Error, Result};

/// Number of cells kept after the anchor.
pub const CUT_CELLS: usize = 256;

/// Peaks closer than this to a stronger peak sit on its main lobe (carrier
/// ripple) and are not separate paths. Half-width of the tapered main lobe,
/// `2 fs / bandwidth`, for the default chirp.
pub const ANCHOR_SUPPRESS_CELLS: usize = 32;

/// Candidate peaks considered when picking the direct path.
pub const ANCHOR_TOP_PEAKS: usize = 10;

/// Candidates weaker than this fraction of the strongest peak are ignored.
pub const ANCHOR_STRONG_FRACTION: f64 = 0.5;

/// The strongest peak must exceed the profile median by this factor, or the
/// channel is considered dead.
pub const ANCHOR_MIN_PEAK_TO_MEDIAN: f64 = 4.0;

/// Onset threshold as a fraction of the early-signal peak.
pub const ONSET_FRACTION: f64 = 0.25;

/// Circular cross-correlation `r[k] = Σ_n window[(n + k) mod N] · template[n]`
/// through forward FFTs, a conjugate product and an inverse FFT.
pub fn xcorr_fd(window: &[f64], template: &[f64]) -> Result<Vec<f64>> {
    if window.len() != template.len() {
        return Err(Error::Shape(format!(
            "window length {} != template length {}",
            window.len(),
            template.len()
        )));
    }
    let n = window.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut w: Vec<Complex64> = window.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut t: Vec<Complex64> = template.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut w);
    fwd.process(&mut t);
    for (a, b) in w.iter_mut().zip(&t) {
        *a *= b.conj();
    }
    inv.process(&mut w);
    let scale = 1.0 / n as f64;
    Ok(w.into_iter().map(|c| c.re * scale).collect())
}

/// Matched filter against the transmit chirp, normalised so that an echo of
/// amplitude `a` peaks at `a`.
///
/// Internally the template is analytic (one-sided spectrum): the real part of
/// the output is the ordinary correlation, the modulus its envelope.
pub struct Correlator {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    template_conj: Vec<Complex64>,
    scratch: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl Correlator {
    pub fn new(template: &[f64]) -> Result<Self> {
        let n = template.len();
        if n < 2 {
            return Err(Error::Input("correlation template needs >= 2 samples".into()));
        }
        let energy: f64 = template.iter().map(|v| v * v).sum();
        if energy <= 0.0 {
            return Err(Error::Input("correlation template is silent".into()));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut spec: Vec<Complex64> = template.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fwd.process(&mut spec);
        // One-sided spectrum: double positive bins, drop negative ones.
        for (k, c) in spec.iter_mut().enumerate() {
            let weight = if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else if k < n.div_ceil(2) {
                2.0
            } else {
                0.0
            };
            *c = c.conj() * (weight / (n as f64 * energy));
        }
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Ok(Self {
            n,
            fwd,
            inv,
            template_conj: spec,
            scratch: vec![Complex64::new(0.0, 0.0); n],
            fft_scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        })
    }

    /// Sidelobe-weighted matched filter for `spec`'s periodic chirp: the
    /// chirp spectrum is equalised over the sweep band and re-shaped by a Hann
    /// taper, so an echo's response is a Hann kernel on the carrier whose
    /// range sidelobes fall off far faster than the plain correlation.
    pub fn weighted(spec: &ChirpSpec) -> Result<Self> {
        let template = generate_chirp(spec)?;
        let n = template.len();
        let mut plain = Self::new(&template.samples)?;
        let mut spectrum: Vec<Complex64> = template.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        plain.fwd.process(&mut spectrum);
        let fs = f64::from(spec.sample_rate_hz);
        let mut taper_sum = 0.0;
        for (k, c) in spectrum.iter_mut().enumerate() {
            let f = k as f64 * fs / n as f64;
            let u = (f - spec.start_freq_hz) / spec.bandwidth_hz;
            let w = if k < n.div_ceil(2) && (0.0..=1.0).contains(&u) && c.norm() > 0.0 {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * u).cos()
            } else {
                0.0
            };
            taper_sum += w;
            *c = if w > 0.0 { c.inv() * w } else { Complex64::new(0.0, 0.0) };
        }
        if taper_sum <= 0.0 {
            return Err(Error::Input("chirp band holds no FFT bins".into()));
        }
        let scale = 1.0 / taper_sum;
        for c in &mut spectrum {
            *c *= scale;
        }
        plain.template_conj = spectrum;
        Ok(plain)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Complex correlation of one window against the analytic template.
    pub fn correlate_complex(&mut self, window: &[f64]) -> Result<Vec<Complex64>> {
        self.run(window)?;
        Ok(self.scratch.clone())
    }

    /// Absolute correlation per delay cell, written into `out`.
    pub fn magnitude_into(&mut self, window: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_out(out)?;
        self.run(window)?;
        for (o, c) in out.iter_mut().zip(&self.scratch) {
            *o = c.re.abs();
        }
        Ok(())
    }

    /// Correlation envelope per delay cell, written into `out`.
    pub fn envelope_into(&mut self, window: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_out(out)?;
        self.run(window)?;
        for (o, c) in out.iter_mut().zip(&self.scratch) {
            *o = c.norm();
        }
        Ok(())
    }

    pub fn envelope(&mut self, window: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.envelope_into(window, &mut out)?;
        Ok(out)
    }

    fn check_out(&self, out: &[f64]) -> Result<()> {
        if out.len() != self.n {
            return Err(Error::Shape(format!(
                "output length {} != window length {}",
                out.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn magnitude(&mut self, window: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.magnitude_into(window, &mut out)?;
        Ok(out)
    }

    fn run(&mut self, window: &[f64]) -> Result<()> {
        if window.len() != self.n {
            return Err(Error::Shape(format!(
                "window length {} != template length {}",
                window.len(),
                self.n
            )));
        }
        for (s, &x) in self.scratch.iter_mut().zip(window) {
            *s = Complex64::new(x, 0.0);
        }
        self.fwd.process_with_scratch(&mut self.scratch, &mut self.fft_scratch);
        for (s, t) in self.scratch.iter_mut().zip(&self.template_conj) {
            *s *= t;
        }
        self.inv.process_with_scratch(&mut self.scratch, &mut self.fft_scratch);
        Ok(())
    }
}

/// Per-channel echo magnitude by delay cell for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile {
    pub channels: usize,
    pub cells: usize,
    /// Channel-major, `channels * cells` values.
    pub magnitudes: Vec<f64>,
    pub window_index: usize,
    pub cell_size_m: f64,
    /// Recording sample at which cell 0 of each channel was framed.
    pub origin_samples: Vec<usize>,
}

impl RangeProfile {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.magnitudes[c * self.cells..(c + 1) * self.cells]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.magnitudes[c * self.cells..(c + 1) * self.cells]
    }

    /// Cell of the largest magnitude in channel `c`.
    pub fn argmax(&self, c: usize) -> usize {
        argmax(self.channel(c))
    }

    pub fn energy(&self) -> f64 {
        self.magnitudes.iter().map(|v| v * v).sum()
    }

    fn check_same_shape(&self, other: &RangeProfile) -> Result<()> {
        if self.channels != other.channels || self.cells != other.cells {
            return Err(Error::Shape(format!(
                "profiles {}x{} and {}x{} differ",
                self.channels, self.cells, other.channels, other.cells
            )));
        }
        Ok(())
    }
}

pub(crate) fn argmax(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            },
        )
        .0
}

/// Profiles of the windows starting at sample 0, one per full window.
pub fn dechirp(recording: &Recording, spec: &ChirpSpec) -> Result<Vec<RangeProfile>> {
    let n = spec.chirp_len_samples;
    if recording.len() < 2 * n {
        return Err(Error::Input(format!(
            "recording of {} samples is shorter than two chirps ({})",
            recording.len(),
            2 * n
        )));
    }
    let origins = vec![0; recording.num_channels()];
    dechirp_from(recording, spec, &origins, recording.len() / n)
}

/// Profiles of `count` consecutive windows, channel `c` framed from
/// `origins[c]`. Stops early when a channel runs out of samples.
pub fn dechirp_from(
    recording: &Recording,
    spec: &ChirpSpec,
    origins: &[usize],
    count: usize,
) -> Result<Vec<RangeProfile>> {
    spec.validate()?;
    if origins.len() != recording.num_channels() {
        return Err(Error::Shape(format!(
            "{} frame origins for {} channels",
            origins.len(),
            recording.num_channels()
        )));
    }
    let n = spec.chirp_len_samples;
    let mut corr = Correlator::weighted(spec)?;
    let available = origins
        .iter()
        .map(|&o| recording.len().saturating_sub(o) / n)
        .min()
        .unwrap_or(0);
    let count = count.min(available);
    let channels = recording.num_channels();
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let mut magnitudes = vec![0.0; channels * n];
        for (c, &origin) in origins.iter().enumerate() {
            let start = origin + w * n;
            corr.magnitude_into(
                &recording.channels[c][start..start + n],
                &mut magnitudes[c * n..(c + 1) * n],
            )?;
        }
        out.push(RangeProfile {
            channels,
            cells: n,
            magnitudes,
            window_index: w,
            cell_size_m: spec.cell_size_m(),
            origin_samples: origins.iter().map(|o| o + w * n).collect(),
        });
    }
    Ok(out)
}

/// Direct-path anchor of every channel, found once per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorInfo {
    /// Direct-path cell within the profiles the anchor was measured on.
    pub anchor_cell: Vec<usize>,
    /// Recording sample of a direct-path arrival. After
    /// [`AnchorInfo::resolve_onsets`] this is the first arrival.
    pub anchor_sample: Vec<usize>,
    pub established_at_window: usize,
}

/// Local maxima (greater than the left neighbour, not less than the right,
/// circularly) sorted by decreasing magnitude.
fn peaks(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut p: Vec<usize> = (0..n)
        .filter(|&k| {
            let l = x[(k + n - 1) % n];
            let r = x[(k + 1) % n];
            x[k] > l && x[k] >= r
        })
        .collect();
    p.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    p
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Pick the direct path in each channel of the averaged `profiles`.
///
/// Local maxima inside the main lobe of a stronger one are dropped. Among
/// the ten largest remaining peaks, those within 6 dB of the strongest are
/// candidates; the one arriving earliest (smallest delay in the half window
/// leading up to the strongest peak) is the direct path.
pub fn find_anchor(profiles: &[RangeProfile]) -> Result<AnchorInfo> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Input("anchor search needs at least one profile".into()))?;
    let (channels, n) = (first.channels, first.cells);
    for p in profiles {
        first.check_same_shape(p)?;
    }
    let mut anchor_cell = Vec::with_capacity(channels);
    let mut anchor_sample = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut avg = vec![0.0; n];
        for p in profiles {
            for (a, v) in avg.iter_mut().zip(p.channel(c)) {
                *a += v;
            }
        }
        for a in &mut avg {
            *a /= profiles.len() as f64;
        }
        let mut top: Vec<usize> = Vec::with_capacity(ANCHOR_TOP_PEAKS);
        for k in peaks(&avg) {
            let near = |j: &usize| {
                let d = k.abs_diff(*j);
                d.min(n - d) < ANCHOR_SUPPRESS_CELLS
            };
            if !top.iter().any(near) {
                top.push(k);
                if top.len() == ANCHOR_TOP_PEAKS {
                    break;
                }
            }
        }
        let floor = median(&avg);
        let strongest = match top.first() {
            Some(&k) if avg[k] > ANCHOR_MIN_PEAK_TO_MEDIAN * floor && avg[k] > 0.0 => k,
            _ => {
                return Err(Error::Anchor {
                    channel: c,
                    reason: "no peak above the noise floor".into(),
                })
            }
        };
        let lead = |k: usize| (k + n + n / 2 - strongest) % n;
        let cell = top
            .iter()
            .copied()
            .filter(|&k| avg[k] >= ANCHOR_STRONG_FRACTION * avg[strongest])
            .min_by_key(|&k| lead(k))
            .unwrap_or(strongest);
        anchor_cell.push(cell);
        anchor_sample.push(first.origin_samples[c] + cell);
    }
    Ok(AnchorInfo {
        anchor_cell,
        anchor_sample,
        established_at_window: first.window_index,
    })
}

impl AnchorInfo {
    /// Move each channel's anchor by whole chirp periods to the arrival
    /// closest to the detected signal onset.
    pub fn resolve_onsets(&mut self, onsets: &[usize], chirp_len: usize) -> Result<()> {
        if onsets.len() != self.anchor_sample.len() {
            return Err(Error::Shape(format!(
                "{} onsets for {} channels",
                onsets.len(),
                self.anchor_sample.len()
            )));
        }
        let n = chirp_len as i64;
        for (a, &onset) in self.anchor_sample.iter_mut().zip(onsets) {
            let diff = *a as i64 - onset as i64;
            let periods = (diff as f64 / n as f64).round() as i64;
            let resolved = *a as i64 - periods * n;
            *a = if resolved < 0 { resolved + n } else { resolved } as usize;
        }
        Ok(())
    }
}

/// First sample whose magnitude reaches a quarter of the peak of `search`
/// leading samples.
pub fn locate_onset(samples: &[f64], search: usize) -> Option<usize> {
    let span = &samples[..search.min(samples.len())];
    let peak = span.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 0.0 {
        return None;
    }
    span.iter().position(|v| v.abs() >= ONSET_FRACTION * peak)
}

/// Result of cutting a profile at the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct CutProfile {
    pub profile: RangeProfile,
    /// True when the window ran past the buffer and was zero-filled.
    pub padded: bool,
}

/// Keep the [`CUT_CELLS`] cells starting at each channel's direct path.
pub fn cut_window(profile: &RangeProfile, anchor: &AnchorInfo) -> Result<CutProfile> {
    if anchor.anchor_sample.len() != profile.channels {
        return Err(Error::Shape(format!(
            "anchor has {} channels, profile {}",
            anchor.anchor_sample.len(),
            profile.channels
        )));
    }
    let n = profile.cells as i64;
    let mut magnitudes = vec![0.0; profile.channels * CUT_CELLS];
    let mut padded = false;
    for c in 0..profile.channels {
        let offset = (anchor.anchor_sample[c] as i64 - profile.origin_samples[c] as i64).rem_euclid(n) as usize;
        let src = profile.channel(c);
        let take = CUT_CELLS.min(profile.cells - offset);
        padded |= take < CUT_CELLS;
        magnitudes[c * CUT_CELLS..c * CUT_CELLS + take].copy_from_slice(&src[offset..offset + take]);
    }
    Ok(CutProfile {
        profile: RangeProfile {
            channels: profile.channels,
            cells: CUT_CELLS,
            magnitudes,
            window_index: profile.window_index,
            cell_size_m: profile.cell_size_m,
            origin_samples: anchor.anchor_sample.clone(),
        },
        padded,
    })
}

/// Rectified difference `max(curr - prev, 0)` of consecutive windows.
pub fn successive_subtract(curr: &RangeProfile, prev: &RangeProfile) -> Result<RangeProfile> {
    curr.check_same_shape(prev)?;
    if curr.window_index != prev.window_index + 1 {
        return Err(Error::Input(format!(
            "windows {} and {} are not consecutive",
            prev.window_index, curr.window_index
        )));
    }
    let magnitudes = curr
        .magnitudes
        .iter()
        .zip(&prev.magnitudes)
        .map(|(a, b)| (a - b).max(0.0))
        .collect();
    Ok(RangeProfile {
        magnitudes,
        ..curr.clone()
    })
}

/// Settings of the end-to-end preprocessing chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Pass-band edge of the receive high-pass filter.
    pub highpass_cutoff_hz: f64,
    /// Windows averaged for the anchor search.
    pub anchor_windows: usize,
    /// Whole windows skipped after the first direct-path arrival before
    /// profiles are emitted.
    pub warmup_windows: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            highpass_cutoff_hz: 17_000.0,
            anchor_windows: 5,
            warmup_windows: 1,
        }
    }
}

/// Cut and subtracted profile streams of one recording.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub anchor: AnchorInfo,
    /// Anchor-aligned 256-cell profiles.
    pub cut: Vec<RangeProfile>,
    /// `subtracted[i]` = rectified `cut[i + 1] - cut[i]`.
    pub subtracted: Vec<RangeProfile>,
    /// Recording-clock end time of each `cut` window (channel 0), µs.
    pub cut_end_us: Vec<i64>,
}

impl Preprocessed {
    /// End time of subtracted profile `i`.
    pub fn subtracted_end_us(&self, i: usize) -> i64 {
        self.cut_end_us[i + 1]
    }
}

/// High-pass, anchor, frame at the anchor, cut and subtract.
pub fn preprocess(recording: &Recording, spec: &ChirpSpec, config: &PreprocessConfig) -> Result<Preprocessed> {
    spec.validate()?;
    let n = spec.chirp_len_samples;
    let fs = f64::from(spec.sample_rate_hz);
    let filter = FirFilter::highpass(config.highpass_cutoff_hz, spec.sample_rate_hz)?;
    let filtered = Recording {
        channels: recording.channels.iter().map(|c| filter.apply_zero_phase(c)).collect(),
        sample_rate_hz: recording.sample_rate_hz,
    };
    // The start offset is under four chirps; look a little further.
    let search = 6 * n;
    let mut onsets = Vec::with_capacity(filtered.num_channels());
    for (c, ch) in filtered.channels.iter().enumerate() {
        onsets.push(locate_onset(ch, search).ok_or_else(|| Error::Anchor {
            channel: c,
            reason: "channel is silent".into(),
        })?);
    }
    let first_steady = onsets.iter().max().copied().unwrap_or(0) / n + 2;
    let raw = dechirp_from(
        &filtered,
        spec,
        &vec![first_steady * n; filtered.num_channels()],
        config.anchor_windows.max(1),
    )?;
    if raw.len() < config.anchor_windows.max(1) {
        return Err(Error::Input(format!(
            "recording too short for {} anchor windows",
            config.anchor_windows
        )));
    }
    let mut anchor = find_anchor(&raw)?;
    anchor.established_at_window = first_steady;
    anchor.resolve_onsets(&onsets, n)?;
    let origins: Vec<usize> = anchor
        .anchor_sample
        .iter()
        .map(|a| a + config.warmup_windows * n)
        .collect();
    // Drop windows touched by the filter's end transient.
    let usable = filtered.len().saturating_sub(2 * filter.len());
    let count = origins.iter().map(|&o| usable.saturating_sub(o) / n).min().unwrap_or(0);
    if count < 2 {
        return Err(Error::Input("recording too short after anchoring".into()));
    }
    let framed = dechirp_from(&filtered, spec, &origins, count)?;
    let mut cut = Vec::with_capacity(framed.len());
    let mut cut_end_us = Vec::with_capacity(framed.len());
    for p in &framed {
        let c = cut_window(p, &anchor)?;
        debug_assert!(!c.padded);
        let mut profile = c.profile;
        profile.origin_samples = p.origin_samples.clone();
        cut_end_us.push(((p.origin_samples[0] + n) as f64 / fs * 1e6).round() as i64);
        cut.push(profile);
    }
    let subtracted = cut
        .windows(2)
        .map(|w| successive_subtract(&w[1], &w[0]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Preprocessed {
        anchor,
        cut,
        subtracted,
        cut_end_us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_xcorr(w: &[f64], t: &[f64]) -> Vec<f64> {
        let n = w.len();
        (0..n).map(|k| (0..n).map(|i| w[(i + k) % n] * t[i]).sum()).collect()
    }

    fn chirp() -> Vec<f64> {
        generate_chirp(&ChirpSpec::default()).unwrap().samples
    }

    #[test]
    fn circular_delay_peaks_at_lag() {
        let t = chirp();
        let n = t.len();
        let w: Vec<f64> = (0..n).map(|i| t[(i + n - 100) % n]).collect();
        let r = xcorr_fd(&w, &t).unwrap();
        assert_eq!(argmax(&r), 100);
        let auto = xcorr_fd(&t, &t).unwrap();
        assert_eq!(argmax(&auto), 0);
        let oracle = brute_xcorr(&w, &t);
        let peak = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in r.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * peak);
        }
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        assert!(matches!(xcorr_fd(&[1.0, 2.0], &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn unit_echo_peaks_at_its_amplitude() {
        let t = chirp();
        let mut c = Correlator::new(&t).unwrap();
        let n = t.len();
        let w: Vec<f64> = (0..n).map(|i| -0.3 * t[(i + n - 40) % n]).collect();
        let m = c.magnitude(&w).unwrap();
        assert_eq!(argmax(&m), 40);
        assert!((m[40] - 0.3).abs() < 1e-12, "{}", m[40]);
        let e = c.envelope(&w).unwrap();
        assert_eq!(argmax(&e), 40);
        assert!(e.iter().zip(&m).all(|(e, m)| e + 1e-12 >= *m));
    }

    #[test]
    fn magnitude_is_abs_of_plain_correlation() {
        let t = chirp();
        let mut c = Correlator::new(&t).unwrap();
        let w: Vec<f64> = (0..t.len())
            .map(|i| (i as f64 * 0.37).sin() + t[(i * 7) % t.len()])
            .collect();
        let energy: f64 = t.iter().map(|v| v * v).sum();
        let want: Vec<f64> = brute_xcorr(&w, &t).iter().map(|v| v.abs() / energy).collect();
        let got = c.magnitude(&w).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_sidelobes_are_6db_down() {
        let t = chirp();
        let mut c = Correlator::new(&t).unwrap();
        let m = c.envelope(&t).unwrap();
        let p = peaks(&m);
        assert_eq!(p[0], 0);
        assert!(m[p[1]] <= 0.5 * m[0], "second peak {} vs {}", m[p[1]], m[0]);
    }

    #[test]
    fn subtraction_of_identical_is_zero_and_rectified() {
        let p = RangeProfile {
            channels: 1,
            cells: 4,
            magnitudes: vec![1.0, 2.0, 3.0, 4.0],
            window_index: 0,
            cell_size_m: 0.00357,
            origin_samples: vec![0],
        };
        let mut q = p.clone();
        q.window_index = 1;
        let d = successive_subtract(&q, &p).unwrap();
        assert!(d.magnitudes.iter().all(|&v| v == 0.0));
        q.magnitudes = vec![0.0, 5.0, 1.0, 4.5];
        let d = successive_subtract(&q, &p).unwrap();
        assert_eq!(d.magnitudes, vec![0.0, 3.0, 0.0, 0.5]);
        let mut r = q.clone();
        r.window_index = 5;
        assert!(successive_subtract(&r, &p).is_err());
        let mut s = q.clone();
        s.cells = 3;
        s.magnitudes.pop();
        assert!(matches!(successive_subtract(&s, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn cut_near_edge_is_padded() {
        let p = RangeProfile {
            channels: 1,
            cells: 512,
            magnitudes: (0..512).map(|v| v as f64).collect(),
            window_index: 3,
            cell_size_m: 0.00357,
            origin_samples: vec![1024],
        };
        let anchor = AnchorInfo {
            anchor_cell: vec![400],
            anchor_sample: vec![1024 + 400],
            established_at_window: 0,
        };
        let c = cut_window(&p, &anchor).unwrap();
        assert!(c.padded);
        assert_eq!(c.profile.channel(0)[0], 400.0);
        assert_eq!(c.profile.channel(0)[111], 511.0);
        assert_eq!(c.profile.channel(0)[112], 0.0);
        let anchor = AnchorInfo {
            anchor_cell: vec![10],
            anchor_sample: vec![10],
            established_at_window: 0,
        };
        let c = cut_window(&p, &anchor).unwrap();
        assert!(!c.padded);
        assert_eq!(c.profile.channel(0)[255], 265.0);
    }

    #[test]
    fn silent_channel_fails_anchor() {
        let p = RangeProfile {
            channels: 2,
            cells: 64,
            magnitudes: (0..128)
                .map(|i| {
                    if i == 5 {
                        10.0
                    } else if i < 64 {
                        0.01
                    } else {
                        0.0
                    }
                })
                .collect(),
            window_index: 0,
            cell_size_m: 0.00357,
            origin_samples: vec![0, 0],
        };
        match find_anchor(&[p]) {
            Err(Error::Anchor { channel, .. }) => assert_eq!(channel, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_short_recording_rejected() {
        let rec = Recording {
            channels: vec![vec![0.0; 600]; 7],
            sample_rate_hz: 48_000,
        };
        assert!(matches!(dechirp(&rec, &ChirpSpec::default()), Err(Error::Input(_))));
    }
}
