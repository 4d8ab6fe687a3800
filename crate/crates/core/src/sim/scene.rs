//! Point-scatterer acoustic scene and multichannel echo rendering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chirp::{rms, ChirpSpec, FirFilter, Recording, SampleBuffer};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::skeleton::HandPose;

pub const NUM_MICS: usize = 7;

/// Radius of the microphone ring (UMA-8-like layout).
pub const MIC_RING_RADIUS_M: f64 = 0.045;

/// Reflection coefficient of the table plane `z = 0`.
pub const SURFACE_REFLECTION: f64 = 0.5;

/// Path lengths are clamped to this for spreading loss, so a co-located
/// speaker and microphone stay finite.
pub const MIN_SPREADING_DISTANCE_M: f64 = 0.01;

/// Upper band edge of the audible interference model.
pub const AUDIBLE_NOISE_CUTOFF_HZ: f64 = 8_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicArrayGeometry {
    pub positions: Vec<Vec3>,
}

impl Default for MicArrayGeometry {
    /// Six microphones on a 45 mm circle plus one at the centre, lying in a
    /// horizontal plane 5 cm above the table.
    fn default() -> Self {
        let z = -0.05;
        let mut positions = vec![Vec3::new(0.0, 0.0, z)];
        for k in 0..6 {
            let a = std::f64::consts::PI / 3.0 * k as f64;
            positions.push(Vec3::new(MIC_RING_RADIUS_M * a.cos(), MIC_RING_RADIUS_M * a.sin(), z));
        }
        Self { positions }
    }
}

impl MicArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != NUM_MICS {
            return Err(Error::Config(format!(
                "microphone array needs {NUM_MICS} positions, got {}",
                self.positions.len()
            )));
        }
        for (i, a) in self.positions.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Config(format!("microphone {i} position not finite")));
            }
            for b in &self.positions[i + 1..] {
                if a.distance(*b) < 1e-9 {
                    return Err(Error::Config("microphone positions must be distinct".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Metres, device frame.
    pub position: Vec3,
    pub reflectivity: f64,
}

impl Scatterer {
    pub fn new(position: Vec3, reflectivity: f64) -> Self {
        Self { position, reflectivity }
    }

    fn validate(&self) -> Result<()> {
        if !self.position.is_finite() || !(self.reflectivity >= 0.0) {
            return Err(Error::Config(format!(
                "scatterer needs finite position and reflectivity >= 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// Image about the table plane, with the surface reflection loss applied.
    pub fn surface_image(&self) -> Scatterer {
        Scatterer::new(self.position.mirror_z(), self.reflectivity * SURFACE_REFLECTION)
    }
}

/// Everything the renderer needs to synthesize one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub speaker_pos: Vec3,
    pub mics: MicArrayGeometry,
    pub static_scatterers: Vec<Scatterer>,
    /// One scatterer set per chirp window of received audio.
    pub moving_scatterers: Vec<Vec<Scatterer>>,
    pub surface_plane_enabled: bool,
    /// White-noise SNR in dB against the transmit RMS at unit path gain.
    pub noise_snr_db: Option<f64>,
    /// Audible (< 8 kHz) interference level in dB relative to the transmit RMS.
    pub audible_noise_db: Option<f64>,
    /// Scales every ultrasonic path (direct and echoes).
    pub ultrasound_gain_db: f64,
    /// Leading silence modelling the speaker/microphone start skew.
    pub start_offset_samples: usize,
    pub noise_seed: u64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            speaker_pos: Vec3::new(0.0, 0.0, -0.02),
            mics: MicArrayGeometry::default(),
            static_scatterers: Vec::new(),
            moving_scatterers: Vec::new(),
            surface_plane_enabled: false,
            noise_snr_db: None,
            audible_noise_db: None,
            ultrasound_gain_db: 0.0,
            start_offset_samples: 0,
            noise_seed: 0,
        }
    }
}

/// One rendered propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub delay_samples: usize,
    pub amplitude: f64,
}

impl Scene {
    pub fn validate(&self, spec: &ChirpSpec) -> Result<()> {
        self.mics.validate()?;
        if !self.speaker_pos.is_finite() {
            return Err(Error::Config("speaker position must be finite".into()));
        }
        for s in self
            .static_scatterers
            .iter()
            .chain(self.moving_scatterers.iter().flatten())
        {
            s.validate()?;
        }
        if self.start_offset_samples >= 4 * spec.chirp_len_samples {
            return Err(Error::Config(format!(
                "start_offset_samples {} must be below 4 chirp lengths ({})",
                self.start_offset_samples,
                4 * spec.chirp_len_samples
            )));
        }
        if !self.ultrasound_gain_db.is_finite() {
            return Err(Error::Config("ultrasound_gain_db must be finite".into()));
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        10f64.powf(self.ultrasound_gain_db / 20.0)
    }

    /// Speaker-to-microphone path.
    pub fn direct_path(&self, mic: usize, spec: &ChirpSpec) -> Path {
        let d = self.speaker_pos.distance(self.mics.positions[mic]);
        Path {
            delay_samples: spec.delay_samples(d).round() as usize,
            amplitude: self.gain() / d.max(MIN_SPREADING_DISTANCE_M),
        }
    }

    /// Speaker-to-scatterer-to-microphone path.
    pub fn echo_path(&self, s: &Scatterer, mic: usize, spec: &ChirpSpec) -> Path {
        let d1 = self.speaker_pos.distance(s.position);
        let d2 = s.position.distance(self.mics.positions[mic]);
        Path {
            delay_samples: spec.delay_samples(d1 + d2).round() as usize,
            amplitude: self.gain() * s.reflectivity
                / (d1.max(MIN_SPREADING_DISTANCE_M) * d2.max(MIN_SPREADING_DISTANCE_M)),
        }
    }

    /// Echo paths of a scatterer set, with surface images when enabled.
    fn echo_paths(&self, set: &[Scatterer], mic: usize, spec: &ChirpSpec, out: &mut Vec<Path>) {
        for s in set {
            out.push(self.echo_path(s, mic, spec));
            if self.surface_plane_enabled {
                out.push(self.echo_path(&s.surface_image(), mic, spec));
            }
        }
    }
}

/// One scatterer per joint, millimetres converted to metres.
pub fn hand_to_scatterers(pose: &HandPose, reflectivity_per_joint: f64) -> Vec<Scatterer> {
    pose.joints
        .iter()
        .map(|j| Scatterer::new(*j / 1000.0, reflectivity_per_joint))
        .collect()
}

fn add_path(out: &mut [f64], tx: &[f64], path: Path, start: usize, end: usize) {
    // out[n] += a * tx[n - D] for n in [start, end), tx zero before time 0.
    let first = start.max(path.delay_samples);
    if first >= end {
        return;
    }
    let src = &tx[first - path.delay_samples..end - path.delay_samples];
    for (o, &x) in out[first..end].iter_mut().zip(src) {
        *o += path.amplitude * x;
    }
}

/// Render the 7-channel microphone recording of `tx` played in `scene`.
///
/// Received audio is processed in chirp-length windows; window `w` sees the
/// `w`-th entry of `moving_scatterers`. Each echo is the transmit signal
/// delayed to the nearest sample and scaled by reflectivity over the product
/// of the two leg lengths. Noise is added last, then the leading silence.
pub fn propagate(scene: &Scene, tx: &SampleBuffer, spec: &ChirpSpec) -> Result<Recording> {
    spec.validate()?;
    scene.validate(spec)?;
    if tx.sample_rate_hz != spec.sample_rate_hz {
        return Err(Error::Config(format!(
            "transmit buffer sample rate {} does not match chirp spec {}",
            tx.sample_rate_hz, spec.sample_rate_hz
        )));
    }
    let n_win = spec.chirp_len_samples;
    let len = tx.len();
    let windows = len.div_ceil(n_win);
    if !scene.moving_scatterers.is_empty() && scene.moving_scatterers.len() < windows {
        return Err(Error::Config(format!(
            "moving-scatterer trajectory covers {} windows but the transmit signal spans {}",
            scene.moving_scatterers.len(),
            windows
        )));
    }
    let mut channels = Vec::with_capacity(NUM_MICS);
    let mut paths = Vec::new();
    for mic in 0..NUM_MICS {
        let mut out = vec![0.0; len];
        let direct = scene.direct_path(mic, spec);
        let mut static_paths = vec![direct];
        scene.echo_paths(&scene.static_scatterers, mic, spec, &mut static_paths);
        for w in 0..windows {
            let (start, end) = (w * n_win, ((w + 1) * n_win).min(len));
            paths.clear();
            paths.extend_from_slice(&static_paths);
            if let Some(set) = scene.moving_scatterers.get(w) {
                scene.echo_paths(set, mic, spec, &mut paths);
            }
            for p in &paths {
                add_path(&mut out, &tx.samples, *p, start, end);
            }
        }
        add_noise(scene, tx, mic, &mut out)?;
        let mut rec = vec![0.0; scene.start_offset_samples];
        rec.extend_from_slice(&out);
        channels.push(rec);
    }
    Ok(Recording {
        channels,
        sample_rate_hz: spec.sample_rate_hz,
    })
}

fn add_noise(scene: &Scene, tx: &SampleBuffer, mic: usize, out: &mut [f64]) -> Result<()> {
    let reference = tx.rms();
    let seed = scene
        .noise_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(mic as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(snr) = scene.noise_snr_db {
        let sigma = reference * 10f64.powf(-snr / 20.0);
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    if let Some(level) = scene.audible_noise_db {
        let white: Vec<f64> = (0..out.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let lp = FirFilter::lowpass(AUDIBLE_NOISE_CUTOFF_HZ, tx.sample_rate_hz)?;
        let band = lp.apply_causal(&white);
        let scale = reference * 10f64.powf(level / 20.0) / rms(&band).max(1e-300);
        for (v, b) in out.iter_mut().zip(band) {
            *v += scale * b;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chirp::{generate_chirp, repeat_chirps};

    fn tx(spec: &ChirpSpec, chirps: usize) -> SampleBuffer {
        repeat_chirps(&generate_chirp(spec).unwrap(), chirps).unwrap()
    }

    #[test]
    fn empty_scene_is_direct_path_only() {
        let spec = ChirpSpec::default();
        let scene = Scene::default();
        let t = tx(&spec, 4);
        let rec = propagate(&scene, &t, &spec).unwrap();
        assert_eq!(rec.num_channels(), NUM_MICS);
        for mic in 0..NUM_MICS {
            let p = scene.direct_path(mic, &spec);
            for n in 0..t.len() {
                let want = if n >= p.delay_samples {
                    p.amplitude * t.samples[n - p.delay_samples]
                } else {
                    0.0
                };
                assert_eq!(rec.channels[mic][n], want);
            }
        }
    }

    #[test]
    fn colocated_echo_delay_is_two_way() {
        let spec = ChirpSpec::default();
        let mut scene = Scene::default();
        let mic = scene.mics.positions[0];
        scene.speaker_pos = mic;
        let d = 0.357;
        let s = Scatterer::new(mic + Vec3::new(0.0, d, 0.0), 1.0);
        let p = scene.echo_path(&s, 0, &spec);
        let want = (2.0 * d / 343.0 * 48_000.0).round() as usize;
        assert_eq!(p.delay_samples, want);
        assert_eq!(want, 100);
    }

    #[test]
    fn mirror_symmetric_mics_see_equal_delays() {
        let spec = ChirpSpec::default();
        let scene = Scene::default();
        // Mics 1 (+x) and 4 (-x) are mirror images about the y-z plane.
        let s = Scatterer::new(Vec3::new(0.0, 0.3, -0.1), 1.0);
        let a = scene.echo_path(&s, 1, &spec);
        let b = scene.echo_path(&s, 4, &spec);
        assert_eq!(a.delay_samples, b.delay_samples);
        assert!((a.amplitude - b.amplitude).abs() < 1e-12);
    }

    #[test]
    fn zero_reflectivity_contributes_nothing() {
        let spec = ChirpSpec::default();
        let t = tx(&spec, 3);
        let empty = propagate(&Scene::default(), &t, &spec).unwrap();
        let scene = Scene {
            static_scatterers: vec![Scatterer::new(Vec3::new(0.0, 0.2, -0.1), 0.0)],
            ..Scene::default()
        };
        assert_eq!(propagate(&scene, &t, &spec).unwrap(), empty);
    }

    #[test]
    fn start_offset_prepends_silence() {
        let spec = ChirpSpec::default();
        let t = tx(&spec, 3);
        let base = propagate(&Scene::default(), &t, &spec).unwrap();
        let scene = Scene {
            start_offset_samples: 700,
            ..Scene::default()
        };
        let shifted = propagate(&scene, &t, &spec).unwrap();
        for (a, b) in base.channels.iter().zip(&shifted.channels) {
            assert!(b[..700].iter().all(|&v| v == 0.0));
            assert_eq!(&b[700..], &a[..]);
        }
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let spec = ChirpSpec::default();
        let t = tx(&spec, 5);
        let scene = Scene {
            moving_scatterers: vec![vec![]; 3],
            ..Scene::default()
        };
        assert!(matches!(propagate(&scene, &t, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn offset_limit_enforced() {
        let spec = ChirpSpec::default();
        let scene = Scene {
            start_offset_samples: 2048,
            ..Scene::default()
        };
        assert!(scene.validate(&spec).is_err());
    }

    #[test]
    fn hand_scatterers_convert_units() {
        let mut coords = [0.0; 63];
        coords[0] = 100.0;
        coords[1] = 200.0;
        coords[2] = 50.0;
        let pose = HandPose::from_flat(&coords).unwrap();
        let s = hand_to_scatterers(&pose, 0.3);
        assert_eq!(s.len(), 21);
        assert_eq!(s[0].position, Vec3::new(0.1, 0.2, 0.05));
        assert!(s.iter().all(|x| x.reflectivity == 0.3));
    }

    #[test]
    fn noise_is_seeded() {
        let spec = ChirpSpec::default();
        let t = tx(&spec, 2);
        let scene = Scene {
            noise_snr_db: Some(10.0),
            audible_noise_db: Some(0.0),
            noise_seed: 9,
            ..Scene::default()
        };
        let a = propagate(&scene, &t, &spec).unwrap();
        let b = propagate(&scene, &t, &spec).unwrap();
        assert_eq!(a, b);
        let c = propagate(
            &Scene {
                noise_seed: 10,
                ..scene
            },
            &t,
            &spec,
        )
        .unwrap();
        assert_ne!(a, c);
    }
}
