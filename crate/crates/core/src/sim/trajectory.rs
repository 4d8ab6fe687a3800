//! Scripted finger-motion trajectories for the curriculum stages.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::sim::hand::HandKinematicParams;

/// Ground-truth trajectory sampling rate.
pub const TRAJECTORY_RATE_HZ: f64 = 100.0;

/// Curriculum stage: `Fingers(n)` moves groups of `n` neighbouring fingers,
/// `Mixed` cycles through the full gesture set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureKind {
    Fingers(u8),
    Mixed,
}

impl GestureKind {
    pub const ALL: [GestureKind; 6] = [
        GestureKind::Fingers(1),
        GestureKind::Fingers(2),
        GestureKind::Fingers(3),
        GestureKind::Fingers(4),
        GestureKind::Fingers(5),
        GestureKind::Mixed,
    ];

    /// Position in the curriculum, 0 = easiest.
    pub fn rank(self) -> usize {
        match self {
            GestureKind::Fingers(n) => n as usize - 1,
            GestureKind::Mixed => 5,
        }
    }

    /// Consecutive finger groups flexed in this stage.
    pub fn finger_groups(self) -> Vec<Vec<usize>> {
        match self {
            GestureKind::Fingers(n) => {
                let n = n as usize;
                (0..=5 - n).map(|s| (s..s + n).collect()).collect()
            }
            GestureKind::Mixed => Vec::new(),
        }
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GestureKind::Fingers(n) => write!(f, "{n}-finger"),
            GestureKind::Mixed => write!(f, "mixed"),
        }
    }
}

impl FromStr for GestureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(GestureKind::Mixed),
            _ => s
                .strip_suffix("-finger")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| (1..=5).contains(n))
                .map(GestureKind::Fingers)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown gesture kind '{s}' (expected 1-finger..5-finger or mixed)"
                    ))
                }),
        }
    }
}

impl Serialize for GestureKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GestureKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Flexion targets (thumb..pinky) of the 15 poses cycled by the mixed stage.
pub const MIXED_POSES: [[f64; 5]; 15] = [
    [0.0, 0.0, 0.0, 0.0, 0.0], // open
    [1.0, 1.0, 1.0, 1.0, 1.0], // fist
    [1.0, 0.0, 1.0, 1.0, 1.0], // point
    [1.0, 0.0, 0.0, 1.0, 1.0], // victory
    [1.0, 0.0, 0.0, 0.0, 1.0], // three
    [1.0, 0.0, 0.0, 0.0, 0.0], // four
    [0.0, 1.0, 1.0, 1.0, 1.0], // thumb up
    [1.0, 1.0, 1.0, 1.0, 0.0], // pinky up
    [0.7, 0.8, 0.0, 0.0, 0.0], // ok
    [0.5, 0.6, 0.6, 0.6, 0.6], // claw
    [0.7, 0.8, 1.0, 1.0, 1.0], // pinch
    [0.5, 0.5, 0.5, 0.5, 0.5], // half curl
    [0.0, 0.0, 0.0, 1.0, 1.0], // ring and pinky down
    [1.0, 1.0, 1.0, 0.0, 0.0], // ring and pinky up
    [0.0, 1.0, 1.0, 0.0, 0.0], // index and middle down
];

/// The activation ("I love you") hand shape: thumb, index and pinky
/// extended, middle and ring folded.
pub const ACTIVATION_FLEXION: [f64; 5] = [0.0, 0.0, 1.0, 1.0, 0.0];

/// Kinematic parameters sampled at [`TRAJECTORY_RATE_HZ`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: GestureKind,
    pub frames: Vec<HandKinematicParams>,
}

impl Trajectory {
    pub fn duration_s(&self) -> f64 {
        (self.frames.len().saturating_sub(1)) as f64 / TRAJECTORY_RATE_HZ
    }

    pub fn timestamp_s(&self, frame: usize) -> f64 {
        frame as f64 / TRAJECTORY_RATE_HZ
    }

    /// Linear interpolation between frames, clamped to the ends.
    pub fn sample(&self, t_s: f64) -> HandKinematicParams {
        let pos = (t_s * TRAJECTORY_RATE_HZ).max(0.0);
        let i = pos.floor() as usize;
        if i + 1 >= self.frames.len() {
            return *self.frames.last().expect("trajectory has frames");
        }
        self.frames[i].lerp(&self.frames[i + 1], pos - i as f64)
    }
}

/// Where and how the hand is held during a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandPlacement {
    pub wrist_pos: Vec3,
    pub palm_rotation_deg: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Amplitude of the slow wrist wander, metres.
    pub wander_m: f64,
}

impl HandPlacement {
    /// Random placement inside the comfortable desk region in front of the
    /// device.
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            wrist_pos: Vec3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(0.13..0.22),
                rng.gen_range(-0.13..-0.09),
            ),
            palm_rotation_deg: rng.gen_range(-15.0..15.0),
            azimuth_deg: rng.gen_range(-20.0..20.0),
            elevation_deg: rng.gen_range(-10.0..10.0),
            wander_m: 0.004,
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Finger-flexion schedule plus a slow wrist wander, sampled at 100 Hz.
///
/// `n`-finger stages cycle through the consecutive groups of `n` fingers;
/// each segment flexes its group one to two times with a raised-cosine
/// profile. The mixed stage cycles through [`MIXED_POSES`] with holds and
/// smooth transitions.
pub fn gesture_trajectory(kind: GestureKind, duration_s: f64, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placement = HandPlacement::random(&mut rng);
    gesture_trajectory_at(kind, duration_s, &placement, &mut rng)
}

/// As [`gesture_trajectory`] with an explicit hand placement.
pub fn gesture_trajectory_at(
    kind: GestureKind,
    duration_s: f64,
    placement: &HandPlacement,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if let GestureKind::Fingers(n) = kind {
        if !(1..=5).contains(&n) {
            return Err(Error::Config(format!("unknown gesture kind {n}-finger")));
        }
    }
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Config(format!("duration {duration_s} s must be positive")));
    }
    let n_frames = (duration_s * TRAJECTORY_RATE_HZ).round() as usize + 1;
    let flexion = match kind {
        GestureKind::Fingers(_) => stage_flexion(kind, n_frames, rng),
        GestureKind::Mixed => mixed_flexion(&MIXED_POSES, n_frames, rng),
    };
    let phase: [f64; 3] = [
        rng.gen_range(0.0..6.3),
        rng.gen_range(0.0..6.3),
        rng.gen_range(0.0..6.3),
    ];
    let frames = flexion
        .into_iter()
        .enumerate()
        .map(|(i, flex)| {
            let t = i as f64 / TRAJECTORY_RATE_HZ;
            let w = |k: usize, f: f64| placement.wander_m * (2.0 * std::f64::consts::PI * f * t + phase[k]).sin();
            HandKinematicParams {
                wrist_pos: placement.wrist_pos + Vec3::new(w(0, 0.13), w(1, 0.21), w(2, 0.17)),
                palm_rotation_deg: placement.palm_rotation_deg,
                azimuth_deg: placement.azimuth_deg,
                elevation_deg: placement.elevation_deg,
                flexion: flex,
            }
        })
        .collect();
    Ok(Trajectory { kind, frames })
}

fn stage_flexion(kind: GestureKind, n_frames: usize, rng: &mut impl Rng) -> Vec<[f64; 5]> {
    let groups = kind.finger_groups();
    let mut out = Vec::with_capacity(n_frames);
    let mut g = rng.gen_range(0..groups.len());
    while out.len() < n_frames {
        let seg_len = (rng.gen_range(1.0..2.0) * TRAJECTORY_RATE_HZ) as usize;
        let cycles = rng.gen_range(1..=2) as f64;
        let amp = rng.gen_range(0.5..1.0);
        for i in 0..seg_len {
            let s = (std::f64::consts::PI * cycles * i as f64 / seg_len as f64).sin();
            let mut f = [0.0; 5];
            for &finger in &groups[g] {
                f[finger] = amp * s * s;
            }
            out.push(f);
        }
        g = (g + 1) % groups.len();
    }
    out.truncate(n_frames);
    out
}

/// Hold-and-move schedule through a list of flexion targets.
pub fn mixed_flexion(poses: &[[f64; 5]], n_frames: usize, rng: &mut impl Rng) -> Vec<[f64; 5]> {
    let mut out = Vec::with_capacity(n_frames);
    let mut prev = poses[0];
    let mut p = 0;
    while out.len() < n_frames {
        let target = poses[p];
        let move_len = (rng.gen_range(0.3..0.5) * TRAJECTORY_RATE_HZ) as usize;
        let hold_len = (rng.gen_range(0.6..1.2) * TRAJECTORY_RATE_HZ) as usize;
        for i in 0..move_len {
            let t = smoothstep((i + 1) as f64 / move_len as f64);
            let mut f = [0.0; 5];
            for k in 0..5 {
                f[k] = prev[k] + (target[k] - prev[k]) * t;
            }
            out.push(f);
        }
        out.extend(std::iter::repeat(target).take(hold_len));
        prev = target;
        p = (p + 1) % poses.len();
    }
    out.truncate(n_frames);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moving_fingers(a: &[f64; 5], b: &[f64; 5]) -> Vec<usize> {
        (0..5).filter(|&k| a[k] != b[k]).collect()
    }

    #[test]
    fn one_finger_stage_moves_at_most_one_finger() {
        let traj = gesture_trajectory(GestureKind::Fingers(1), 30.0, 3).unwrap();
        for w in traj.frames.windows(2) {
            assert!(moving_fingers(&w[0].flexion, &w[1].flexion).len() <= 1);
        }
    }

    #[test]
    fn two_finger_stage_moves_neighbour_pairs() {
        let allowed = [vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4]];
        let traj = gesture_trajectory(GestureKind::Fingers(2), 40.0, 11).unwrap();
        let mut seen = std::collections::HashSet::new();
        for w in traj.frames.windows(2) {
            let moving = moving_fingers(&w[0].flexion, &w[1].flexion);
            if moving.len() == 2 {
                assert!(allowed.contains(&moving), "{moving:?}");
                seen.insert(moving);
            } else {
                assert!(moving.is_empty(), "{moving:?}");
            }
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn finger_groups_are_consecutive() {
        assert_eq!(GestureKind::Fingers(3).finger_groups().len(), 3);
        assert_eq!(GestureKind::Fingers(5).finger_groups(), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let a = gesture_trajectory(GestureKind::Mixed, 10.0, 5).unwrap();
        let b = gesture_trajectory(GestureKind::Mixed, 10.0, 5).unwrap();
        assert_eq!(a, b);
        let c = gesture_trajectory(GestureKind::Mixed, 10.0, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mixed_stage_visits_every_pose() {
        let traj = gesture_trajectory(GestureKind::Mixed, 40.0, 1).unwrap();
        for pose in MIXED_POSES {
            assert!(traj.frames.iter().any(|f| f.flexion == pose), "{pose:?}");
        }
    }

    #[test]
    fn frames_are_valid_and_rate_is_100hz() {
        let traj = gesture_trajectory(GestureKind::Fingers(4), 2.0, 2).unwrap();
        assert_eq!(traj.frames.len(), 201);
        assert!(traj.frames.iter().all(|f| f.validate().is_ok()));
        assert!((traj.duration_s() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kind_parsing() {
        for k in GestureKind::ALL {
            assert_eq!(k.to_string().parse::<GestureKind>().unwrap(), k);
        }
        assert!("6-finger".parse::<GestureKind>().is_err());
        assert!("wave".parse::<GestureKind>().is_err());
    }
}
