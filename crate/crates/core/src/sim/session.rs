//! Glue from a gesture trajectory to a recorded session: renders the audio
//! and emits the timestamped ground-truth stream a depth camera would give.

use serde::{Deserialize, Serialize};

use crate::chirp::{generate_chirp, repeat_chirps, ChirpSpec, Recording};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::sim::hand::{hand_pose_from_params, HandModel};
use crate::sim::scene::{hand_to_scatterers, propagate, Scatterer, Scene};
use crate::sim::trajectory::{Trajectory, TRAJECTORY_RATE_HZ};
use crate::skeleton::HandPose;

/// Default echo strength of a single joint.
pub const DEFAULT_JOINT_REFLECTIVITY: f64 = 0.02;

/// A pose with its capture time on the recording clock.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPose {
    pub timestamp_us: i64,
    pub pose: HandPose,
}

/// A second moving object (for example another person's hand) travelling in
/// a straight line during the session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interferer {
    /// Position at time zero, metres.
    pub start: Vec3,
    pub velocity_mps: Vec3,
    pub reflectivity: f64,
}

impl Interferer {
    pub fn at(&self, t_s: f64) -> Scatterer {
        Scatterer::new(self.start + self.velocity_mps * t_s, self.reflectivity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub joint_reflectivity: f64,
    pub interferer: Option<Interferer>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            joint_reflectivity: DEFAULT_JOINT_REFLECTIVITY,
            interferer: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub recording: Recording,
    pub ground_truth: Vec<TimedPose>,
}

/// Render `trajectory` in `scene` (its `moving_scatterers` are replaced by
/// the hand joints).
///
/// Time zero is the first recorded sample. The speaker starts
/// `start_offset_samples` later, so chirp window `w` is heard while the hand
/// is at the trajectory pose for the window's midpoint on that clock.
/// Ground truth is reported at the trajectory's 100 Hz rate.
pub fn simulate_session(
    spec: &ChirpSpec,
    scene: &Scene,
    trajectory: &Trajectory,
    model: &HandModel,
    options: &RenderOptions,
) -> Result<SimulatedSession> {
    let fs = f64::from(spec.sample_rate_hz);
    let n = spec.chirp_len_samples;
    let offset = scene.start_offset_samples;
    let duration = trajectory.duration_s();
    let chirps = ((duration * fs - offset as f64) / n as f64).floor() as usize;
    if chirps < 2 {
        return Err(Error::Config(format!(
            "trajectory of {duration} s is too short to render"
        )));
    }
    let mut moving = Vec::with_capacity(chirps);
    for w in 0..chirps {
        let t = (offset as f64 + (w as f64 + 0.5) * n as f64) / fs;
        let pose = hand_pose_from_params(&trajectory.sample(t), model)?;
        let mut set = hand_to_scatterers(&pose, options.joint_reflectivity);
        set.extend(options.interferer.map(|i| i.at(t)));
        moving.push(set);
    }
    let scene = Scene {
        moving_scatterers: moving,
        ..scene.clone()
    };
    let tx = repeat_chirps(&generate_chirp(spec)?, chirps)?;
    let recording = propagate(&scene, &tx, spec)?;
    let ground_truth = trajectory
        .frames
        .iter()
        .enumerate()
        .map(|(i, params)| {
            Ok(TimedPose {
                timestamp_us: (i as f64 * 1e6 / TRAJECTORY_RATE_HZ).round() as i64,
                pose: hand_pose_from_params(params, model)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedSession {
        recording,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trajectory::{gesture_trajectory, GestureKind};

    #[test]
    fn session_length_matches_duration() {
        let spec = ChirpSpec::default();
        let traj = gesture_trajectory(GestureKind::Fingers(1), 1.0, 0).unwrap();
        let s = simulate_session(
            &spec,
            &Scene::default(),
            &traj,
            &HandModel::default(),
            &RenderOptions::default(),
        )
        .unwrap();
        assert_eq!(s.recording.len(), 93 * 512);
        assert_eq!(s.ground_truth.len(), 101);
        assert_eq!(s.ground_truth[100].timestamp_us, 1_000_000);
    }
}
