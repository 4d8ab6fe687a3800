//! Forward kinematics for a canonical adult hand.
//!
//! The hand is built in a palm frame (x lateral, y along the fingers, z out
//! of the palm towards the table) and then rotated and translated into the
//! device frame. With zero rotation the palm frame coincides with the device
//! frame: the hand hovers palm-down with the fingers pointing away from the
//! device.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::skeleton::{Finger, HandPose, NUM_JOINTS, PALM, WRIST};

/// Limit on palm orientation angles, degrees.
pub const MAX_ORIENTATION_DEG: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandKinematicParams {
    /// Wrist position, metres, device frame.
    pub wrist_pos: Vec3,
    /// Roll about the finger axis, degrees.
    pub palm_rotation_deg: f64,
    /// Yaw about the vertical axis, degrees.
    pub azimuth_deg: f64,
    /// Pitch about the lateral axis, degrees.
    pub elevation_deg: f64,
    /// Flexion per finger (thumb, index, middle, ring, pinky), 0 = straight.
    pub flexion: [f64; 5],
}

impl Default for HandKinematicParams {
    fn default() -> Self {
        Self {
            wrist_pos: Vec3::new(0.0, 0.18, -0.11),
            palm_rotation_deg: 0.0,
            azimuth_deg: 0.0,
            elevation_deg: 0.0,
            flexion: [0.0; 5],
        }
    }
}

impl HandKinematicParams {
    pub fn validate(&self) -> Result<()> {
        if !self.wrist_pos.is_finite() {
            return Err(Error::Config("wrist position must be finite".into()));
        }
        for (name, a) in [
            ("palm_rotation_deg", self.palm_rotation_deg),
            ("azimuth_deg", self.azimuth_deg),
            ("elevation_deg", self.elevation_deg),
        ] {
            if !(a.abs() <= MAX_ORIENTATION_DEG) {
                return Err(Error::Config(format!(
                    "{name} = {a} outside [-{MAX_ORIENTATION_DEG}, {MAX_ORIENTATION_DEG}]"
                )));
            }
        }
        if let Some(f) = self.flexion.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("flexion {f} outside [0, 1]")));
        }
        Ok(())
    }

    /// Palm-frame to device-frame rotation.
    pub fn rotation(&self) -> Mat3 {
        Mat3::rot_z(self.azimuth_deg.to_radians())
            .mul_mat(&Mat3::rot_x(self.elevation_deg.to_radians()))
            .mul_mat(&Mat3::rot_y(self.palm_rotation_deg.to_radians()))
    }

    /// Component-wise linear blend, `t = 0` gives `self`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        let mut flexion = [0.0; 5];
        for (i, f) in flexion.iter_mut().enumerate() {
            *f = mix(self.flexion[i], other.flexion[i]);
        }
        Self {
            wrist_pos: self.wrist_pos + (other.wrist_pos - self.wrist_pos) * t,
            palm_rotation_deg: mix(self.palm_rotation_deg, other.palm_rotation_deg),
            azimuth_deg: mix(self.azimuth_deg, other.azimuth_deg),
            elevation_deg: mix(self.elevation_deg, other.elevation_deg),
            flexion,
        }
    }
}

/// Geometry of one finger in the palm frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FingerModel {
    /// Bone lengths in mm, root first.
    pub bones_mm: Vec<f64>,
    /// In-plane angle of the root bone from +y, degrees (positive towards +x).
    pub root_splay_deg: f64,
    /// In-plane angle of the straight phalanges from +y, degrees.
    pub splay_deg: f64,
    /// Joint bend at full flexion for each bone after the root, degrees.
    pub max_bend_deg: Vec<f64>,
}

/// Canonical bone lengths: average adult phalanx and metacarpal lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandModel {
    pub fingers: [FingerModel; 5],
}

impl Default for HandModel {
    fn default() -> Self {
        let finger = |bones: [f64; 4], root: f64, splay: f64| FingerModel {
            bones_mm: bones.to_vec(),
            root_splay_deg: root,
            splay_deg: splay,
            max_bend_deg: vec![80.0, 95.0, 65.0],
        };
        Self {
            fingers: [
                FingerModel {
                    bones_mm: vec![50.0, 32.0, 25.0],
                    root_splay_deg: -50.0,
                    splay_deg: -35.0,
                    max_bend_deg: vec![50.0, 70.0],
                },
                finger([68.0, 40.0, 23.0, 18.0], -22.0, -6.0),
                finger([64.0, 45.0, 27.0, 19.0], -6.0, 0.0),
                finger([58.0, 42.0, 26.0, 19.0], 10.0, 6.0),
                finger([53.0, 33.0, 18.0, 17.0], 24.0, 12.0),
            ],
        }
    }
}

impl HandModel {
    /// Joint positions in the palm frame, millimetres, wrist at the origin.
    pub fn palm_frame_joints(&self, flexion: &[f64; 5]) -> [Vec3; NUM_JOINTS] {
        let mut joints = [Vec3::ZERO; NUM_JOINTS];
        for finger in Finger::ALL {
            let model = &self.fingers[finger.index()];
            let chain = finger.chain();
            let in_plane = |deg: f64| {
                let a = f64::to_radians(deg);
                Vec3::new(a.sin(), a.cos(), 0.0)
            };
            let root_dir = in_plane(model.root_splay_deg);
            let forward = in_plane(model.splay_deg);
            // Flexion curls the finger towards the palm side (+z). The thumb
            // also swings across the palm.
            let bend = match finger {
                Finger::Thumb => {
                    let across = Vec3::Z.cross(forward) * -1.0;
                    (Vec3::Z * 0.6 + across * 0.8).normalized().unwrap()
                }
                _ => Vec3::Z,
            };
            let mut pos = Vec3::ZERO + root_dir * model.bones_mm[0];
            joints[chain[1]] = pos;
            let mut angle = 0.0;
            for (seg, len) in model.bones_mm.iter().enumerate().skip(1) {
                angle += flexion[finger.index()] * model.max_bend_deg[seg - 1].to_radians();
                let dir = forward * angle.cos() + bend * angle.sin();
                pos += dir * *len;
                joints[chain[seg + 1]] = pos;
            }
        }
        let roots: Vec<Vec3> = Finger::ALL[1..].iter().map(|f| joints[f.root()]).collect();
        let sum = roots.iter().fold(Vec3::ZERO, |a, &b| a + b);
        joints[PALM] = sum / (roots.len() + 1) as f64;
        joints[WRIST] = Vec3::ZERO;
        joints
    }
}

/// Device-frame joint positions (mm) for the given kinematic parameters,
/// on the label grid.
pub fn hand_pose_from_params(params: &HandKinematicParams, model: &HandModel) -> Result<HandPose> {
    params.validate()?;
    let rot = params.rotation();
    let wrist_mm = params.wrist_pos * 1000.0;
    let local = model.palm_frame_joints(&params.flexion);
    let mut joints = [Vec3::ZERO; NUM_JOINTS];
    for (out, p) in joints.iter_mut().zip(local) {
        *out = wrist_mm + rot.mul_vec(p);
    }
    Ok(HandPose::new(joints)?.snapped())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::bones;

    fn canonical_lengths(model: &HandModel) -> Vec<f64> {
        Finger::ALL
            .iter()
            .flat_map(|f| model.fingers[f.index()].bones_mm.clone())
            .collect()
    }

    #[test]
    fn flat_hand_is_planar_in_palm_frame() {
        let model = HandModel::default();
        let joints = model.palm_frame_joints(&[0.0; 5]);
        for f in Finger::ALL {
            assert!(joints[f.tip()].z.abs() < 1e-12, "{:?}", f);
        }
    }

    #[test]
    fn bone_lengths_are_preserved() {
        let model = HandModel::default();
        let want = canonical_lengths(&model);
        let params = HandKinematicParams {
            wrist_pos: Vec3::new(0.03, 0.2, -0.12),
            palm_rotation_deg: 35.0,
            azimuth_deg: -20.0,
            elevation_deg: 50.0,
            flexion: [0.3, 1.0, 0.0, 0.77, 0.5],
        };
        let pose = hand_pose_from_params(&params, &model).unwrap();
        for (bone, len) in bones().iter().zip(want) {
            assert!((pose.bone_length(bone) - len).abs() < 1e-9, "{}", bone.name());
        }
    }

    #[test]
    fn single_finger_flexion_moves_only_that_finger() {
        let model = HandModel::default();
        let base = HandKinematicParams::default();
        let flexed = HandKinematicParams {
            flexion: [0.0, 1.0, 0.0, 0.0, 0.0],
            ..base
        };
        let a = hand_pose_from_params(&base, &model).unwrap();
        let b = hand_pose_from_params(&flexed, &model).unwrap();
        // Index curled by 80 + 95 + 65 degrees: tip lands near the palm.
        let idx_tip = Finger::Index.tip();
        assert!(a.joints[idx_tip].distance(b.joints[idx_tip]) > 30.0);
        for f in [Finger::Thumb, Finger::Middle, Finger::Ring, Finger::Pinky] {
            assert_eq!(a.joints[f.tip()], b.joints[f.tip()]);
        }
    }

    #[test]
    fn index_fingertip_matches_hand_computed_chain() {
        // Palm frame, full index flexion: bends 80, 175, 240 degrees about x.
        let model = HandModel::default();
        let j = model.palm_frame_joints(&[0.0, 1.0, 0.0, 0.0, 0.0]);
        let (rs, rc) = (-22f64).to_radians().sin_cos();
        let (fs, fc) = (-6f64).to_radians().sin_cos();
        let mcp = Vec3::new(rs * 68.0, rc * 68.0, 0.0);
        let mut tip = mcp;
        for (len, deg) in [(40.0, 80.0), (23.0, 175.0), (18.0, 240.0)] {
            let a = f64::to_radians(deg);
            tip += Vec3::new(fs * a.cos(), fc * a.cos(), a.sin()) * len;
        }
        assert!(j[Finger::Index.tip()].distance(tip) < 1e-9);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = HandKinematicParams::default();
        p.flexion[2] = 1.2;
        assert!(p.validate().is_err());
        let q = HandKinematicParams {
            azimuth_deg: 75.0,
            ..HandKinematicParams::default()
        };
        assert!(q.validate().is_err());
    }
}
