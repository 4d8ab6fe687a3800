//! Pose analytics: flexion angles, palm-frame normalisation and
//! activation-pose detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::sim::{hand_pose_from_params, HandKinematicParams, HandModel};
use crate::skeleton::{bones, Finger, HandPose, NUM_BONES, NUM_COORDS, WRIST};

/// Bones shorter than this have no usable direction.
pub const MIN_BONE_MM: f64 = 1.0;

/// Consecutive matching frames required before an activation fires.
pub const DEFAULT_DEBOUNCE_FRAMES: usize = 3;

/// Midpoint of the reference class gap (0.004 matching, 0.085 non-matching).
pub const DEFAULT_ACTIVATION_THRESHOLD: f64 = -0.0445;

/// Relative area below which the palm triangle counts as collinear.
const MIN_PALM_AREA_RATIO: f64 = 1e-3;

/// Flexion of the 19 bones in degrees, ordered like [`bones`]: per finger,
/// thumb first, root bone to distal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexionAngles {
    pub degrees: [f64; NUM_BONES],
}

impl FlexionAngles {
    /// Angles of one finger, root first.
    pub fn finger(&self, finger: Finger) -> &[f64] {
        let start: usize = Finger::ALL[..finger.index()].iter().map(|f| f.chain().len() - 1).sum();
        &self.degrees[start..start + finger.chain().len() - 1]
    }
}

fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    // atan2 stays accurate near 0 and 180 degrees where acos does not.
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Angle between each bone and its parent towards the wrist; root bones are
/// measured against -z.
pub fn flexion_angles(pose: &HandPose) -> Result<FlexionAngles> {
    let mut degrees = [0.0; NUM_BONES];
    let mut parent = -Vec3::Z;
    for (i, bone) in bones().iter().enumerate() {
        let v = pose.joints[bone.to] - pose.joints[bone.from];
        let len = v.norm();
        if !(len > MIN_BONE_MM) {
            return Err(Error::DegenerateBone {
                bone: bone.name(),
                length_mm: len,
            });
        }
        if bone.segment == 0 {
            parent = -Vec3::Z;
        }
        degrees[i] = angle_deg(parent, v);
        parent = v;
    }
    Ok(FlexionAngles { degrees })
}

/// Wrist at the origin, palm in a canonical frame and unit wrist to
/// middle-root distance.
///
/// Frame: y along wrist to middle root, x along wrist to index root with its
/// y component removed, z = x × y.
pub fn normalize_pose(pose: &HandPose) -> Result<HandPose> {
    let wrist = pose.joints[WRIST];
    let rel = |j: usize| pose.joints[j] - wrist;
    let middle = rel(Finger::Middle.root());
    let index = rel(Finger::Index.root());
    let pinky = rel(Finger::Pinky.root());
    let size = middle.norm();
    if !(size > 0.0) || !size.is_finite() {
        return Err(Error::Normalization("wrist and middle root coincide".into()));
    }
    let scale2 = index.norm().max(pinky.norm()).max(size).powi(2);
    if !(index.cross(pinky).norm() > MIN_PALM_AREA_RATIO * scale2) {
        return Err(Error::Normalization("palm triangle is degenerate".into()));
    }
    let y = middle / size;
    let x = (index - y * index.dot(y))
        .normalized()
        .filter(|_| index.cross(y).norm() > MIN_PALM_AREA_RATIO * index.norm())
        .ok_or_else(|| Error::Normalization("index root lies on the palm axis".into()))?;
    let z = x.cross(y);
    let frame = Mat3::from_rows(x, y, z);
    Ok(pose.map(|p| frame.mul_vec(p - wrist) / size))
}

/// Mean absolute coordinate difference of two poses.
fn coordinate_mae(a: &HandPose, b: &HandPose) -> f64 {
    let (a, b) = (a.to_flat(), b.to_flat());
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / NUM_COORDS as f64
}

/// A normalised trigger pose and the similarity at or above which it matches.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTemplate {
    pose: HandPose,
    pub threshold: f64,
}

impl ActivationTemplate {
    pub fn new(pose: &HandPose, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(Error::Config("activation threshold must be finite".into()));
        }
        Ok(Self {
            pose: normalize_pose(pose)?,
            threshold,
        })
    }

    /// The simulator's "love" hand shape with the default threshold.
    pub fn canonical() -> Self {
        Self::new(&canonical_activation_pose(), DEFAULT_ACTIVATION_THRESHOLD).expect("canonical hand normalises")
    }

    /// The stored, normalised pose.
    pub fn pose(&self) -> &HandPose {
        &self.pose
    }
}

/// Default hand in the activation shape at the rest placement.
pub fn canonical_activation_pose() -> HandPose {
    let params = HandKinematicParams {
        flexion: crate::sim::trajectory::ACTIVATION_FLEXION,
        ..HandKinematicParams::default()
    };
    hand_pose_from_params(&params, &HandModel::default()).expect("default hand is valid")
}

/// Negative mean absolute error between the normalised pose and the
/// template, in palm-size units. 0 is a perfect match.
pub fn activation_similarity(pose: &HandPose, template: &ActivationTemplate) -> Result<f64> {
    Ok(-coordinate_mae(&normalize_pose(pose)?, &template.pose))
}

/// Threshold halfway between the lowest matching and the highest
/// non-matching similarity. Fails when the two classes overlap.
pub fn calibrate_threshold(matching: &[f64], non_matching: &[f64]) -> Result<f64> {
    let lo = matching.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = non_matching.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if matching.is_empty() || non_matching.is_empty() {
        return Err(Error::Input("calibration needs both classes".into()));
    }
    if !(lo > hi) {
        return Err(Error::Input(format!(
            "classes overlap: lowest match {lo}, highest non-match {hi}"
        )));
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationEvent {
    /// Frame index at which the debounce completed.
    pub frame: usize,
    pub similarity: f64,
}

/// Streaming detector: fires once per run of at least `debounce` consecutive
/// matching frames.
#[derive(Debug, Clone)]
pub struct ActivationDetector {
    template: ActivationTemplate,
    debounce: usize,
    run: usize,
    frame: usize,
}

impl ActivationDetector {
    pub fn new(template: ActivationTemplate, debounce: usize) -> Result<Self> {
        if debounce == 0 {
            return Err(Error::Config("debounce must be at least one frame".into()));
        }
        Ok(Self {
            template,
            debounce,
            run: 0,
            frame: 0,
        })
    }

    pub fn template(&self) -> &ActivationTemplate {
        &self.template
    }

    /// Feed the next frame. Poses that cannot be normalised count as
    /// non-matching.
    pub fn push(&mut self, pose: &HandPose) -> Option<ActivationEvent> {
        let frame = self.frame;
        self.frame += 1;
        let sim = activation_similarity(pose, &self.template).unwrap_or(f64::NEG_INFINITY);
        if sim >= self.template.threshold {
            self.run += 1;
            if self.run == self.debounce {
                return Some(ActivationEvent { frame, similarity: sim });
            }
        } else {
            self.run = 0;
        }
        None
    }

    pub fn reset(&mut self) {
        self.run = 0;
        self.frame = 0;
    }
}

/// Run a fresh detector over a whole stream.
pub fn detect_activation(
    poses: &[HandPose],
    template: &ActivationTemplate,
    debounce: usize,
) -> Result<Vec<ActivationEvent>> {
    let mut det = ActivationDetector::new(template.clone(), debounce)?;
    Ok(poses.iter().filter_map(|p| det.push(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trajectory::MIXED_POSES;

    fn hand(flexion: [f64; 5]) -> HandPose {
        let p = HandKinematicParams {
            flexion,
            ..HandKinematicParams::default()
        };
        hand_pose_from_params(&p, &HandModel::default()).unwrap()
    }

    fn rigid(p: &HandPose, s: f64) -> HandPose {
        let r = Mat3::axis_angle(Vec3::new(0.3, -1.0, 0.7).normalized().unwrap(), 1.1);
        p.map(|v| r.mul_vec(v) * s + Vec3::new(12.0, -40.0, 7.0))
    }

    #[test]
    fn straight_finger_has_zero_bends() {
        let mut p = hand([0.0; 5]);
        // Put the whole index chain on one line from the wrist.
        let dir = Vec3::new(0.0, 0.6, -0.8);
        for (k, &j) in Finger::Index.chain().iter().enumerate().skip(1) {
            p.joints[j] = p.joints[WRIST] + dir * (30.0 * k as f64);
        }
        let a = flexion_angles(&p).unwrap();
        let idx = a.finger(Finger::Index);
        assert!(idx[1..].iter().all(|d| d.abs() < 1e-9), "{idx:?}");
        let root = (dir.dot(-Vec3::Z)).acos().to_degrees();
        assert!((idx[0] - root).abs() < 1e-9);
        // Open model hand: only the knuckle carries splay, later joints are straight.
        let flat = flexion_angles(&hand([0.0; 5])).unwrap();
        for f in Finger::ALL {
            assert!(flat.finger(f)[2..].iter().all(|d| d.abs() < 1e-9), "{f:?}");
        }
    }

    #[test]
    fn right_angle_bend() {
        let mut p = hand([0.0; 5]);
        // Turn the index distal phalanx straight down.
        let dip = p.joints[6];
        let len = p.joints[7].distance(dip);
        p.joints[7] = dip - Vec3::Z * len;
        let a = flexion_angles(&p).unwrap();
        assert!((a.finger(Finger::Index)[3] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_bone_is_named() {
        let mut p = hand([0.0; 5]);
        p.joints[10] = p.joints[9];
        match flexion_angles(&p) {
            Err(Error::DegenerateBone { bone, .. }) => assert_eq!(bone, "middle_intermediate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn normalisation_properties() {
        let p = hand([0.3, 0.1, 0.7, 0.2, 0.9]);
        let n = normalize_pose(&p).unwrap();
        assert_eq!(n.joints[WRIST], Vec3::ZERO);
        assert!((n.joints[Finger::Middle.root()].norm() - 1.0).abs() < 1e-12);
        let nn = normalize_pose(&n).unwrap();
        assert!(coordinate_mae(&n, &nn) < 1e-12);
        let moved = normalize_pose(&rigid(&p, 1.7)).unwrap();
        assert!(coordinate_mae(&n, &moved) < 1e-12);
    }

    #[test]
    fn collapsed_palm_rejected() {
        let mut p = hand([0.0; 5]);
        p.joints[16] = p.joints[4] * 2.0 - p.joints[WRIST];
        assert!(matches!(normalize_pose(&p), Err(Error::Normalization(_))));
    }

    #[test]
    fn template_similarity_and_gap() {
        let t = ActivationTemplate::canonical();
        let same = activation_similarity(&rigid(&canonical_activation_pose(), 0.8), &t).unwrap();
        assert!(same.abs() < 1e-12);
        let worst = MIXED_POSES
            .iter()
            .map(|f| activation_similarity(&hand(*f), &t).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(worst < t.threshold, "closest non-template {worst}");
    }

    #[test]
    fn debounce() {
        let t = ActivationTemplate::canonical();
        let yes = canonical_activation_pose();
        let no = hand([1.0; 5]);
        let ev = detect_activation(&vec![yes.clone(); 10], &t, 3).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].frame, 2);
        assert!(detect_activation(&vec![no.clone(); 10], &t, 3).unwrap().is_empty());
        let alt: Vec<HandPose> = (0..12)
            .map(|i| if i % 3 == 2 { no.clone() } else { yes.clone() })
            .collect();
        assert!(detect_activation(&alt, &t, 3).unwrap().is_empty());
    }

    #[test]
    fn calibration_midpoint() {
        let t = calibrate_threshold(&[-0.004, -0.001], &[-0.2, -0.085]).unwrap();
        assert!((t - DEFAULT_ACTIVATION_THRESHOLD).abs() < 1e-15);
        assert!(calibrate_threshold(&[-0.1], &[-0.05]).is_err());
    }
}
