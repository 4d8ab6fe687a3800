//! The 21-joint hand skeleton shared by the simulator, dataset files, the
//! regressor output and pose analytics.
//!
//! Joint order (format version 1), all positions in millimetres in the
//! device frame:
//!
//! | index | joint        | index | joint       |
//! |-------|--------------|-------|-------------|
//! | 0     | wrist        | 11    | middle tip  |
//! | 1     | thumb MCP    | 12    | ring MCP    |
//! | 2     | thumb IP     | 13    | ring PIP    |
//! | 3     | thumb tip    | 14    | ring DIP    |
//! | 4     | index MCP    | 15    | ring tip    |
//! | 5     | index PIP    | 16    | pinky MCP   |
//! | 6     | index DIP    | 17    | pinky PIP   |
//! | 7     | index tip    | 18    | pinky DIP   |
//! | 8     | middle MCP   | 19    | pinky tip   |
//! | 9     | middle PIP   | 20    | palm centre |
//! | 10    | middle DIP   |       |             |
//!
//! Every finger is a chain rooted at the wrist: four bones for the long
//! fingers (metacarpal, proximal, intermediate, distal) and three for the
//! thumb, 19 bones in total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const NUM_JOINTS: usize = 21;
pub const NUM_COORDS: usize = NUM_JOINTS * 3;
pub const NUM_BONES: usize = 19;
pub const JOINT_ORDER_VERSION: u16 = 1;

/// Resolution of generated labels (2^-32 mm). Coordinates on this grid
/// translate and subtract without rounding, so shifted labels keep their
/// bone vectors bit for bit.
pub const LABEL_GRID_MM: f64 = 1.0 / 4_294_967_296.0;

/// Round a millimetre coordinate to the nearest [`LABEL_GRID_MM`] step.
pub fn snap_to_grid(mm: f64) -> f64 {
    (mm / LABEL_GRID_MM).round() * LABEL_GRID_MM
}

pub const WRIST: usize = 0;
pub const PALM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }

    /// Joints of the finger chain, wrist first, tip last.
    pub fn chain(self) -> &'static [usize] {
        match self {
            Finger::Thumb => &[0, 1, 2, 3],
            Finger::Index => &[0, 4, 5, 6, 7],
            Finger::Middle => &[0, 8, 9, 10, 11],
            Finger::Ring => &[0, 12, 13, 14, 15],
            Finger::Pinky => &[0, 16, 17, 18, 19],
        }
    }

    pub fn tip(self) -> usize {
        *self.chain().last().unwrap()
    }

    /// The knuckle joint where the finger leaves the palm (first joint after
    /// the wrist).
    pub fn root(self) -> usize {
        self.chain()[1]
    }

    pub fn bone_names(self) -> &'static [&'static str] {
        match self {
            Finger::Thumb => &["proximal", "intermediate", "distal"],
            _ => &["metacarpal", "proximal", "intermediate", "distal"],
        }
    }
}

/// One rigid link of the skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bone {
    pub finger: Finger,
    /// Position along the chain, 0 = root bone.
    pub segment: usize,
    pub from: usize,
    pub to: usize,
}

impl Bone {
    pub fn name(&self) -> String {
        format!("{}_{}", self.finger.name(), self.finger.bone_names()[self.segment])
    }
}

/// All 19 bones ordered by finger (thumb first), root to distal.
pub fn bones() -> Vec<Bone> {
    Finger::ALL
        .iter()
        .flat_map(|&finger| {
            finger.chain().windows(2).enumerate().map(move |(segment, w)| Bone {
                finger,
                segment,
                from: w[0],
                to: w[1],
            })
        })
        .collect()
}

pub fn joint_name(idx: usize) -> String {
    const SUFFIX: [&str; 4] = ["mcp", "pip", "dip", "tip"];
    match idx {
        WRIST => "wrist".into(),
        PALM => "palm".into(),
        1..=3 => format!("thumb_{}", ["mcp", "ip", "tip"][idx - 1]),
        4..=19 => {
            let finger = Finger::ALL[(idx - 4) / 4 + 1];
            format!("{}_{}", finger.name(), SUFFIX[(idx - 4) % 4])
        }
        _ => format!("joint{idx}"),
    }
}

/// Finger owning a joint, or `None` for wrist and palm.
pub fn joint_finger(idx: usize) -> Option<Finger> {
    match idx {
        1..=3 => Some(Finger::Thumb),
        4..=19 => Some(Finger::ALL[(idx - 4) / 4 + 1]),
        _ => None,
    }
}

/// 21 joint positions in millimetres, device frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPose {
    pub joints: [Vec3; NUM_JOINTS],
}

impl HandPose {
    pub fn new(joints: [Vec3; NUM_JOINTS]) -> Result<Self> {
        let pose = Self { joints };
        if !pose.is_finite() {
            return Err(Error::Input("hand pose contains non-finite coordinates".into()));
        }
        Ok(pose)
    }

    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() != NUM_COORDS {
            return Err(Error::Shape(format!(
                "pose needs {NUM_COORDS} coordinates, got {}",
                coords.len()
            )));
        }
        let mut joints = [Vec3::ZERO; NUM_JOINTS];
        for (j, c) in joints.iter_mut().zip(coords.chunks_exact(3)) {
            *j = Vec3::new(c[0], c[1], c[2]);
        }
        Self::new(joints)
    }

    /// `[j00_x, j00_y, j00_z, j01_x, ...]`.
    pub fn to_flat(&self) -> [f64; NUM_COORDS] {
        let mut out = [0.0; NUM_COORDS];
        for (chunk, j) in out.chunks_exact_mut(3).zip(&self.joints) {
            chunk.copy_from_slice(&j.to_array());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|j| j.is_finite())
    }

    pub fn translated(&self, offset: Vec3) -> HandPose {
        let mut joints = self.joints;
        for j in &mut joints {
            *j += offset;
        }
        HandPose { joints }
    }

    /// Every coordinate rounded to [`LABEL_GRID_MM`].
    pub fn snapped(&self) -> HandPose {
        self.map(|j| Vec3::new(snap_to_grid(j.x), snap_to_grid(j.y), snap_to_grid(j.z)))
    }

    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> HandPose {
        let mut joints = self.joints;
        for j in &mut joints {
            *j = f(*j);
        }
        HandPose { joints }
    }

    pub fn bone_length(&self, bone: &Bone) -> f64 {
        self.joints[bone.from].distance(self.joints[bone.to])
    }
}
