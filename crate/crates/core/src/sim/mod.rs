//! Synthetic acoustic scenes standing in for the speaker, microphone array
//! and depth camera.

pub mod hand;
pub mod scene;
pub mod session;
pub mod trajectory;

pub use hand::{hand_pose_from_params, HandKinematicParams, HandModel};
pub use scene::{hand_to_scatterers, propagate, MicArrayGeometry, Scatterer, Scene, NUM_MICS};
pub use session::{simulate_session, Interferer, RenderOptions, SimulatedSession, TimedPose};
pub use trajectory::{gesture_trajectory, GestureKind, Trajectory};
