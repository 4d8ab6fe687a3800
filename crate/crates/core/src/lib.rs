//! Acoustic hand tracking with FMCW active sonar.
//!
//! The crate covers the whole chain: chirp synthesis ([`chirp`]), a
//! point-scatterer scene simulator ([`sim`]), range-profile extraction with
//! clutter removal and start-time alignment ([`rangeprofile`]), feature
//! windows and file formats ([`dataset`]), a CNN+LSTM joint regressor
//! ([`regressor`]) and pose analytics ([`pose`]).

pub mod chirp;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod pose;
pub mod rangeprofile;
pub mod regressor;
pub mod sim;
pub mod skeleton;

pub use error::{Error, Result};
