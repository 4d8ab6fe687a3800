//! Session files on disk: manifest + audio + ground-truth poses.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::formats::{read_audio, read_poses, write_audio, write_poses, SessionManifest};
use super::ProfileStream;
use crate::chirp::Recording;
use crate::error::{Error, Result};
use crate::rangeprofile::{preprocess, AnchorInfo, PreprocessConfig};
use crate::sim::{SimulatedSession, TimedPose};

/// Augmentation shifts in the order they are enabled: ±1, then ±2, then ±3.
const SHIFT_ORDER: [i32; 6] = [1, -1, 2, -2, 3, -3];

#[derive(Debug, Clone)]
pub struct LoadedSession {
    pub manifest: SessionManifest,
    pub recording: Recording,
    pub ground_truth: Vec<TimedPose>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

/// Write `<id>.bvau`, `<id>.csv` and `<id>.toml` into `dir`; the manifest's
/// `audio` and `poses` fields are set to those names. Returns the manifest
/// path.
pub fn write_session(dir: &Path, manifest: &SessionManifest, session: &SimulatedSession) -> Result<PathBuf> {
    if manifest.session_id.is_empty() || manifest.session_id.contains(['/', '\\']) {
        return Err(Error::Config(format!("unusable session id {:?}", manifest.session_id)));
    }
    let id = &manifest.session_id;
    let manifest = SessionManifest {
        audio: format!("{id}.bvau"),
        poses: format!("{id}.csv"),
        ..manifest.clone()
    };
    let mut w = create(&dir.join(&manifest.audio))?;
    write_audio(&mut w, &session.recording)?;
    w.flush()?;
    let mut w = create(&dir.join(&manifest.poses))?;
    write_poses(&mut w, &session.ground_truth)?;
    w.flush()?;
    let path = dir.join(format!("{id}.toml"));
    std::fs::write(&path, manifest.to_toml()?)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<SessionManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    SessionManifest::from_toml(&text)
}

/// Read a manifest and the files it names (relative to its directory).
pub fn load_session(manifest_path: &Path) -> Result<LoadedSession> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let recording = read_audio(&mut open(&dir.join(&manifest.audio))?)?;
    if recording.sample_rate_hz != manifest.chirp.sample_rate_hz {
        return Err(Error::Input(format!(
            "{}: audio at {} Hz, manifest says {} Hz",
            manifest.session_id, recording.sample_rate_hz, manifest.chirp.sample_rate_hz
        )));
    }
    let ground_truth = read_poses(open(&dir.join(&manifest.poses))?)?;
    Ok(LoadedSession {
        manifest,
        recording,
        ground_truth,
    })
}

/// Run the range-profile pipeline on a loaded session.
pub fn session_stream(session: &LoadedSession, config: &PreprocessConfig) -> Result<(ProfileStream, AnchorInfo)> {
    let pre = preprocess(&session.recording, &session.manifest.chirp, config)?;
    Ok((ProfileStream::from_preprocessed(&pre)?, pre.anchor))
}

/// The first `count` augmentation shifts (at most 6).
pub fn augmentation_shifts(count: usize) -> Result<Vec<i32>> {
    if count > SHIFT_ORDER.len() {
        return Err(Error::Config(format!(
            "augmentation factor {count} exceeds {}",
            SHIFT_ORDER.len()
        )));
    }
    Ok(SHIFT_ORDER[..count].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chirp::ChirpSpec;
    use crate::sim::{gesture_trajectory, simulate_session, GestureKind, HandModel, RenderOptions, Scene};

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ChirpSpec::default();
        let traj = gesture_trajectory(GestureKind::Fingers(2), 0.3, 5).unwrap();
        let sim = simulate_session(
            &spec,
            &Scene::default(),
            &traj,
            &HandModel::default(),
            &RenderOptions::default(),
        )
        .unwrap();
        let m = SessionManifest {
            session_id: "s1".into(),
            subject_id: "a".into(),
            stage: GestureKind::Fingers(2),
            ..SessionManifest::default()
        };
        let path = write_session(dir.path(), &m, &sim).unwrap();
        let back = load_session(&path).unwrap();
        assert_eq!(back.manifest.audio, "s1.bvau");
        assert_eq!(
            back.recording.channels,
            sim.recording
                .channels
                .iter()
                .map(|c| c.iter().map(|&v| f64::from(v as f32)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        );
        assert_eq!(back.ground_truth.len(), sim.ground_truth.len());
        assert!(augmentation_shifts(7).is_err());
        assert_eq!(augmentation_shifts(2).unwrap(), vec![1, -1]);
    }
}
