//! Labelled feature windows, range-shift augmentation, curriculum stages and
//! the on-disk formats.
//!
//! Subtracted profiles are kept as a compact [`ProfileStream`]; feature
//! windows over it are either materialised ([`assemble_features`]) or
//! referenced lazily by start index ([`WindowRef`]) so a long session never
//! needs all overlapping windows in memory at once.

mod formats;
mod session;

pub use formats::{
    read_audio, read_poses, read_tensor, write_audio, write_poses, write_tensor, SessionManifest, Tensor,
};
pub use session::{augmentation_shifts, load_session, read_manifest, session_stream, write_session, LoadedSession};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rangeprofile::{Preprocessed, RangeProfile};
use crate::sim::{GestureKind, TimedPose};
use crate::skeleton::{snap_to_grid, HandPose};

/// Subtracted profiles per feature window.
pub const WINDOW_PROFILES: usize = 50;

/// Labels further than this from the window end are rejected.
pub const MAX_LABEL_GAP_US: i64 = 20_000;

/// Largest supported augmentation shift, cells.
pub const MAX_SHIFT_CELLS: i32 = 3;

/// Default augmentation shifts.
pub const DEFAULT_SHIFTS: [i32; 6] = [-3, -2, -1, 1, 2, 3];

/// Ordered subtracted profiles of one session, stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileStream {
    pub channels: usize,
    pub cells: usize,
    /// Profile-major: `data[(t * channels + c) * cells + k]`.
    pub data: Vec<f32>,
    /// End time of every profile on the recording clock.
    pub end_us: Vec<i64>,
}

impl ProfileStream {
    pub fn new(channels: usize, cells: usize) -> Self {
        Self {
            channels,
            cells,
            data: Vec::new(),
            end_us: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.end_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.end_us.is_empty()
    }

    pub fn push(&mut self, profile: &RangeProfile, end_us: i64) -> Result<()> {
        if profile.channels != self.channels || profile.cells != self.cells {
            return Err(Error::Shape(format!(
                "profile {}x{} pushed to {}x{} stream",
                profile.channels, profile.cells, self.channels, self.cells
            )));
        }
        self.data.extend(profile.magnitudes.iter().map(|&v| v as f32));
        self.end_us.push(end_us);
        Ok(())
    }

    /// The subtracted stream of a preprocessed recording.
    pub fn from_preprocessed(p: &Preprocessed) -> Result<Self> {
        let first = p
            .subtracted
            .first()
            .ok_or_else(|| Error::Input("no subtracted profiles".into()))?;
        let mut s = Self::new(first.channels, first.cells);
        s.data.reserve(p.subtracted.len() * first.channels * first.cells);
        for (i, prof) in p.subtracted.iter().enumerate() {
            s.push(prof, p.subtracted_end_us(i))?;
        }
        Ok(s)
    }

    pub fn profile(&self, t: usize) -> &[f32] {
        let stride = self.channels * self.cells;
        &self.data[t * stride..(t + 1) * stride]
    }

    /// Starts of the windows assembled with `stride`.
    pub fn window_starts(&self, stride: usize) -> Result<Vec<usize>> {
        if stride == 0 {
            return Err(Error::Input("window stride must be positive".into()));
        }
        if self.len() < WINDOW_PROFILES {
            return Err(Error::Input(format!(
                "{} profiles, need at least {WINDOW_PROFILES}",
                self.len()
            )));
        }
        Ok((0..=self.len() - WINDOW_PROFILES).step_by(stride).collect())
    }

    pub fn window_end_us(&self, start: usize) -> i64 {
        self.end_us[start + WINDOW_PROFILES - 1]
    }

    /// Fill `out` (channel, cell, window) with the window at `start`,
    /// translated by `shift` cells along the range axis.
    pub fn fill_window(&self, start: usize, shift: i32, out: &mut [f32]) -> Result<()> {
        let (ch, cells) = (self.channels, self.cells);
        if out.len() != ch * cells * WINDOW_PROFILES {
            return Err(Error::Shape(format!(
                "window buffer of {} values, need {}",
                out.len(),
                ch * cells * WINDOW_PROFILES
            )));
        }
        if start + WINDOW_PROFILES > self.len() {
            return Err(Error::Input(format!("window at {start} runs past the stream")));
        }
        out.fill(0.0);
        for w in 0..WINDOW_PROFILES {
            let prof = self.profile(start + w);
            for c in 0..ch {
                for k in 0..cells {
                    let src = k as i64 - i64::from(shift);
                    if (0..cells as i64).contains(&src) {
                        out[(c * cells + k) * WINDOW_PROFILES + w] = prof[c * cells + src as usize];
                    }
                }
            }
        }
        Ok(())
    }
}

/// A `channels x cells x 50` input tensor with its end time and label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub channels: usize,
    pub cells: usize,
    /// Row-major (channel, cell, window).
    pub tensor: Vec<f32>,
    pub end_timestamp_us: i64,
    pub label: Option<HandPose>,
}

impl FeatureWindow {
    pub fn at(&self, channel: usize, cell: usize, slice: usize) -> f32 {
        self.tensor[(channel * self.cells + cell) * WINDOW_PROFILES + slice]
    }
}

/// Materialise sliding windows of 50 profiles, `stride` profiles apart.
pub fn assemble_features(stream: &ProfileStream, stride: usize) -> Result<Vec<FeatureWindow>> {
    stream
        .window_starts(stride)?
        .into_iter()
        .map(|start| {
            let mut tensor = vec![0.0; stream.channels * stream.cells * WINDOW_PROFILES];
            stream.fill_window(start, 0, &mut tensor)?;
            Ok(FeatureWindow {
                channels: stream.channels,
                cells: stream.cells,
                tensor,
                end_timestamp_us: stream.window_end_us(start),
                label: None,
            })
        })
        .collect()
}

/// Index of the ground-truth frame nearest to `t_us` and its distance.
/// `gt` must be sorted by time.
pub fn nearest_frame(gt: &[TimedPose], t_us: i64) -> Option<(usize, i64)> {
    if gt.is_empty() {
        return None;
    }
    let i = gt.partition_point(|p| p.timestamp_us < t_us);
    let mut best = None;
    for j in [i.wrapping_sub(1), i] {
        if let Some(p) = gt.get(j) {
            let gap = (p.timestamp_us - t_us).abs();
            if best.map_or(true, |(_, g)| gap < g) {
                best = Some((j, gap));
            }
        }
    }
    best
}

/// Outcome of [`align_labels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AlignmentReport {
    /// Largest gap among accepted labels.
    pub max_gap_us: i64,
    /// Windows left unlabelled because no frame was within 20 ms.
    pub rejected: usize,
}

/// Label every window with the ground-truth frame nearest to its end time.
/// Windows without a frame within [`MAX_LABEL_GAP_US`] stay unlabelled and
/// are counted.
pub fn align_labels(windows: &mut [FeatureWindow], gt: &[TimedPose]) -> AlignmentReport {
    let mut report = AlignmentReport::default();
    for w in windows.iter_mut() {
        match nearest_frame(gt, w.end_timestamp_us) {
            Some((i, gap)) if gap <= MAX_LABEL_GAP_US => {
                report.max_gap_us = report.max_gap_us.max(gap);
                w.label = Some(gt[i].pose.clone());
            }
            _ => {
                w.label = None;
                report.rejected += 1;
            }
        }
    }
    if report.rejected > 0 {
        log::warn!("{} windows left without a label", report.rejected);
    }
    report
}

/// Pose translated along the range axis by `shift` cells of `cell_mm`.
///
/// The offset is rounded to the label grid, so a label already on the grid
/// moves without rounding and its joint differences are unchanged.
pub fn shift_label(pose: &HandPose, shift: i32, cell_mm: f64) -> HandPose {
    pose.translated(Vec3::new(0.0, snap_to_grid(f64::from(shift) * cell_mm), 0.0))
}

fn check_shift(s: i32) -> Result<()> {
    if s == 0 || s.abs() > MAX_SHIFT_CELLS {
        return Err(Error::Input(format!(
            "augmentation shift {s} outside ±1..=±{MAX_SHIFT_CELLS}"
        )));
    }
    Ok(())
}

/// One translated copy per shift: the tensor moves `s` cells along the
/// range axis (zero fill) and every joint's y moves by `s * cell_mm`.
pub fn augment(window: &FeatureWindow, shifts: &[i32], cell_mm: f64) -> Result<Vec<FeatureWindow>> {
    let label = window
        .label
        .as_ref()
        .ok_or_else(|| Error::Input("cannot augment an unlabelled window".into()))?;
    let cells = window.cells;
    shifts
        .iter()
        .map(|&s| {
            check_shift(s)?;
            let mut tensor = vec![0.0; window.tensor.len()];
            for c in 0..window.channels {
                for k in 0..cells {
                    let src = k as i64 - i64::from(s);
                    if (0..cells as i64).contains(&src) {
                        let d = (c * cells + k) * WINDOW_PROFILES;
                        let o = (c * cells + src as usize) * WINDOW_PROFILES;
                        tensor[d..d + WINDOW_PROFILES].copy_from_slice(&window.tensor[o..o + WINDOW_PROFILES]);
                    }
                }
            }
            Ok(FeatureWindow {
                tensor,
                label: Some(shift_label(label, s, cell_mm)),
                ..window.clone()
            })
        })
        .collect()
}

/// A labelled window referenced by position in a session's stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRef {
    pub session: usize,
    pub start: usize,
    pub shift: i32,
    pub label: [f64; 63],
}

/// Training or evaluation samples drawn lazily from preprocessed sessions.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub streams: Vec<ProfileStream>,
    pub samples: Vec<WindowRef>,
}

/// Source of labelled input tensors, consumed by the regressor.
pub trait WindowSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Input shape (channels, cells).
    fn shape(&self) -> (usize, usize);
    fn fill_input(&self, i: usize, out: &mut [f32]) -> Result<()>;
    fn label(&self, i: usize) -> &[f64; 63];
}

impl WindowSet {
    /// Add a session: windows every `stride` profiles, labelled from `gt`,
    /// plus one shifted copy per entry of `shifts`. Returns the alignment
    /// report of the unshifted windows.
    pub fn add_session(
        &mut self,
        stream: ProfileStream,
        gt: &[TimedPose],
        stride: usize,
        shifts: &[i32],
        cell_mm: f64,
    ) -> Result<AlignmentReport> {
        if let Some(first) = self.streams.first() {
            if (first.channels, first.cells) != (stream.channels, stream.cells) {
                return Err(Error::Shape("sessions differ in profile shape".into()));
            }
        }
        for &s in shifts {
            check_shift(s)?;
        }
        let session = self.streams.len();
        let mut report = AlignmentReport::default();
        for start in stream.window_starts(stride)? {
            match nearest_frame(gt, stream.window_end_us(start)) {
                Some((i, gap)) if gap <= MAX_LABEL_GAP_US => {
                    report.max_gap_us = report.max_gap_us.max(gap);
                    let pose = &gt[i].pose;
                    self.samples.push(WindowRef {
                        session,
                        start,
                        shift: 0,
                        label: pose.to_flat(),
                    });
                    for &s in shifts {
                        self.samples.push(WindowRef {
                            session,
                            start,
                            shift: s,
                            label: shift_label(pose, s, cell_mm).to_flat(),
                        });
                    }
                }
                _ => report.rejected += 1,
            }
        }
        if report.rejected > 0 {
            log::warn!("session {session}: {} windows left without a label", report.rejected);
        }
        self.streams.push(stream);
        Ok(report)
    }
}

impl WindowSource for WindowSet {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn shape(&self) -> (usize, usize) {
        self.streams.first().map_or((0, 0), |s| (s.channels, s.cells))
    }

    fn fill_input(&self, i: usize, out: &mut [f32]) -> Result<()> {
        let r = &self.samples[i];
        self.streams[r.session].fill_window(r.start, r.shift, out)
    }

    fn label(&self, i: usize) -> &[f64; 63] {
        &self.samples[i].label
    }
}

/// Materialised windows as a source; unlabelled windows are skipped.
pub struct MaterializedSet {
    windows: Vec<FeatureWindow>,
    labels: Vec<[f64; 63]>,
}

impl MaterializedSet {
    pub fn new(windows: Vec<FeatureWindow>) -> Self {
        let windows: Vec<FeatureWindow> = windows.into_iter().filter(|w| w.label.is_some()).collect();
        let labels = windows
            .iter()
            .map(|w| w.label.as_ref().map(HandPose::to_flat).unwrap_or([0.0; 63]))
            .collect();
        Self { windows, labels }
    }
}

impl WindowSource for MaterializedSet {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn shape(&self) -> (usize, usize) {
        self.windows.first().map_or((0, 0), |w| (w.channels, w.cells))
    }

    fn fill_input(&self, i: usize, out: &mut [f32]) -> Result<()> {
        let src = &self.windows[i].tensor;
        if out.len() != src.len() {
            return Err(Error::Shape(format!("buffer {} != window {}", out.len(), src.len())));
        }
        out.copy_from_slice(src);
        Ok(())
    }

    fn label(&self, i: usize) -> &[f64; 63] {
        &self.labels[i]
    }
}

/// One curriculum phase: a stage kind and its sessions, ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub kind: GestureKind,
    /// Indices into the manifest list.
    pub sessions: Vec<usize>,
}

/// Group sessions into stages ordered 1-finger, 2-finger, ..., 5-finger,
/// mixed. Missing stages are skipped with a warning.
pub fn curriculum_order(manifests: &[SessionManifest]) -> Vec<Stage> {
    let mut stages = Vec::new();
    for kind in GestureKind::ALL {
        let mut sessions: Vec<usize> = (0..manifests.len()).filter(|&i| manifests[i].stage == kind).collect();
        if sessions.is_empty() {
            log::warn!("curriculum stage {kind} has no sessions, skipping");
            continue;
        }
        sessions.sort_by(|&a, &b| manifests[a].session_id.cmp(&manifests[b].session_id));
        stages.push(Stage { kind, sessions });
    }
    stages
}

/// Attribute that defines the held-out group of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Subject,
    Room,
}

impl GroupBy {
    pub fn key<'a>(self, m: &'a SessionManifest) -> &'a str {
        match self {
            GroupBy::Subject => &m.subject_id,
            GroupBy::Room => m.room.as_deref().unwrap_or(""),
        }
    }
}

/// Session indices for training and testing; whole sessions only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub held_out: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One split per distinct group value, holding that group out.
pub fn leave_one_group_out(manifests: &[SessionManifest], by: GroupBy) -> Vec<Split> {
    let groups: BTreeSet<&str> = manifests.iter().map(|m| by.key(m)).collect();
    groups
        .into_iter()
        .map(|g| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..manifests.len()).partition(|&i| by.key(&manifests[i]) == g);
            Split {
                held_out: g.to_string(),
                train,
                test,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{hand_pose_from_params, HandKinematicParams, HandModel};

    fn stream(n: usize) -> ProfileStream {
        let mut s = ProfileStream::new(2, 8);
        for t in 0..n {
            let p = RangeProfile {
                channels: 2,
                cells: 8,
                magnitudes: (0..16).map(|i| (t * 100 + i) as f64).collect(),
                window_index: t,
                cell_size_m: 0.00357,
                origin_samples: vec![0, 0],
            };
            s.push(&p, (t as f64 * 512.0 / 48_000.0 * 1e6).round() as i64).unwrap();
        }
        s
    }

    fn pose() -> HandPose {
        hand_pose_from_params(&HandKinematicParams::default(), &HandModel::default()).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(assemble_features(&stream(100), 50).unwrap().len(), 2);
        assert_eq!(assemble_features(&stream(100), 1).unwrap().len(), 51);
        assert!(matches!(assemble_features(&stream(49), 1), Err(Error::Input(_))));
    }

    #[test]
    fn last_slice_is_latest_profile() {
        let s = stream(60);
        let w = assemble_features(&s, 1).unwrap();
        let t = 7;
        for c in 0..2 {
            for k in 0..8 {
                assert_eq!(w[t].at(c, k, 49), s.profile(t + 49)[c * 8 + k]);
            }
        }
        assert_eq!(w[t].end_timestamp_us, s.end_us[t + 49]);
    }

    #[test]
    fn nearest_label_and_gap() {
        let gt: Vec<TimedPose> = (0..300)
            .map(|i| TimedPose {
                timestamp_us: i * 10_000,
                pose: pose().translated(Vec3::new(i as f64, 0.0, 0.0)),
            })
            .collect();
        assert_eq!(nearest_frame(&gt, 50_000), Some((5, 0)));
        assert_eq!(nearest_frame(&gt, 54_000), Some((5, 4_000)));
        let mut w = assemble_features(&stream(250), 1).unwrap();
        let r = align_labels(&mut w, &gt);
        assert_eq!(r.rejected, 0);
        assert!(r.max_gap_us <= 5_000);
        let mut w2 = assemble_features(&stream(60), 1).unwrap();
        let r = align_labels(&mut w2, &[]);
        assert_eq!(r.rejected, w2.len());
        assert!(w2.iter().all(|w| w.label.is_none()));
    }

    #[test]
    fn far_labels_are_rejected() {
        let gt = vec![TimedPose {
            timestamp_us: 0,
            pose: pose(),
        }];
        let mut w = assemble_features(&stream(60), 1).unwrap();
        let r = align_labels(&mut w, &gt);
        assert_eq!(r.rejected, w.len());
    }

    #[test]
    fn augmentation_shifts_cells_and_y() {
        let mut w = assemble_features(&stream(50), 1).unwrap().remove(0);
        assert!(augment(&w, &[1], 3.57).is_err());
        w.label = Some(pose());
        let out = augment(&w, &DEFAULT_SHIFTS, 3.5729).unwrap();
        assert_eq!(out.len(), 6);
        let plus2 = &out[4];
        for c in 0..2 {
            for s in 0..WINDOW_PROFILES {
                assert_eq!(plus2.at(c, 0, s), 0.0);
                assert_eq!(plus2.at(c, 1, s), 0.0);
                for k in 2..8 {
                    assert_eq!(plus2.at(c, k, s), w.at(c, k - 2, s));
                }
            }
        }
        let a = w.label.as_ref().unwrap();
        let b = plus2.label.as_ref().unwrap();
        for (p, q) in a.joints.iter().zip(&b.joints) {
            assert_eq!(p.x, q.x);
            assert_eq!(p.z, q.z);
            assert!((q.y - p.y - 2.0 * 3.5729).abs() < 1e-9);
        }
        assert!(augment(&w, &[4], 3.57).is_err());
        assert!(augment(&w, &[0], 3.57).is_err());
    }

    #[test]
    fn lazy_windows_match_materialised() {
        let s = stream(70);
        let gt: Vec<TimedPose> = (0..100)
            .map(|i| TimedPose {
                timestamp_us: i * 10_000,
                pose: pose(),
            })
            .collect();
        let mut mat = assemble_features(&s, 5).unwrap();
        align_labels(&mut mat, &gt);
        let aug = augment(&mat[2], &[-1], 3.5).unwrap().remove(0);
        let mut set = WindowSet::default();
        set.add_session(s, &gt, 5, &[-1], 3.5).unwrap();
        assert_eq!(set.len(), 2 * mat.len());
        let mut buf = vec![0.0; 2 * 8 * WINDOW_PROFILES];
        set.fill_input(4, &mut buf).unwrap();
        assert_eq!(buf, mat[2].tensor);
        set.fill_input(5, &mut buf).unwrap();
        assert_eq!(buf, aug.tensor);
        assert_eq!(set.label(5), &aug.label.unwrap().to_flat());
    }

    fn manifest(id: &str, subject: &str, stage: GestureKind) -> SessionManifest {
        SessionManifest {
            session_id: id.into(),
            subject_id: subject.into(),
            stage,
            ..SessionManifest::default()
        }
    }

    #[test]
    fn curriculum_orders_and_skips() {
        let ms = vec![
            manifest("b", "s1", GestureKind::Mixed),
            manifest("c", "s1", GestureKind::Fingers(2)),
            manifest("a", "s2", GestureKind::Mixed),
            manifest("d", "s2", GestureKind::Fingers(1)),
        ];
        let st = curriculum_order(&ms);
        let kinds: Vec<GestureKind> = st.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![GestureKind::Fingers(1), GestureKind::Fingers(2), GestureKind::Mixed]
        );
        assert_eq!(st[2].sessions, vec![2, 0]);
        let only_mixed = curriculum_order(&ms[..1]);
        assert_eq!(only_mixed.len(), 1);
    }

    #[test]
    fn group_splits_never_share_a_subject() {
        let ms: Vec<SessionManifest> = (0..9)
            .map(|i| manifest(&format!("x{i}"), &format!("s{}", i % 3), GestureKind::Mixed))
            .collect();
        let splits = leave_one_group_out(&ms, GroupBy::Subject);
        assert_eq!(splits.len(), 3);
        for sp in splits {
            assert_eq!(sp.test.len(), 3);
            let test: BTreeSet<&str> = sp.test.iter().map(|&i| ms[i].subject_id.as_str()).collect();
            assert!(sp.train.iter().all(|&i| !test.contains(ms[i].subject_id.as_str())));
            assert_eq!(sp.train.len() + sp.test.len(), 9);
        }
    }
}
