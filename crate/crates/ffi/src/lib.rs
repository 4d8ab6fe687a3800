//! C ABI for the echo-sonar pipeline.
//!
//! Conventions:
//! - every function returns an `int32_t` status (`ES_OK` = 0, negative on
//!   failure) and writes results through out-pointers;
//! - objects are opaque handles created by `es_*_new`/`es_*_load` and
//!   released with the matching `es_*_free` (passing NULL is a no-op);
//! - after a failure, `es_last_error_message` returns a description for the
//!   calling thread;
//! - poses are 63 doubles: 21 joints x (x, y, z) in millimetres.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use echo_sonar::chirp::{generate_chirp, ChirpSpec, Recording};
use echo_sonar::dataset::{ProfileStream, WINDOW_PROFILES};
use echo_sonar::pose::{activation_similarity, flexion_angles, ActivationTemplate};
use echo_sonar::rangeprofile::{preprocess, AnchorInfo, PreprocessConfig};
use echo_sonar::regressor::{read_checkpoint, Model};
use echo_sonar::skeleton::{HandPose, NUM_BONES, NUM_COORDS};
use echo_sonar::Error;

pub const ES_OK: i32 = 0;
pub const ES_ERR_NULL: i32 = -1;
pub const ES_ERR_CONFIG: i32 = -2;
pub const ES_ERR_SHAPE: i32 = -3;
pub const ES_ERR_INPUT: i32 = -4;
pub const ES_ERR_ANCHOR: i32 = -5;
pub const ES_ERR_NUMERIC: i32 = -6;
pub const ES_ERR_POSE: i32 = -7;
pub const ES_ERR_FORMAT: i32 = -8;
pub const ES_ERR_IO: i32 = -9;
pub const ES_ERR_PANIC: i32 = -10;

/// Chirp and acoustic parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EsChirpSpec {
    pub start_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_len_samples: usize,
    pub sample_rate_hz: u32,
    pub amplitude: f64,
    pub sound_speed_mps: f64,
}

impl From<EsChirpSpec> for ChirpSpec {
    fn from(s: EsChirpSpec) -> Self {
        ChirpSpec {
            start_freq_hz: s.start_freq_hz,
            bandwidth_hz: s.bandwidth_hz,
            chirp_len_samples: s.chirp_len_samples,
            sample_rate_hz: s.sample_rate_hz,
            amplitude: s.amplitude,
            sound_speed_mps: s.sound_speed_mps,
        }
    }
}

/// Chirp parameters plus preprocessing settings.
pub struct EsPipeline {
    spec: ChirpSpec,
    config: PreprocessConfig,
}

/// Subtracted range profiles of one recording.
pub struct EsProfiles {
    stream: ProfileStream,
    anchor: AnchorInfo,
}

/// A trained regressor.
pub struct EsModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => ES_ERR_CONFIG,
        Error::Shape(_) => ES_ERR_SHAPE,
        Error::Input(_) => ES_ERR_INPUT,
        Error::Anchor { .. } => ES_ERR_ANCHOR,
        Error::Numeric { .. } | Error::Divergence { .. } => ES_ERR_NUMERIC,
        Error::DegenerateBone { .. } | Error::Normalization(_) => ES_ERR_POSE,
        Error::Format { .. } => ES_ERR_FORMAT,
        Error::Io(_) => ES_ERR_IO,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ES_OK,
        Ok(Err((c, msg))) => {
            set_error(msg);
            c
        }
        Err(_) => {
            set_error("internal panic".into());
            ES_ERR_PANIC
        }
    }
}

fn lib(e: Error) -> (i32, String) {
    (code(&e), e.to_string())
}

fn null(what: &str) -> (i32, String) {
    (ES_ERR_NULL, format!("{what} is NULL"))
}

/// # Safety
/// `p` must be NULL or valid for `len` reads.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (i32, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be NULL or valid for `len` writes.
unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (i32, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn es_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated). Returns the full message length in bytes, or 0
/// when there is none.
///
/// # Safety
/// `buf` must be NULL or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn es_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// The default chirp (17 kHz start, 3 kHz sweep, 512 samples at 48 kHz).
#[no_mangle]
pub extern "C" fn es_chirp_spec_default() -> EsChirpSpec {
    let d = ChirpSpec::default();
    EsChirpSpec {
        start_freq_hz: d.start_freq_hz,
        bandwidth_hz: d.bandwidth_hz,
        chirp_len_samples: d.chirp_len_samples,
        sample_rate_hz: d.sample_rate_hz,
        amplitude: d.amplitude,
        sound_speed_mps: d.sound_speed_mps,
    }
}

/// Write one chirp period into `out` (`len` must equal the chirp length).
///
/// # Safety
/// `spec` must be valid; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn es_chirp_generate(spec: *const EsChirpSpec, out: *mut f64, len: usize) -> i32 {
    guard(|| {
        let spec: ChirpSpec = (*spec.as_ref().ok_or_else(|| null("spec"))?).into();
        let chirp = generate_chirp(&spec).map_err(lib)?;
        if len != chirp.len() {
            return Err((ES_ERR_SHAPE, format!("buffer holds {len}, chirp has {}", chirp.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&chirp.samples);
        Ok(())
    })
}

/// Create a pipeline with default preprocessing settings.
///
/// # Safety
/// `spec` must be valid; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn es_pipeline_new(spec: *const EsChirpSpec, out: *mut *mut EsPipeline) -> i32 {
    guard(|| {
        let spec: ChirpSpec = (*spec.as_ref().ok_or_else(|| null("spec"))?).into();
        spec.validate().map_err(lib)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(EsPipeline {
            spec,
            config: PreprocessConfig::default(),
        }));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a pipeline from `es_pipeline_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn es_pipeline_free(p: *mut EsPipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Range-profile a recording of `channels` channels x `frames` samples,
/// interleaved (`samples[frame * channels + channel]`).
///
/// # Safety
/// `pipeline` must be valid; `samples` valid for `channels * frames` reads;
/// `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn es_preprocess(
    pipeline: *const EsPipeline,
    samples: *const f32,
    channels: usize,
    frames: usize,
    out: *mut *mut EsProfiles,
) -> i32 {
    guard(|| {
        let p = pipeline.as_ref().ok_or_else(|| null("pipeline"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if channels == 0 {
            return Err((ES_ERR_SHAPE, "no channels".into()));
        }
        let total = channels
            .checked_mul(frames)
            .ok_or_else(|| (ES_ERR_SHAPE, "size overflow".into()))?;
        let data = slice(samples, total, "samples")?;
        let mut chans = vec![Vec::with_capacity(frames); channels];
        for frame in data.chunks_exact(channels) {
            for (c, &v) in chans.iter_mut().zip(frame) {
                c.push(f64::from(v));
            }
        }
        let rec = Recording {
            channels: chans,
            sample_rate_hz: p.spec.sample_rate_hz,
        };
        let pre = preprocess(&rec, &p.spec, &p.config).map_err(lib)?;
        let stream = ProfileStream::from_preprocessed(&pre).map_err(lib)?;
        *out = Box::into_raw(Box::new(EsProfiles {
            stream,
            anchor: pre.anchor,
        }));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from `es_preprocess` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn es_profiles_free(p: *mut EsProfiles) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of subtracted profiles, channels and cells.
///
/// # Safety
/// `p` must be valid; each out-pointer NULL or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn es_profiles_shape(
    p: *const EsProfiles,
    count: *mut usize,
    channels: *mut usize,
    cells: *mut usize,
) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("profiles"))?;
        for (dst, v) in [
            (count, p.stream.len()),
            (channels, p.stream.channels),
            (cells, p.stream.cells),
        ] {
            if let Some(d) = dst.as_mut() {
                *d = v;
            }
        }
        Ok(())
    })
}

/// Copy subtracted profile `index` (channel-major, `channels * cells`
/// values) into `out`.
///
/// # Safety
/// `p` must be valid; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn es_profiles_copy(p: *const EsProfiles, index: usize, out: *mut f32, len: usize) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("profiles"))?;
        if index >= p.stream.len() {
            return Err((ES_ERR_INPUT, format!("profile {index} of {}", p.stream.len())));
        }
        let src = p.stream.profile(index);
        if len != src.len() {
            return Err((ES_ERR_SHAPE, format!("buffer holds {len}, profile has {}", src.len())));
        }
        slice_mut(out, len, "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// Direct-path anchor cell of `channel`.
///
/// # Safety
/// `p` must be valid; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn es_profiles_anchor(p: *const EsProfiles, channel: usize, out: *mut usize) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("profiles"))?;
        let v = *p
            .anchor
            .anchor_cell
            .get(channel)
            .ok_or_else(|| (ES_ERR_INPUT, format!("channel {channel} out of range")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Copy the 50-profile feature window starting at profile `start` into
/// `out` (`channels * cells * 50` values, layout channel, cell, profile).
///
/// # Safety
/// `p` must be valid; `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn es_profiles_window(p: *const EsProfiles, start: usize, out: *mut f32, len: usize) -> i32 {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("profiles"))?;
        if start + WINDOW_PROFILES > p.stream.len() {
            return Err((
                ES_ERR_INPUT,
                format!("window at {start} runs past {} profiles", p.stream.len()),
            ));
        }
        p.stream.fill_window(start, 0, slice_mut(out, len, "out")?).map_err(lib)
    })
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn es_model_load(path: *const c_char, out: *mut *mut EsModel) -> i32 {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (ES_ERR_INPUT, "path is not UTF-8".to_string()))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let file = File::open(path).map_err(|e| (ES_ERR_IO, format!("{path}: {e}")))?;
        let ck = read_checkpoint(&mut BufReader::new(file)).map_err(lib)?;
        *out = Box::into_raw(Box::new(EsModel { model: ck.model }));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a handle from `es_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn es_model_free(m: *mut EsModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Values in one input window the model expects.
///
/// # Safety
/// `m` must be valid; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn es_model_input_len(m: *const EsModel, out: *mut usize) -> i32 {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.model.config.input_len();
        Ok(())
    })
}

/// Predict a pose (63 doubles) from one feature window.
///
/// # Safety
/// `m` must be valid; `window` valid for `len` reads; `pose_out` valid for
/// 63 writes.
#[no_mangle]
pub unsafe extern "C" fn es_model_predict(
    m: *const EsModel,
    window: *const f32,
    len: usize,
    pose_out: *mut f64,
) -> i32 {
    guard(|| {
        let m = &m.as_ref().ok_or_else(|| null("model"))?.model;
        let raw = slice(window, len, "window")?;
        let mut input = vec![0.0; m.config.input_len()];
        m.prepare_input(raw, &mut input).map_err(lib)?;
        let pred = m.predict_batch(&input, 1).map_err(lib)?;
        slice_mut(pose_out, NUM_COORDS, "pose_out")?.copy_from_slice(&pred);
        Ok(())
    })
}

unsafe fn read_pose(p: *const f64, what: &str) -> Result<HandPose, (i32, String)> {
    HandPose::from_flat(slice(p, NUM_COORDS, what)?).map_err(lib)
}

/// The 19 bone flexion angles in degrees.
///
/// # Safety
/// `pose` valid for 63 reads; `out` valid for 19 writes.
#[no_mangle]
pub unsafe extern "C" fn es_flexion_angles(pose: *const f64, out: *mut f64) -> i32 {
    guard(|| {
        let a = flexion_angles(&read_pose(pose, "pose")?).map_err(lib)?;
        slice_mut(out, NUM_BONES, "out")?.copy_from_slice(&a.degrees);
        Ok(())
    })
}

/// Negative mean absolute error between the palm-normalised poses.
///
/// # Safety
/// `pose` and `template_pose` valid for 63 reads; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn es_activation_similarity(pose: *const f64, template_pose: *const f64, out: *mut f64) -> i32 {
    guard(|| {
        let t = ActivationTemplate::new(&read_pose(template_pose, "template_pose")?, 0.0).map_err(lib)?;
        let s = activation_similarity(&read_pose(pose, "pose")?, &t).map_err(lib)?;
        *out.as_mut().ok_or_else(|| null("out"))? = s;
        Ok(())
    })
}
