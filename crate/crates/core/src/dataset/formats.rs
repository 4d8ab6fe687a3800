//! Binary audio and tensor files, pose CSV and session manifests.
//!
//! Audio (`BVAU`) and tensor (`BVTN`) files share a layout: four magic
//! bytes, a little-endian header, then little-endian `f32` payload.
//!
//! ```text
//! BVAU  version u16 | channels u16 | sample_rate u32 | samples u64 | f32[samples * channels], interleaved
//! BVTN  version u16 | rank u16 | dims u64[rank] | f32[product(dims)], row-major
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::chirp::{ChirpSpec, Recording};
use crate::error::{Error, Result};
use crate::sim::{GestureKind, TimedPose};
use crate::skeleton::{HandPose, NUM_COORDS, NUM_JOINTS};

const AUDIO_MAGIC: &[u8; 4] = b"BVAU";
const TENSOR_MAGIC: &[u8; 4] = b"BVTN";
const FORMAT_VERSION: u16 = 1;

fn read_exact<const N: usize>(r: &mut impl Read, kind: &'static str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::format(kind, format!("truncated header: {e}")))?;
    Ok(b)
}

fn read_magic(r: &mut impl Read, magic: &[u8; 4], kind: &'static str) -> Result<()> {
    let m: [u8; 4] = read_exact(r, kind)?;
    if &m != magic {
        return Err(Error::format(kind, format!("bad magic {m:?}")));
    }
    let v = u16::from_le_bytes(read_exact(r, kind)?);
    if v != FORMAT_VERSION {
        return Err(Error::format(kind, format!("unsupported version {v}")));
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, count: usize, kind: &'static str) -> Result<Vec<f32>> {
    let bytes = count
        .checked_mul(4)
        .ok_or_else(|| Error::format(kind, "payload size overflows"))?;
    let mut buf = Vec::new();
    r.take(bytes as u64).read_to_end(&mut buf)?;
    if buf.len() != bytes {
        return Err(Error::format(
            kind,
            format!("payload has {} bytes, header promises {bytes}", buf.len()),
        ));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format(kind, "trailing bytes after payload"));
    }
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_f32s(w: &mut impl Write, values: impl Iterator<Item = f32>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Write a recording as interleaved `f32` samples.
pub fn write_audio(w: &mut impl Write, rec: &Recording) -> Result<()> {
    let channels =
        u16::try_from(rec.num_channels()).map_err(|_| Error::Input("too many channels for the audio format".into()))?;
    let len = rec.len();
    if rec.channels.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("channels differ in length".into()));
    }
    w.write_all(AUDIO_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&channels.to_le_bytes())?;
    w.write_all(&rec.sample_rate_hz.to_le_bytes())?;
    w.write_all(&(len as u64).to_le_bytes())?;
    write_f32s(w, (0..len).flat_map(|i| rec.channels.iter().map(move |c| c[i] as f32)))
}

pub fn read_audio(r: &mut impl Read) -> Result<Recording> {
    const KIND: &str = "audio";
    read_magic(r, AUDIO_MAGIC, KIND)?;
    let channels = u16::from_le_bytes(read_exact(r, KIND)?) as usize;
    let sample_rate_hz = u32::from_le_bytes(read_exact(r, KIND)?);
    let len = u64::from_le_bytes(read_exact(r, KIND)?) as usize;
    if channels == 0 || sample_rate_hz == 0 {
        return Err(Error::format(KIND, "zero channels or sample rate"));
    }
    let total = len
        .checked_mul(channels)
        .ok_or_else(|| Error::format(KIND, "sample count overflows"))?;
    let flat = read_f32s(r, total, KIND)?;
    let mut out = vec![Vec::with_capacity(len); channels];
    for frame in flat.chunks_exact(channels) {
        for (c, v) in out.iter_mut().zip(frame) {
            c.push(f64::from(*v));
        }
    }
    Ok(Recording {
        channels: out,
        sample_rate_hz,
    })
}

/// Dense row-major `f32` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {n} values, data has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    let rank = u16::try_from(t.dims.len()).map_err(|_| Error::Input("tensor rank too large".into()))?;
    if t.dims.iter().product::<usize>() != t.data.len() {
        return Err(Error::Shape("tensor dims do not match data".into()));
    }
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&rank.to_le_bytes())?;
    for d in &t.dims {
        w.write_all(&(*d as u64).to_le_bytes())?;
    }
    write_f32s(w, t.data.iter().copied())
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    const KIND: &str = "tensor";
    read_magic(r, TENSOR_MAGIC, KIND)?;
    let rank = u16::from_le_bytes(read_exact(r, KIND)?) as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut total: usize = 1;
    for _ in 0..rank {
        let d = u64::from_le_bytes(read_exact(r, KIND)?) as usize;
        total = total
            .checked_mul(d)
            .ok_or_else(|| Error::format(KIND, "element count overflows"))?;
        dims.push(d);
    }
    let data = read_f32s(r, total, KIND)?;
    Ok(Tensor { dims, data })
}

fn pose_header() -> Vec<String> {
    let mut h = vec!["timestamp_us".to_string()];
    for j in 0..NUM_JOINTS {
        for axis in ["x", "y", "z"] {
            h.push(format!("j{j:02}_{axis}"));
        }
    }
    h
}

/// Write timestamped poses as CSV, coordinates in mm with shortest
/// round-trip formatting.
pub fn write_poses(w: impl Write, poses: &[TimedPose]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::format("pose", e.to_string());
    out.write_record(pose_header()).map_err(csv_err)?;
    for p in poses {
        let mut rec = Vec::with_capacity(NUM_COORDS + 1);
        rec.push(p.timestamp_us.to_string());
        rec.extend(p.pose.to_flat().iter().map(|v| v.to_string()));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_poses(r: impl Read) -> Result<Vec<TimedPose>> {
    const KIND: &str = "pose";
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| Error::format(KIND, e.to_string()))?.clone();
    if header.iter().ne(pose_header().iter().map(String::as_str)) {
        return Err(Error::format(KIND, "unexpected header"));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(KIND, e.to_string()))?;
        let bad = |what: &str| Error::format(KIND, format!("row {}: {what}", line + 1));
        let timestamp_us: i64 = rec[0].parse().map_err(|_| bad("bad timestamp"))?;
        let coords = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad coordinate")))
            .collect::<Result<Vec<_>>>()?;
        let pose = HandPose::from_flat(&coords).map_err(|e| bad(&e.to_string()))?;
        out.push(TimedPose { timestamp_us, pose });
    }
    Ok(out)
}

/// Description of one recorded session, stored as TOML.
///
/// ```toml
/// session_id = "s01-mixed-0"
/// subject_id = "s01"
/// room = "lab"          # optional
/// stage = "mixed"       # 1-finger .. 5-finger, mixed
/// audio = "s01-mixed-0.bvau"
/// poses = "s01-mixed-0.csv"
/// seed = 7
///
/// [chirp]
/// start_freq_hz = 17000.0
/// # ...
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub session_id: String,
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<String>,
    pub stage: GestureKind,
    /// Audio file, relative to the manifest's directory.
    pub audio: String,
    /// Ground-truth pose file, relative to the manifest's directory.
    pub poses: String,
    pub seed: u64,
    pub chirp: ChirpSpec,
}

impl Default for SessionManifest {
    fn default() -> Self {
        Self {
            session_id: String::new(),
            subject_id: String::new(),
            room: None,
            stage: GestureKind::Mixed,
            audio: String::new(),
            poses: String::new(),
            seed: 0,
            chirp: ChirpSpec::default(),
        }
    }
}

impl SessionManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("manifest", e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let m: Self = toml::from_str(s).map_err(|e| Error::format("manifest", e.to_string()))?;
        m.chirp.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{hand_pose_from_params, HandKinematicParams, HandModel};

    #[test]
    fn audio_header_layout() {
        let rec = Recording {
            channels: vec![vec![0.5, -1.0], vec![0.25, 2.0]],
            sample_rate_hz: 48_000,
        };
        let mut buf = Vec::new();
        write_audio(&mut buf, &rec).unwrap();
        assert_eq!(&buf[..4], b"BVAU");
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 2);
        assert_eq!(buf.len(), 4 + 2 + 2 + 4 + 8 + 16);
        assert_eq!(f32::from_le_bytes(buf[24..28].try_into().unwrap()), 0.25);
        assert_eq!(read_audio(&mut buf.as_slice()).unwrap(), rec);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let t = Tensor::new(vec![2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let mut buf = Vec::new();
        write_tensor(&mut buf, &t).unwrap();
        assert!(matches!(
            read_tensor(&mut &buf[..buf.len() - 1]),
            Err(Error::Format { .. })
        ));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_tensor(&mut extra.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_tensor(&mut buf.as_slice()).is_err());
        assert!(read_audio(&mut &b"BVAU"[..]).is_err());
    }

    #[test]
    fn pose_csv_header_and_values() {
        let pose = hand_pose_from_params(&HandKinematicParams::default(), &HandModel::default()).unwrap();
        let rows = vec![TimedPose {
            timestamp_us: 10_000,
            pose,
        }];
        let mut buf = Vec::new();
        write_poses(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_us,j00_x,j00_y,j00_z,j01_x"));
        assert!(text.lines().next().unwrap().ends_with("j20_z"));
        assert_eq!(read_poses(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn manifest_round_trip_and_unknown_field() {
        let m = SessionManifest {
            session_id: "a".into(),
            subject_id: "s1".into(),
            room: Some("lab".into()),
            stage: GestureKind::Fingers(3),
            audio: "a.bvau".into(),
            poses: "a.csv".into(),
            seed: 3,
            chirp: ChirpSpec::default(),
        };
        let s = m.to_toml().unwrap();
        assert!(s.contains("stage = \"3-finger\""));
        assert_eq!(SessionManifest::from_toml(&s).unwrap(), m);
        assert!(SessionManifest::from_toml(&format!("bogus = 1\n{s}")).is_err());
    }
}
