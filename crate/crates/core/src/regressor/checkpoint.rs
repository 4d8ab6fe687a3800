//! Self-describing model checkpoints (`BVCK`).
//!
//! ```text
//! "BVCK" | version u16 | meta_len u32 | meta (JSON: config, stage, history)
//!        | tensor_count u32 | tensors...
//! tensor: kind u8 (0 param, 1 buffer) | name_len u16 | name | rank u16
//!         | dims u64[rank] | f32[product(dims)]
//! ```
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Tensors};
use crate::error::{Error, Result};
use crate::skeleton::JOINT_ORDER_VERSION;

const MAGIC: &[u8; 4] = b"BVCK";
const VERSION: u16 = 1;
const KIND: &str = "checkpoint";

/// Metrics of one finished training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub tag: String,
    pub steps: usize,
    pub samples: usize,
    /// Mean training loss over the last curve interval.
    pub train_mse: Option<f64>,
    pub val_mse: Option<f64>,
    /// Mean training loss per interval.
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Stage after which this checkpoint was taken.
    pub stage: String,
    pub history: Vec<StageRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    joint_order_version: u16,
    config: ModelConfig,
    stage: String,
    history: Vec<StageRecord>,
}

impl Checkpoint {
    pub fn new(model: Model, stage: &str, history: Vec<StageRecord>) -> Self {
        Self {
            model,
            stage: stage.to_string(),
            history,
        }
    }
}

fn write_tensors(w: &mut impl Write, kind: u8, t: &Tensors) -> Result<()> {
    for (name, shape, range) in &t.entries {
        w.write_all(&[kind])?;
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u16).to_le_bytes())?;
        for d in shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &t.values[range.clone()] {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_checkpoint(w: &mut impl Write, ckpt: &Checkpoint) -> Result<()> {
    let meta = Meta {
        joint_order_version: JOINT_ORDER_VERSION,
        config: ckpt.model.config.clone(),
        stage: ckpt.stage.clone(),
        history: ckpt.history.clone(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::format(KIND, e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let count = ckpt.model.params.entries.len() + ckpt.model.buffers.entries.len();
    w.write_all(&(count as u32).to_le_bytes())?;
    write_tensors(w, 0, &ckpt.model.params)?;
    write_tensors(w, 1, &ckpt.model.buffers)?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::format(KIND, format!("truncated: {e}")))?;
    Ok(b)
}

fn take_vec(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    r.take(n as u64).read_to_end(&mut b)?;
    if b.len() != n {
        return Err(Error::format(KIND, "truncated"));
    }
    Ok(b)
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    if &take::<4>(r)? != MAGIC {
        return Err(Error::format(KIND, "bad magic"));
    }
    let v = u16::from_le_bytes(take(r)?);
    if v != VERSION {
        return Err(Error::format(KIND, format!("unsupported version {v}")));
    }
    let meta_len = u32::from_le_bytes(take(r)?) as usize;
    let meta: Meta =
        serde_json::from_slice(&take_vec(r, meta_len)?).map_err(|e| Error::format(KIND, format!("metadata: {e}")))?;
    if meta.joint_order_version != JOINT_ORDER_VERSION {
        return Err(Error::format(
            KIND,
            format!("joint order version {}", meta.joint_order_version),
        ));
    }
    let mut model = Model::zeros(&meta.config)?;
    let count = u32::from_le_bytes(take(r)?) as usize;
    if count != model.params.entries.len() + model.buffers.entries.len() {
        return Err(Error::format(KIND, format!("{count} tensors do not match the config")));
    }
    for _ in 0..count {
        let [kind] = take::<1>(r)?;
        let name_len = u16::from_le_bytes(take(r)?) as usize;
        let name =
            String::from_utf8(take_vec(r, name_len)?).map_err(|_| Error::format(KIND, "tensor name is not UTF-8"))?;
        let rank = u16::from_le_bytes(take(r)?) as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u64::from_le_bytes(take(r)?) as usize);
        }
        let target = match kind {
            0 => &mut model.params,
            1 => &mut model.buffers,
            _ => return Err(Error::format(KIND, format!("tensor kind {kind}"))),
        };
        let entry = target
            .entries
            .iter()
            .find(|e| e.0 == name)
            .cloned()
            .ok_or_else(|| Error::format(KIND, format!("unexpected tensor {name}")))?;
        if entry.1 != dims {
            return Err(Error::format(
                KIND,
                format!("{name} has shape {dims:?}, config implies {:?}", entry.1),
            ));
        }
        let bytes = take_vec(r, entry.2.len() * 4)?;
        for (dst, c) in target.values[entry.2].iter_mut().zip(bytes.chunks_exact(4)) {
            *dst = f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format(KIND, "trailing bytes"));
    }
    if model
        .params
        .values
        .iter()
        .chain(&model.buffers.values)
        .any(|v| !v.is_finite())
    {
        return Err(Error::format(KIND, "non-finite parameter"));
    }
    Ok(Checkpoint {
        model,
        stage: meta.stage,
        history: meta.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig {
            input_channels: 2,
            input_cells: 16,
            conv_channels: [3, 4],
            hidden: 5,
            seed: 4,
            ..ModelConfig::default()
        };
        let model = Model::new(&cfg).unwrap();
        let ck = Checkpoint::new(
            model,
            "2-finger",
            vec![StageRecord {
                tag: "1-finger".into(),
                steps: 3,
                samples: 10,
                train_mse: Some(12.5),
                val_mse: None,
                loss_curve: vec![20.0, 0.1 + 0.2],
            }],
        );
        let mut a = Vec::new();
        write_checkpoint(&mut a, &ck).unwrap();
        let back = read_checkpoint(&mut a.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut b = Vec::new();
        write_checkpoint(&mut b, &back).unwrap();
        assert_eq!(a, b);
        assert!(read_checkpoint(&mut &a[..a.len() - 2]).is_err());
    }
}
