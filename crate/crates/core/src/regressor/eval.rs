//! Error metrics of a trained model.

use std::io::Write;

use serde::Serialize;

use super::train::load_batch;
use super::Model;
use crate::dataset::WindowSource;
use crate::error::{Error, Result};
use crate::skeleton::{bones, joint_finger, joint_name, Finger, HandPose, NUM_BONES, NUM_COORDS, NUM_JOINTS};

/// Mean absolute errors in mm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    /// Mean over samples and all 63 coordinates of |pred - label|.
    pub mae_mm: f64,
    /// Median over samples of the per-sample coordinate MAE.
    pub median_mae_mm: f64,
    /// Mean Euclidean joint error.
    pub mean_joint_distance_mm: f64,
    pub mse_mm2: f64,
    /// Coordinate MAE per joint.
    pub per_joint: Vec<f64>,
    /// Coordinate MAE per finger (its joints), plus "palm" for wrist and palm.
    pub per_finger: Vec<(String, f64)>,
    /// Mean |predicted - true| bone length per bone.
    pub per_bone: Vec<(String, f64)>,
}

impl EvalReport {
    /// Breakdown as CSV rows `group,name,mae_mm`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::format("report", e.to_string());
        out.write_record(["group", "name", "mae_mm"]).map_err(err)?;
        out.write_record(["overall", "mae", &self.mae_mm.to_string()])
            .map_err(err)?;
        out.write_record(["overall", "median_mae", &self.median_mae_mm.to_string()])
            .map_err(err)?;
        out.write_record(["overall", "joint_distance", &self.mean_joint_distance_mm.to_string()])
            .map_err(err)?;
        for (j, v) in self.per_joint.iter().enumerate() {
            out.write_record(["joint", &joint_name(j), &v.to_string()])
                .map_err(err)?;
        }
        for (f, v) in &self.per_finger {
            out.write_record(["finger", f, &v.to_string()]).map_err(err)?;
        }
        for (b, v) in &self.per_bone {
            out.write_record(["bone", b, &v.to_string()]).map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Metrics from prediction/label pairs.
pub fn report_from_pairs(pairs: &[([f64; NUM_COORDS], [f64; NUM_COORDS])]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let n = pairs.len() as f64;
    let mut per_joint = vec![0.0; NUM_JOINTS];
    let mut per_bone = vec![0.0; NUM_BONES];
    let mut dist = 0.0;
    let mut mse = 0.0;
    let mut sample_mae = Vec::with_capacity(pairs.len());
    let bone_list = bones();
    for (pred, label) in pairs {
        let mut s = 0.0;
        for j in 0..NUM_JOINTS {
            let mut d2 = 0.0;
            for a in 0..3 {
                let e = pred[3 * j + a] - label[3 * j + a];
                per_joint[j] += e.abs() / (3.0 * n);
                s += e.abs() / NUM_COORDS as f64;
                mse += e * e / (n * NUM_COORDS as f64);
                d2 += e * e;
            }
            dist += d2.sqrt() / (n * NUM_JOINTS as f64);
        }
        sample_mae.push(s);
        let (p, l) = (HandPose::from_flat(pred)?, HandPose::from_flat(label)?);
        for (i, b) in bone_list.iter().enumerate() {
            per_bone[i] += (p.bone_length(b) - l.bone_length(b)).abs() / n;
        }
    }
    let mae = sample_mae.iter().sum::<f64>() / n;
    sample_mae.sort_by(f64::total_cmp);
    let m = sample_mae.len();
    let median = if m % 2 == 1 {
        sample_mae[m / 2]
    } else {
        0.5 * (sample_mae[m / 2 - 1] + sample_mae[m / 2])
    };
    let mut per_finger = Vec::new();
    for f in Finger::ALL {
        let js: Vec<usize> = (0..NUM_JOINTS).filter(|&j| joint_finger(j) == Some(f)).collect();
        per_finger.push((
            f.name().to_string(),
            js.iter().map(|&j| per_joint[j]).sum::<f64>() / js.len() as f64,
        ));
    }
    let palm: Vec<usize> = (0..NUM_JOINTS).filter(|&j| joint_finger(j).is_none()).collect();
    per_finger.push((
        "palm".into(),
        palm.iter().map(|&j| per_joint[j]).sum::<f64>() / palm.len() as f64,
    ));
    Ok(EvalReport {
        samples: pairs.len(),
        mae_mm: mae,
        median_mae_mm: median,
        mean_joint_distance_mm: dist,
        mse_mm2: mse,
        per_joint,
        per_finger,
        per_bone: bone_list.iter().map(|b| b.name()).zip(per_bone).collect(),
    })
}

/// Evaluation-mode predictions with their labels, one pair per sample.
pub fn predict(model: &Model, data: &dyn WindowSource) -> Result<Vec<([f64; NUM_COORDS], [f64; NUM_COORDS])>> {
    let mut raw = vec![0.0f32; model.config.input_len()];
    let mut inputs = Vec::new();
    let mut pairs = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(model.config.batch_size) {
        let labels = load_batch(model, data, chunk, &mut raw, &mut inputs)?;
        let out = model.predict_batch(&inputs, chunk.len())?;
        for (b, l) in labels.into_iter().enumerate() {
            let mut p = [0.0; NUM_COORDS];
            p.copy_from_slice(&out[b * NUM_COORDS..(b + 1) * NUM_COORDS]);
            pairs.push((p, l));
        }
    }
    Ok(pairs)
}

/// Evaluation-mode metrics of `model` over every sample of `data`.
pub fn evaluate(model: &Model, data: &dyn WindowSource) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    report_from_pairs(&predict(model, data)?)
}
