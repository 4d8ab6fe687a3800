//! CNN + LSTM joint regressor.
//!
//! A feature window `(channels, cells, 50)` is cut into 10 folds of 5
//! consecutive profiles. Every fold goes through the same backbone of two
//! `conv -> batch norm -> ReLU -> max pool` blocks; the flattened fold
//! embeddings are fed in time order to an LSTM whose last hidden state is
//! mapped to 63 coordinates by a linear head.
//!
//! The head predicts in label units through fixed per-coordinate offsets and
//! scales (`head.mean`, `head.scale`), set from the first training stage's
//! labels, so the trainable part works on standardised targets.
//!
//! Everything is computed in `f64`; parameters and buffers are kept exactly
//! representable in `f32` so checkpoints reload bit-identically.

pub mod checkpoint;
pub mod eval;
pub mod layers;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, StageRecord};
pub use eval::{evaluate, predict, report_from_pairs, EvalReport};
pub use train::{train_curriculum, train_plain, ConcatSource, TrainStage};

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureWindow, WINDOW_PROFILES};
use crate::error::{Error, Result};
use crate::skeleton::{HandPose, NUM_COORDS};
use layers::*;

/// Architecture and optimiser settings, stored in every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub input_cells: usize,
    /// Output channels of the two convolutions.
    pub conv_channels: [usize; 2],
    /// Odd square kernel sizes.
    pub kernel_sizes: [usize; 2],
    pub pool_sizes: [usize; 2],
    pub hidden: usize,
    pub folds: usize,
    pub outputs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_stage: usize,
    /// Overrides `epochs_per_stage` when set.
    pub steps_per_stage: Option<usize>,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 7,
            input_cells: 256,
            conv_channels: [16, 32],
            kernel_sizes: [3, 3],
            pool_sizes: [2, 2],
            hidden: 128,
            folds: 10,
            outputs: NUM_COORDS,
            seed: 0,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs_per_stage: 5,
            steps_per_stage: None,
            bn_momentum: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn slices_per_fold(&self) -> usize {
        WINDOW_PROFILES / self.folds.max(1)
    }

    /// Spatial size (slices, cells) after both pooling stages.
    pub fn pooled_shape(&self) -> (usize, usize) {
        let [p1, p2] = self.pool_sizes;
        (self.slices_per_fold() / p1 / p2, self.input_cells / p1 / p2)
    }

    /// Length of one fold embedding.
    pub fn feature_dim(&self) -> usize {
        let (w, h) = self.pooled_shape();
        self.conv_channels[1] * w * h
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_cells * WINDOW_PROFILES
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.outputs != NUM_COORDS {
            return bad(format!("outputs must be {NUM_COORDS}, got {}", self.outputs));
        }
        if self.folds == 0 || self.folds * self.slices_per_fold() != WINDOW_PROFILES {
            return bad(format!("{} folds do not divide {WINDOW_PROFILES} profiles", self.folds));
        }
        if self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return bad("kernel sizes must be odd".into());
        }
        if self.pool_sizes.contains(&0)
            || self.conv_channels.contains(&0)
            || self.hidden == 0
            || self.input_channels == 0
        {
            return bad("layer sizes must be positive".into());
        }
        if self.feature_dim() == 0 {
            return bad("pooling leaves no features per fold".into());
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return bad("batch size and learning rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("bn_momentum must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// Named tensors packed into one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub entries: Vec<(String, Vec<usize>, Range<usize>)>,
    pub values: Vec<f64>,
}

impl Tensors {
    fn build(spec: &[(&str, Vec<usize>)]) -> Self {
        let mut entries = Vec::with_capacity(spec.len());
        let mut off = 0;
        for (name, shape) in spec {
            let n: usize = shape.iter().product();
            entries.push((name.to_string(), shape.clone(), off..off + n));
            off += n;
        }
        Self {
            entries,
            values: vec![0.0; off],
        }
    }

    pub fn range(&self, name: &str) -> Range<usize> {
        self.entries
            .iter()
            .find(|e| e.0 == name)
            .map(|e| e.2.clone())
            .unwrap_or_else(|| panic!("no tensor named {name}"))
    }

    pub fn get(&self, name: &str) -> &[f64] {
        &self.values[self.range(name)]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.range(name);
        &mut self.values[r]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Name of the tensor holding flat index `i`.
    pub fn owner(&self, i: usize) -> &str {
        self.entries
            .iter()
            .find(|e| e.2.contains(&i))
            .map_or("?", |e| e.0.as_str())
    }
}

pub(crate) fn round_f32(v: &mut [f64]) {
    for x in v {
        *x = f64::from(*x as f32);
    }
}

/// Network weights plus non-trainable buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Tensors,
    pub buffers: Tensors,
}

/// Per-batch normalisation statistics from a training forward pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub bn1: (Vec<f64>, Vec<f64>),
    pub bn2: (Vec<f64>, Vec<f64>),
}

pub(crate) struct TrainCache {
    batch: usize,
    a0: Act,
    bn1: BnCache,
    r1: Act,
    idx1: Vec<usize>,
    p1: Act,
    bn2: BnCache,
    r2: Act,
    idx2: Vec<usize>,
    p2: Act,
    lstm: layers::LstmCache,
    last: Vec<f64>,
}

fn check_finite(layer: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Numeric {
            layer: layer.to_string(),
            detail: format!("entry {i} is {}", v[i]),
        }),
    }
}

impl Model {
    /// All-zero parameters, identity output normalisation.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let [c1, c2] = config.conv_channels;
        let [k1, k2] = config.kernel_sizes;
        let (h, d) = (config.hidden, config.feature_dim());
        let params = Tensors::build(&[
            ("conv1.weight", vec![c1, config.input_channels, k1, k1]),
            ("bn1.gamma", vec![c1]),
            ("bn1.beta", vec![c1]),
            ("conv2.weight", vec![c2, c1, k2, k2]),
            ("bn2.gamma", vec![c2]),
            ("bn2.beta", vec![c2]),
            ("lstm.w_ih", vec![4 * h, d]),
            ("lstm.w_hh", vec![4 * h, h]),
            ("lstm.bias", vec![4 * h]),
            ("head.weight", vec![config.outputs, h]),
            ("head.bias", vec![config.outputs]),
        ]);
        let mut buffers = Tensors::build(&[
            ("bn1.running_mean", vec![c1]),
            ("bn1.running_var", vec![c1]),
            ("bn2.running_mean", vec![c2]),
            ("bn2.running_var", vec![c2]),
            ("head.mean", vec![config.outputs]),
            ("head.scale", vec![config.outputs]),
        ]);
        buffers.get_mut("bn1.running_var").fill(1.0);
        buffers.get_mut("bn2.running_var").fill(1.0);
        buffers.get_mut("head.scale").fill(1.0);
        Ok(Self {
            config: config.clone(),
            params,
            buffers,
        })
    }

    /// Seeded initialisation: He-normal convolutions, unit batch-norm
    /// scales, uniform LSTM weights with forget bias 1, small head.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let [c1, _] = config.conv_channels;
        let [k1, k2] = config.kernel_sizes;
        let he = |fan_in: usize| Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        let n1 = he(config.input_channels * k1 * k1);
        for v in m.params.get_mut("conv1.weight") {
            *v = n1.sample(&mut rng);
        }
        let n2 = he(c1 * k2 * k2);
        for v in m.params.get_mut("conv2.weight") {
            *v = n2.sample(&mut rng);
        }
        m.params.get_mut("bn1.gamma").fill(1.0);
        m.params.get_mut("bn2.gamma").fill(1.0);
        let h = config.hidden;
        let a = 1.0 / (h as f64).sqrt();
        for name in ["lstm.w_ih", "lstm.w_hh"] {
            for v in m.params.get_mut(name) {
                *v = rng.gen_range(-a..a);
            }
        }
        m.params.get_mut("lstm.bias")[h..2 * h].fill(1.0);
        let b = 0.1 / (h as f64).sqrt();
        for v in m.params.get_mut("head.weight") {
            *v = rng.gen_range(-b..b);
        }
        round_f32(&mut m.params.values);
        Ok(m)
    }

    /// Set the head's output offsets and scales to the per-coordinate mean
    /// and standard deviation of `labels` (scales floored at 1 mm).
    pub fn set_output_normalization(&mut self, labels: &[[f64; NUM_COORDS]]) -> Result<()> {
        if labels.is_empty() {
            return Err(Error::Input("no labels to normalise against".into()));
        }
        let n = labels.len() as f64;
        let mut mean = [0.0; NUM_COORDS];
        for l in labels {
            for (m, v) in mean.iter_mut().zip(l) {
                *m += v / n;
            }
        }
        let mut scale = [0.0; NUM_COORDS];
        for l in labels {
            for ((s, v), m) in scale.iter_mut().zip(l).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut scale {
            *s = s.sqrt().max(1.0);
        }
        self.buffers.get_mut("head.mean").copy_from_slice(&mean);
        self.buffers.get_mut("head.scale").copy_from_slice(&scale);
        round_f32(&mut self.buffers.values);
        Ok(())
    }

    /// Per-channel max scaling of a raw `(channel, cell, slice)` window to
    /// `[0, 1]`; silent channels stay zero.
    pub fn prepare_input(&self, raw: &[f32], out: &mut [f64]) -> Result<()> {
        let len = self.config.input_len();
        if raw.len() != len || out.len() != len {
            return Err(Error::Shape(format!(
                "input of {} values, model expects {len}",
                raw.len()
            )));
        }
        let per = len / self.config.input_channels;
        for (src, dst) in raw.chunks_exact(per).zip(out.chunks_exact_mut(per)) {
            let max = src.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            let inv = if max > 0.0 { 1.0 / f64::from(max) } else { 0.0 };
            for (d, s) in dst.iter_mut().zip(src) {
                *d = f64::from(*s) * inv;
            }
        }
        Ok(())
    }

    /// Prediction for one window in evaluation mode.
    pub fn forward(&self, window: &FeatureWindow) -> Result<[f64; NUM_COORDS]> {
        if (window.channels, window.cells) != (self.config.input_channels, self.config.input_cells) {
            return Err(Error::Shape(format!(
                "window {}x{} but model expects {}x{}",
                window.channels, window.cells, self.config.input_channels, self.config.input_cells
            )));
        }
        let mut x = vec![0.0; self.config.input_len()];
        self.prepare_input(&window.tensor, &mut x)?;
        let out = self.predict_batch(&x, 1)?;
        let mut r = [0.0; NUM_COORDS];
        r.copy_from_slice(&out);
        Ok(r)
    }

    /// Evaluation-mode predictions for `batch` prepared inputs.
    pub fn predict_batch(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.run(inputs, batch, false)?.0)
    }

    fn folds_to_act(&self, inputs: &[f64], batch: usize) -> Result<Act> {
        let cfg = &self.config;
        if inputs.len() != batch * cfg.input_len() {
            return Err(Error::Shape(format!(
                "{} input values for a batch of {batch}",
                inputs.len()
            )));
        }
        let (f, s) = (cfg.folds, cfg.slices_per_fold());
        let (c, h) = (cfg.input_channels, cfg.input_cells);
        let mut a = Act::zeros(batch * f, c, s, h);
        for b in 0..batch {
            let base = b * cfg.input_len();
            for fold in 0..f {
                let n = b * f + fold;
                for ch in 0..c {
                    let p = a.plane(n, ch);
                    for x in 0..s {
                        for y in 0..h {
                            a.data[p + x * h + y] = inputs[base + (ch * h + y) * WINDOW_PROFILES + fold * s + x];
                        }
                    }
                }
            }
        }
        Ok(a)
    }

    fn run(&self, inputs: &[f64], batch: usize, train: bool) -> Result<(Vec<f64>, Option<TrainCache>)> {
        let cfg = &self.config;
        let p = &self.params;
        let bufs = &self.buffers;
        let [c1, c2] = cfg.conv_channels;
        let [k1, k2] = cfg.kernel_sizes;
        let [q1, q2] = cfg.pool_sizes;
        let a0 = self.folds_to_act(inputs, batch)?;
        let z1 = conv_forward(&a0, p.get("conv1.weight"), c1, k1);
        let running1 = (!train).then(|| (bufs.get("bn1.running_mean"), bufs.get("bn1.running_var")));
        let (mut r1, bn1) = bn_forward(&z1, p.get("bn1.gamma"), p.get("bn1.beta"), running1);
        drop(z1);
        relu_forward(&mut r1);
        let (p1, idx1) = maxpool_forward(&r1, q1);
        let z2 = conv_forward(&p1, p.get("conv2.weight"), c2, k2);
        let running2 = (!train).then(|| (bufs.get("bn2.running_mean"), bufs.get("bn2.running_var")));
        let (mut r2, bn2) = bn_forward(&z2, p.get("bn2.gamma"), p.get("bn2.beta"), running2);
        drop(z2);
        relu_forward(&mut r2);
        let (p2, idx2) = maxpool_forward(&r2, q2);
        check_finite("conv backbone", &p2.data)?;
        let d = cfg.feature_dim();
        let (last, lstm) = lstm_forward(
            &p2.data,
            batch,
            cfg.folds,
            d,
            cfg.hidden,
            p.get("lstm.w_ih"),
            p.get("lstm.w_hh"),
            p.get("lstm.bias"),
        );
        check_finite("lstm", &last)?;
        let out = self.head(&last, batch);
        check_finite("head", &out)?;
        let cache = if train {
            Some(TrainCache {
                batch,
                a0,
                bn1: bn1.expect("training-mode cache"),
                r1,
                idx1,
                p1,
                bn2: bn2.expect("training-mode cache"),
                r2,
                idx2,
                p2,
                lstm,
                last,
            })
        } else {
            None
        };
        Ok((out, cache))
    }

    fn head(&self, last: &[f64], batch: usize) -> Vec<f64> {
        let (h, o) = (self.config.hidden, self.config.outputs);
        let w = self.params.get("head.weight");
        let bias = self.params.get("head.bias");
        let mean = self.buffers.get("head.mean");
        let scale = self.buffers.get("head.scale");
        let mut out = vec![0.0; batch * o];
        for b in 0..batch {
            let hb = &last[b * h..(b + 1) * h];
            for j in 0..o {
                let z: f64 = bias[j] + w[j * h..(j + 1) * h].iter().zip(hb).map(|(a, b)| a * b).sum::<f64>();
                out[b * o + j] = mean[j] + scale[j] * z;
            }
        }
        out
    }

    /// Training-mode forward pass: predictions, cache and batch statistics.
    pub(crate) fn forward_train(&self, inputs: &[f64], batch: usize) -> Result<(Vec<f64>, TrainCache)> {
        let (out, cache) = self.run(inputs, batch, true)?;
        Ok((out, cache.expect("training-mode cache")))
    }

    pub(crate) fn batch_stats(cache: &TrainCache) -> BatchStats {
        BatchStats {
            bn1: (cache.bn1.mean.clone(), cache.bn1.var_unbiased.clone()),
            bn2: (cache.bn2.mean.clone(), cache.bn2.var_unbiased.clone()),
        }
    }

    /// Gradient of the loss w.r.t. all parameters given `dout = dL/dpred`.
    pub(crate) fn backward(&self, cache: &TrainCache, dout: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let p = &self.params;
        let batch = cache.batch;
        let (h, o) = (cfg.hidden, cfg.outputs);
        let mut grad = vec![0.0; p.len()];
        let scale = self.buffers.get("head.scale");
        let hw = p.get("head.weight");
        let mut dlast = vec![0.0; batch * h];
        {
            let (rw, rb) = (p.range("head.weight"), p.range("head.bias"));
            for b in 0..batch {
                let hb = &cache.last[b * h..(b + 1) * h];
                for j in 0..o {
                    let g = dout[b * o + j] * scale[j];
                    grad[rb.start + j] += g;
                    let row = rw.start + j * h;
                    for k in 0..h {
                        grad[row + k] += g * hb[k];
                        dlast[b * h + k] += g * hw[j * h + k];
                    }
                }
            }
        }
        let d = cfg.feature_dim();
        let (r_ih, r_hh, r_b) = (p.range("lstm.w_ih"), p.range("lstm.w_hh"), p.range("lstm.bias"));
        let mut g_ih = vec![0.0; r_ih.len()];
        let mut g_hh = vec![0.0; r_hh.len()];
        let mut g_b = vec![0.0; r_b.len()];
        let dx = lstm_backward(
            &cache.p2.data,
            d,
            p.get("lstm.w_ih"),
            p.get("lstm.w_hh"),
            &cache.lstm,
            &dlast,
            &mut g_ih,
            &mut g_hh,
            &mut g_b,
        );
        grad[r_ih].copy_from_slice(&g_ih);
        grad[r_hh].copy_from_slice(&g_hh);
        grad[r_b].copy_from_slice(&g_b);
        let dp2 = Act {
            data: dx,
            ..cache.p2.clone()
        };
        let mut dr2 = maxpool_backward(&cache.r2, &cache.idx2, &dp2);
        relu_backward(&cache.r2, &mut dr2);
        let (mut dg, mut db) = (vec![0.0; cfg.conv_channels[1]], vec![0.0; cfg.conv_channels[1]]);
        let dz2 = bn_backward(&dr2, &cache.bn2, p.get("bn2.gamma"), &mut dg, &mut db);
        grad[p.range("bn2.gamma")].copy_from_slice(&dg);
        grad[p.range("bn2.beta")].copy_from_slice(&db);
        let rw2 = p.range("conv2.weight");
        let mut gw2 = vec![0.0; rw2.len()];
        let dp1 = conv_backward(
            &cache.p1,
            p.get("conv2.weight"),
            cfg.kernel_sizes[1],
            &dz2,
            &mut gw2,
            true,
        )
        .expect("input gradient requested");
        grad[rw2].copy_from_slice(&gw2);
        let mut dr1 = maxpool_backward(&cache.r1, &cache.idx1, &dp1);
        relu_backward(&cache.r1, &mut dr1);
        let (mut dg, mut db) = (vec![0.0; cfg.conv_channels[0]], vec![0.0; cfg.conv_channels[0]]);
        let dz1 = bn_backward(&dr1, &cache.bn1, p.get("bn1.gamma"), &mut dg, &mut db);
        grad[p.range("bn1.gamma")].copy_from_slice(&dg);
        grad[p.range("bn1.beta")].copy_from_slice(&db);
        let rw1 = p.range("conv1.weight");
        let mut gw1 = vec![0.0; rw1.len()];
        conv_backward(
            &cache.a0,
            p.get("conv1.weight"),
            cfg.kernel_sizes[0],
            &dz1,
            &mut gw1,
            false,
        );
        grad[rw1].copy_from_slice(&gw1);
        check_finite("gradients", &grad)?;
        Ok(grad)
    }

    /// Mean squared error of a training-mode pass and its gradient.
    pub fn loss_and_gradients(
        &self,
        inputs: &[f64],
        labels: &[[f64; NUM_COORDS]],
    ) -> Result<(f64, Vec<f64>, BatchStats)> {
        let batch = labels.len();
        if batch == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let (out, cache) = self.forward_train(inputs, batch)?;
        let n = (batch * NUM_COORDS) as f64;
        let mut loss = 0.0;
        let mut dout = vec![0.0; out.len()];
        for (b, l) in labels.iter().enumerate() {
            for j in 0..NUM_COORDS {
                let e = out[b * NUM_COORDS + j] - l[j];
                loss += e * e / n;
                dout[b * NUM_COORDS + j] = 2.0 * e / n;
            }
        }
        let grad = self.backward(&cache, &dout)?;
        Ok((loss, grad, Self::batch_stats(&cache)))
    }

    /// Training-mode loss only (for finite-difference checks).
    pub fn loss(&self, inputs: &[f64], labels: &[[f64; NUM_COORDS]]) -> Result<f64> {
        let (out, _) = self.forward_train(inputs, labels.len())?;
        Ok(mse_flat(&out, labels))
    }

    /// Fold batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        let m = self.config.bn_momentum;
        for (name, (mean, var)) in [("bn1", &stats.bn1), ("bn2", &stats.bn2)] {
            for (r, v) in self
                .buffers
                .get_mut(&format!("{name}.running_mean"))
                .iter_mut()
                .zip(mean)
            {
                *r = (1.0 - m) * *r + m * v;
            }
            for (r, v) in self.buffers.get_mut(&format!("{name}.running_var")).iter_mut().zip(var) {
                *r = (1.0 - m) * *r + m * v;
            }
        }
        round_f32(&mut self.buffers.values);
    }
}

fn mse_flat(out: &[f64], labels: &[[f64; NUM_COORDS]]) -> f64 {
    let n = (labels.len() * NUM_COORDS) as f64;
    labels
        .iter()
        .enumerate()
        .map(|(b, l)| {
            (0..NUM_COORDS)
                .map(|j| (out[b * NUM_COORDS + j] - l[j]).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

/// Mean squared coordinate error, mm².
pub fn loss_mse(pred: &[f64; NUM_COORDS], label: &HandPose) -> f64 {
    mse_flat(pred, &[label.to_flat()])
}

/// Analytic gradient of the mean loss over `(input, label)` pairs, inputs
/// already prepared.
pub fn gradients(model: &Model, batch: &[(Vec<f64>, HandPose)]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let inputs: Vec<f64> = batch.iter().flat_map(|(x, _)| x.iter().copied()).collect();
    let labels: Vec<[f64; NUM_COORDS]> = batch.iter().map(|(_, l)| l.to_flat()).collect();
    Ok(model.loss_and_gradients(&inputs, &labels)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{hand_pose_from_params, HandKinematicParams, HandModel};

    pub(crate) fn tiny() -> ModelConfig {
        ModelConfig {
            input_channels: 2,
            input_cells: 16,
            conv_channels: [3, 4],
            hidden: 5,
            ..ModelConfig::default()
        }
    }

    fn input(cfg: &ModelConfig, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..cfg.input_len()).map(|_| rng.gen::<f64>()).collect()
    }

    fn pose() -> HandPose {
        hand_pose_from_params(&HandKinematicParams::default(), &HandModel::default()).unwrap()
    }

    #[test]
    fn default_shapes() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.slices_per_fold(), 5);
        assert_eq!(cfg.pooled_shape(), (1, 64));
        assert_eq!(cfg.feature_dim(), 2048);
        let bad = ModelConfig {
            folds: 7,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_model_outputs_head_bias() {
        let cfg = tiny();
        let mut m = Model::zeros(&cfg).unwrap();
        for (j, b) in m.params.get_mut("head.bias").iter_mut().enumerate() {
            *b = j as f64;
        }
        let out = m.predict_batch(&input(&cfg, 1), 1).unwrap();
        assert_eq!(out.len(), 63);
        for (j, v) in out.iter().enumerate() {
            assert_eq!(*v, j as f64);
        }
    }

    #[test]
    fn duplicate_batch_entries_agree() {
        let cfg = tiny();
        let m = Model::new(&cfg).unwrap();
        let x = input(&cfg, 2);
        let mut two = x.clone();
        two.extend_from_slice(&x);
        let out = m.predict_batch(&two, 2).unwrap();
        assert_eq!(out[..63], out[63..]);
        assert_eq!(out[..63], m.predict_batch(&x, 1).unwrap()[..]);
    }

    #[test]
    fn loss_examples() {
        let p = pose();
        let mut pred = p.to_flat();
        assert_eq!(loss_mse(&pred, &p), 0.0);
        for v in &mut pred {
            *v += 3.0;
        }
        assert!((loss_mse(&pred, &p) - 9.0).abs() < 1e-9);
        let mut one = p.to_flat();
        one[10] += 63f64.sqrt();
        assert!((loss_mse(&one, &p) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = tiny();
        let mut m = Model::new(&cfg).unwrap();
        m.set_output_normalization(&[
            pose().to_flat(),
            pose().translated(crate::geometry::Vec3::new(5.0, 2.0, 1.0)).to_flat(),
        ])
        .unwrap();
        let inputs: Vec<f64> = [input(&cfg, 3), input(&cfg, 4)].concat();
        let labels = [pose().to_flat(), pose().to_flat()];
        let (_, g, _) = m.loss_and_gradients(&inputs, &labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-4;
        for _ in 0..40 {
            let i = rng.gen_range(0..m.params.len());
            let orig = m.params.values[i];
            m.params.values[i] = orig + h;
            let lp = m.loss(&inputs, &labels).unwrap();
            m.params.values[i] = orig - h;
            let lm = m.loss(&inputs, &labels).unwrap();
            m.params.values[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = g[i].abs().max(fd.abs()).max(1e-6);
            assert!(
                (g[i] - fd).abs() / denom < 1e-4,
                "{} [{i}]: analytic {} fd {fd}",
                m.params.owner(i),
                g[i]
            );
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let cfg = tiny();
        let m = Model::new(&cfg).unwrap();
        let x = input(&cfg, 5);
        let g1 = gradients(&m, &[(x.clone(), pose())]).unwrap();
        let g2 = gradients(&m, &[(x.clone(), pose()), (x, pose())]).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-6));
        }
    }

    #[test]
    fn input_scaling_is_per_channel() {
        let cfg = tiny();
        let m = Model::zeros(&cfg).unwrap();
        let per = cfg.input_len() / 2;
        let mut raw = vec![0.0f32; cfg.input_len()];
        raw[3] = 4.0;
        raw[5] = 2.0;
        raw[per + 1] = 0.5;
        let mut out = vec![0.0; cfg.input_len()];
        m.prepare_input(&raw, &mut out).unwrap();
        assert_eq!(out[3], 1.0);
        assert_eq!(out[5], 0.5);
        assert_eq!(out[per + 1], 1.0);
    }
}
