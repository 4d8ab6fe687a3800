//! Minibatch Adam training with curriculum stages.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, StageRecord};
use super::{round_f32, Model, ModelConfig};
use crate::dataset::WindowSource;
use crate::error::{Error, Result};
use crate::skeleton::NUM_COORDS;

/// Loss above which training is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e8;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Points recorded on each stage's loss curve.
const CURVE_POINTS: usize = 20;

/// One curriculum phase.
pub struct TrainStage<'a> {
    pub tag: String,
    pub train: &'a dyn WindowSource,
    pub validation: Option<&'a dyn WindowSource>,
}

/// Several sources viewed as one, in order.
pub struct ConcatSource<'a> {
    parts: Vec<&'a dyn WindowSource>,
    starts: Vec<usize>,
    total: usize,
}

impl<'a> ConcatSource<'a> {
    pub fn new(parts: Vec<&'a dyn WindowSource>) -> Self {
        let mut starts = Vec::with_capacity(parts.len());
        let mut total = 0;
        for p in &parts {
            starts.push(total);
            total += p.len();
        }
        Self { parts, starts, total }
    }

    fn locate(&self, i: usize) -> (usize, usize) {
        let part = self.starts.partition_point(|&s| s <= i) - 1;
        (part, i - self.starts[part])
    }
}

impl WindowSource for ConcatSource<'_> {
    fn len(&self) -> usize {
        self.total
    }

    fn shape(&self) -> (usize, usize) {
        self.parts.iter().find(|p| !p.is_empty()).map_or((0, 0), |p| p.shape())
    }

    fn fill_input(&self, i: usize, out: &mut [f32]) -> Result<()> {
        let (p, j) = self.locate(i);
        self.parts[p].fill_input(j, out)
    }

    fn label(&self, i: usize) -> &[f64; NUM_COORDS] {
        let (p, j) = self.locate(i);
        self.parts[p].label(j)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
        round_f32(params);
    }
}

fn check_source(model: &Model, src: &dyn WindowSource) -> Result<()> {
    let want = (model.config.input_channels, model.config.input_cells);
    if !src.is_empty() && src.shape() != want {
        return Err(Error::Shape(format!(
            "data shape {:?}, model expects {want:?}",
            src.shape()
        )));
    }
    Ok(())
}

/// Fill a prepared input batch for sample indices `idx`.
pub(crate) fn load_batch(
    model: &Model,
    src: &dyn WindowSource,
    idx: &[usize],
    raw: &mut [f32],
    inputs: &mut Vec<f64>,
) -> Result<Vec<[f64; NUM_COORDS]>> {
    let len = model.config.input_len();
    inputs.resize(idx.len() * len, 0.0);
    let mut labels = Vec::with_capacity(idx.len());
    for (b, &i) in idx.iter().enumerate() {
        src.fill_input(i, raw)?;
        model.prepare_input(raw, &mut inputs[b * len..(b + 1) * len])?;
        labels.push(*src.label(i));
    }
    Ok(labels)
}

/// Evaluation-mode mean squared error over a whole source.
pub fn mean_squared_error(model: &Model, src: &dyn WindowSource) -> Result<f64> {
    if src.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    check_source(model, src)?;
    let mut raw = vec![0.0f32; model.config.input_len()];
    let mut inputs = Vec::new();
    let mut sum = 0.0;
    let idx: Vec<usize> = (0..src.len()).collect();
    for chunk in idx.chunks(model.config.batch_size) {
        let labels = load_batch(model, src, chunk, &mut raw, &mut inputs)?;
        let out = model.predict_batch(&inputs, chunk.len())?;
        for (b, l) in labels.iter().enumerate() {
            for j in 0..NUM_COORDS {
                sum += (out[b * NUM_COORDS + j] - l[j]).powi(2);
            }
        }
    }
    Ok(sum / (src.len() * NUM_COORDS) as f64)
}

/// Steps a stage of `len` samples runs for under `config`.
pub fn stage_steps(config: &ModelConfig, len: usize) -> usize {
    config
        .steps_per_stage
        .unwrap_or_else(|| config.epochs_per_stage * len.div_ceil(config.batch_size))
}

/// Train through `stages` in order, each starting from the previous
/// stage's parameters (the first from the seeded initialisation with output
/// normalisation fitted to its labels). `on_stage` receives every stage's
/// checkpoint. Deterministic for a given seed and data.
pub fn train_curriculum(
    stages: &[TrainStage<'_>],
    config: &ModelConfig,
    mut on_stage: impl FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    let first = stages
        .first()
        .ok_or_else(|| Error::Input("no training stages".into()))?;
    let mut model = Model::new(config)?;
    for s in stages {
        check_source(&model, s.train)?;
        if s.train.is_empty() {
            return Err(Error::Input(format!("stage {} has no samples", s.tag)));
        }
    }
    let labels: Vec<[f64; NUM_COORDS]> = (0..first.train.len()).map(|i| *first.train.label(i)).collect();
    model.set_output_normalization(&labels)?;
    let mut history = Vec::new();
    let mut ckpt = Checkpoint::new(model.clone(), "init", Vec::new());
    let bs = config.batch_size;
    let mut raw = vec![0.0f32; config.input_len()];
    let mut inputs = Vec::new();
    for (si, stage) in stages.iter().enumerate() {
        let n = stage.train.len();
        let steps = stage_steps(config, n);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9 * (si as u64 + 1)));
        let mut order: Vec<usize> = (0..n).collect();
        let mut cursor = n;
        let mut adam = Adam::new(model.params.len(), config.learning_rate);
        let every = (steps / CURVE_POINTS).max(1);
        let mut curve = Vec::new();
        let (mut acc, mut acc_n) = (0.0, 0usize);
        for step in 0..steps {
            let mut idx = Vec::with_capacity(bs);
            while idx.len() < bs.min(n) {
                if cursor == n {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                idx.push(order[cursor]);
                cursor += 1;
            }
            let labels = load_batch(&model, stage.train, &idx, &mut raw, &mut inputs)?;
            let (loss, grad, stats) = model.loss_and_gradients(&inputs, &labels)?;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Divergence {
                    stage: stage.tag.clone(),
                    step,
                    loss,
                });
            }
            adam.step(&mut model.params.values, &grad);
            model.update_running_stats(&stats);
            acc += loss;
            acc_n += 1;
            if acc_n == every || step + 1 == steps {
                curve.push(acc / acc_n as f64);
                log::debug!("stage {} step {}: loss {:.3}", stage.tag, step + 1, acc / acc_n as f64);
                acc = 0.0;
                acc_n = 0;
            }
        }
        let val_mse = stage
            .validation
            .filter(|v| !v.is_empty())
            .map(|v| mean_squared_error(&model, v))
            .transpose()?;
        let record = StageRecord {
            tag: stage.tag.clone(),
            steps,
            samples: n,
            train_mse: curve.last().copied(),
            val_mse,
            loss_curve: curve,
        };
        log::info!(
            "stage {} done: {} steps, train mse {:.2}, val mse {}",
            record.tag,
            steps,
            record.train_mse.unwrap_or(f64::NAN),
            val_mse.map_or("-".into(), |v| format!("{v:.2}"))
        );
        history.push(record);
        ckpt = Checkpoint::new(model.clone(), &stage.tag, history.clone());
        on_stage(si, &ckpt)?;
    }
    Ok(ckpt)
}

/// Ablation baseline: every stage's data pooled into one shuffled stage that
/// runs for the combined step budget of `stages`.
pub fn train_plain(
    stages: &[TrainStage<'_>],
    config: &ModelConfig,
    on_stage: impl FnMut(usize, &Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    let steps: usize = stages.iter().map(|s| stage_steps(config, s.train.len())).sum();
    let pooled = ConcatSource::new(stages.iter().map(|s| s.train).collect());
    let config = ModelConfig {
        steps_per_stage: Some(steps),
        ..config.clone()
    };
    let stage = TrainStage {
        tag: "plain".into(),
        train: &pooled,
        validation: stages.last().and_then(|s| s.validation),
    };
    train_curriculum(&[stage], &config, on_stage)
}
