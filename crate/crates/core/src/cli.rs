//! Batch command surface behind the `echo-sonar` binary.
//!
//! Every command reads one TOML [`RunConfig`] (unknown keys are errors),
//! applies `--seed` and `--set key=value` overrides, writes the result to
//! `<out>/resolved_config.toml` and then runs. Relative paths are resolved
//! against the working directory and stored absolute in the resolved copy,
//! so rerunning with `--config <out>/resolved_config.toml` reproduces the
//! outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::chirp::ChirpSpec;
use crate::dataset::{
    augmentation_shifts, curriculum_order, leave_one_group_out, load_session, read_manifest, read_poses,
    session_stream, write_session, write_tensor, GroupBy, SessionManifest, Tensor, WindowSet, WindowSource,
    WINDOW_PROFILES,
};
use crate::pose::{
    activation_similarity, ActivationDetector, ActivationTemplate, DEFAULT_ACTIVATION_THRESHOLD,
    DEFAULT_DEBOUNCE_FRAMES,
};
use crate::rangeprofile::PreprocessConfig;
use crate::regressor::{
    evaluate, predict, read_checkpoint, train_curriculum, train_plain, write_checkpoint, Checkpoint, ModelConfig,
    TrainStage,
};
use crate::sim::{gesture_trajectory, simulate_session, GestureKind, HandModel, RenderOptions, Scatterer, Scene};
use crate::skeleton::HandPose;

/// File name of the resolved configuration written next to every output.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Preprocess,
    Train,
    Eval,
    Activate,
}

#[derive(Debug, Parser)]
#[command(name = "echo-sonar", version, about = "FMCW acoustic hand tracking toolkit")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Dotted-key override, e.g. `--set simulate.duration_s=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Train without curriculum (same as `--set train.curriculum=false`).
    #[arg(long)]
    pub no_curriculum: bool,
    /// Augmentation factor for `preprocess` (same as `--set preprocess.augment=N`).
    #[arg(long)]
    pub augment: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub static_scatterers: Vec<Scatterer>,
    pub surface_plane: bool,
    pub noise_snr_db: Option<f64>,
    pub audible_noise_db: Option<f64>,
    pub ultrasound_gain_db: f64,
    pub start_offset_samples: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            static_scatterers: Vec::new(),
            surface_plane: true,
            noise_snr_db: None,
            audible_noise_db: None,
            ultrasound_gain_db: 0.0,
            start_offset_samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub session_id: String,
    pub subject_id: String,
    pub room: Option<String>,
    pub stage: GestureKind,
    pub duration_s: f64,
    pub render: RenderOptions,
    pub scene: SceneConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            session_id: "session".into(),
            subject_id: "subject0".into(),
            room: None,
            stage: GestureKind::Mixed,
            duration_s: 120.0,
            render: RenderOptions::default(),
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    /// Session manifest to process.
    pub manifest: Option<PathBuf>,
    /// Profiles between consecutive windows.
    pub stride: usize,
    /// Shifted copies per window (0..=6).
    pub augment: usize,
    pub pipeline: PreprocessConfig,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            manifest: None,
            stride: WINDOW_PROFILES,
            augment: 0,
            pipeline: PreprocessConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub manifests: Vec<PathBuf>,
    pub validation: Vec<PathBuf>,
    pub curriculum: bool,
    pub stride: usize,
    pub augment: usize,
    /// `model.seed` is always replaced by the run seed.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            manifests: Vec::new(),
            validation: Vec::new(),
            curriculum: true,
            stride: 5,
            augment: 6,
            model: ModelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Required unless `group_by` is set.
    pub checkpoint: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub stride: usize,
    /// Cross-validate: hold out each subject (or room) in turn, training on
    /// the rest with the `[train]` settings.
    pub group_by: Option<GroupBy>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            manifests: Vec::new(),
            stride: WINDOW_PROFILES,
            group_by: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivateConfig {
    pub manifest: Option<PathBuf>,
    /// Poses come from this model's predictions; ground truth when absent.
    pub checkpoint: Option<PathBuf>,
    /// Window stride for model predictions.
    pub stride: usize,
    /// Pose CSV whose first frame is the template; the built-in shape when absent.
    pub template: Option<PathBuf>,
    pub threshold: f64,
    pub debounce: usize,
}

impl Default for ActivateConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            checkpoint: None,
            stride: 5,
            template: None,
            threshold: DEFAULT_ACTIVATION_THRESHOLD,
            debounce: DEFAULT_DEBOUNCE_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub chirp: ChirpSpec,
    pub simulate: SimulateConfig,
    pub preprocess: PreprocessSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub activate: ActivateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            chirp: ChirpSpec::default(),
            simulate: SimulateConfig::default(),
            preprocess: PreprocessSection::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            activate: ActivateConfig::default(),
        }
    }
}

/// Set `key` (dotted path) in `root`. The value is parsed as a TOML value
/// and kept as a string when that fails.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not KEY=VALUE"))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is malformed");
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in path {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: {p} is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn absolute(p: &mut PathBuf) -> anyhow::Result<()> {
    *p = std::path::absolute(&*p).with_context(|| format!("resolving {}", p.display()))?;
    Ok(())
}

impl RunConfig {
    /// Parse, override and validate.
    pub fn resolve(text: &str, args: &Args) -> anyhow::Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        if let Some(seed) = args.seed {
            table.insert("seed".into(), toml::Value::Integer(i64::try_from(seed)?));
        }
        if args.no_curriculum {
            apply_override(&mut table, "train.curriculum=false")?;
        }
        if let Some(n) = args.augment {
            apply_override(&mut table, &format!("preprocess.augment={n}"))?;
        }
        for o in &args.overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
        cfg.train.model.seed = cfg.seed;
        cfg.validate()?;
        for p in cfg
            .preprocess
            .manifest
            .iter_mut()
            .chain(&mut cfg.train.manifests)
            .chain(&mut cfg.train.validation)
            .chain(&mut cfg.eval.checkpoint)
            .chain(&mut cfg.eval.manifests)
            .chain(&mut cfg.activate.manifest)
            .chain(&mut cfg.activate.checkpoint)
            .chain(&mut cfg.activate.template)
        {
            absolute(p)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.chirp.validate()?;
        self.train.model.validate()?;
        augmentation_shifts(self.preprocess.augment)?;
        augmentation_shifts(self.train.augment)?;
        if !(self.simulate.duration_s > 0.0) {
            bail!("simulate.duration_s must be positive");
        }
        for (name, s) in [
            ("preprocess.stride", self.preprocess.stride),
            ("train.stride", self.train.stride),
            ("eval.stride", self.eval.stride),
            ("activate.stride", self.activate.stride),
            ("activate.debounce", self.activate.debounce),
        ] {
            if s == 0 {
                bail!("{name} must be positive");
            }
        }
        if !self.activate.threshold.is_finite() {
            bail!("activate.threshold must be finite");
        }
        Ok(())
    }
}

/// Parse arguments' config, write the resolved copy and run the command.
pub fn run(args: &Args) -> anyhow::Result<()> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let cfg = RunConfig::resolve(&text, args)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    std::fs::write(args.out.join(RESOLVED_CONFIG), toml::to_string(&cfg)?)?;
    match args.command {
        Command::Simulate => cmd_simulate(&cfg, &args.out).map(|_| ()),
        Command::Preprocess => cmd_preprocess(&cfg, &args.out),
        Command::Train => cmd_train(&cfg, &args.out).map(|_| ()),
        Command::Eval => cmd_eval(&cfg, &args.out),
        Command::Activate => cmd_activate(&cfg, &args.out).map(|_| ()),
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> anyhow::Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| anyhow!("{key} is required for this command"))
}

/// Render one session into `out`; returns the manifest path.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<PathBuf> {
    let s = &cfg.simulate;
    let traj = gesture_trajectory(s.stage, s.duration_s, cfg.seed)?;
    let scene = Scene {
        static_scatterers: s.scene.static_scatterers.clone(),
        surface_plane_enabled: s.scene.surface_plane,
        noise_snr_db: s.scene.noise_snr_db,
        audible_noise_db: s.scene.audible_noise_db,
        ultrasound_gain_db: s.scene.ultrasound_gain_db,
        start_offset_samples: s.scene.start_offset_samples,
        noise_seed: cfg.seed,
        ..Scene::default()
    };
    let session = simulate_session(&cfg.chirp, &scene, &traj, &HandModel::default(), &s.render)?;
    let manifest = SessionManifest {
        session_id: s.session_id.clone(),
        subject_id: s.subject_id.clone(),
        room: s.room.clone(),
        stage: s.stage,
        seed: cfg.seed,
        chirp: cfg.chirp.clone(),
        ..SessionManifest::default()
    };
    let path = write_session(out, &manifest, &session)?;
    println!(
        "simulated {}: {} samples x {} channels, {} poses -> {}",
        s.session_id,
        session.recording.len(),
        session.recording.num_channels(),
        session.ground_truth.len(),
        path.display()
    );
    Ok(path)
}

/// Labelled windows of the given sessions, preprocessed one at a time.
fn window_set(
    manifests: &[PathBuf],
    pipeline: &PreprocessConfig,
    stride: usize,
    augment: usize,
) -> anyhow::Result<WindowSet> {
    let shifts = augmentation_shifts(augment)?;
    let mut set = WindowSet::default();
    for path in manifests {
        let session = load_session(path).with_context(|| format!("loading {}", path.display()))?;
        let (stream, _) =
            session_stream(&session, pipeline).with_context(|| format!("preprocessing {}", path.display()))?;
        let cell_mm = session.manifest.chirp.cell_size_m() * 1e3;
        set.add_session(stream, &session.ground_truth, stride, &shifts, cell_mm)?;
    }
    Ok(set)
}

#[derive(Serialize)]
struct WindowRow {
    index: usize,
    start_profile: usize,
    shift_cells: i32,
    end_us: i64,
}

/// Anchor, cut, subtract and window one session; writes
/// `<id>.features.bvtn` (windows x channels x cells x 50),
/// `<id>.labels.bvtn` (windows x 63), `<id>.windows.csv` and
/// `<id>.anchor.json`.
pub fn cmd_preprocess(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let p = &cfg.preprocess;
    let path = required(&p.manifest, "preprocess.manifest")?;
    let session = load_session(path).with_context(|| format!("loading {}", path.display()))?;
    let (stream, anchor) =
        session_stream(&session, &p.pipeline).with_context(|| format!("preprocessing {}", path.display()))?;
    let id = session.manifest.session_id.clone();
    let cell_mm = session.manifest.chirp.cell_size_m() * 1e3;
    let gt = session.ground_truth;
    drop(session.recording);
    let mut set = WindowSet::default();
    let report = set.add_session(stream, &gt, p.stride, &augmentation_shifts(p.augment)?, cell_mm)?;
    let (channels, cells) = set.shape();
    let len = channels * cells * WINDOW_PROFILES;
    let mut features = vec![0.0f32; set.len() * len];
    let mut labels = Vec::with_capacity(set.len() * 63);
    let mut rows = csv::Writer::from_writer(create(&out.join(format!("{id}.windows.csv")))?);
    for i in 0..set.len() {
        set.fill_input(i, &mut features[i * len..(i + 1) * len])?;
        labels.extend(set.label(i).iter().map(|&v| v as f32));
        let r = &set.samples[i];
        rows.serialize(WindowRow {
            index: i,
            start_profile: r.start,
            shift_cells: r.shift,
            end_us: set.streams[0].window_end_us(r.start),
        })?;
    }
    rows.flush()?;
    let n = set.len();
    let mut w = create(&out.join(format!("{id}.features.bvtn")))?;
    write_tensor(
        &mut w,
        &Tensor::new(vec![n, channels, cells, WINDOW_PROFILES], features)?,
    )?;
    w.flush()?;
    let mut w = create(&out.join(format!("{id}.labels.bvtn")))?;
    write_tensor(&mut w, &Tensor::new(vec![n, 63], labels)?)?;
    w.flush()?;
    std::fs::write(
        out.join(format!("{id}.anchor.json")),
        serde_json::to_string_pretty(&anchor)?,
    )?;
    println!(
        "preprocessed {id}: {n} windows ({} rejected, max label gap {} us)",
        report.rejected, report.max_gap_us
    );
    Ok(())
}

#[derive(Serialize)]
struct CurveRow<'a> {
    stage: &'a str,
    point: usize,
    loss: f64,
}

#[derive(Serialize)]
struct StageRow<'a> {
    stage: &'a str,
    steps: usize,
    samples: usize,
    train_mse: Option<f64>,
    val_mse: Option<f64>,
}

fn write_ckpt(path: &Path, ckpt: &Checkpoint) -> anyhow::Result<()> {
    let mut w = create(path)?;
    write_checkpoint(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

/// Train on `manifests` with the `[train]` settings, writing per-stage
/// checkpoints, `model.bvck`, `stages.csv` and `loss_curve.csv` into `out`.
fn train_on(cfg: &RunConfig, manifests: &[PathBuf], validation: &[PathBuf], out: &Path) -> anyhow::Result<Checkpoint> {
    let t = &cfg.train;
    if manifests.is_empty() {
        bail!("no training manifests given");
    }
    let metas = manifests
        .iter()
        .map(|p| read_manifest(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let pipeline = &cfg.preprocess.pipeline;
    let mut sets = Vec::new();
    for stage in curriculum_order(&metas) {
        let paths: Vec<PathBuf> = stage.sessions.iter().map(|&i| manifests[i].clone()).collect();
        let set = window_set(&paths, pipeline, t.stride, t.augment)?;
        log::info!("stage {}: {} sessions, {} samples", stage.kind, paths.len(), set.len());
        sets.push((stage.kind.to_string(), set));
    }
    let val = if validation.is_empty() {
        None
    } else {
        Some(window_set(validation, pipeline, t.stride, 0)?)
    };
    let stages: Vec<TrainStage<'_>> = sets
        .iter()
        .map(|(tag, set)| TrainStage {
            tag: tag.clone(),
            train: set,
            validation: val.as_ref().map(|v| v as &dyn WindowSource),
        })
        .collect();
    let save = |i: usize, ck: &Checkpoint| -> crate::Result<()> {
        write_ckpt(&out.join(format!("stage-{i}-{}.bvck", ck.stage)), ck)
            .map_err(|e| crate::Error::Io(std::io::Error::other(format!("{e:#}"))))
    };
    let ckpt = if t.curriculum {
        train_curriculum(&stages, &t.model, save)?
    } else {
        train_plain(&stages, &t.model, save)?
    };
    write_ckpt(&out.join("model.bvck"), &ckpt)?;
    let mut st = csv::Writer::from_writer(create(&out.join("stages.csv"))?);
    let mut cv = csv::Writer::from_writer(create(&out.join("loss_curve.csv"))?);
    for r in &ckpt.history {
        st.serialize(StageRow {
            stage: &r.tag,
            steps: r.steps,
            samples: r.samples,
            train_mse: r.train_mse,
            val_mse: r.val_mse,
        })?;
        for (point, &loss) in r.loss_curve.iter().enumerate() {
            cv.serialize(CurveRow {
                stage: &r.tag,
                point,
                loss,
            })?;
        }
    }
    st.flush()?;
    cv.flush()?;
    Ok(ckpt)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> anyhow::Result<Checkpoint> {
    let ckpt = train_on(cfg, &cfg.train.manifests, &cfg.train.validation, out)?;
    let last = ckpt.history.last().expect("at least one stage");
    println!(
        "trained {} stage(s) ({}), final train mse {:.2}, val mse {}",
        ckpt.history.len(),
        if cfg.train.curriculum { "curriculum" } else { "plain" },
        last.train_mse.unwrap_or(f64::NAN),
        last.val_mse.map_or("-".into(), |v| format!("{v:.2}"))
    );
    Ok(ckpt)
}

fn load_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    Ok(read_checkpoint(&mut r).with_context(|| format!("reading {}", path.display()))?)
}

#[derive(Serialize)]
struct FoldRow<'a> {
    held_out: &'a str,
    samples: usize,
    mae_mm: f64,
    median_mae_mm: f64,
    mean_joint_distance_mm: f64,
}

/// Metrics CSV for a checkpoint, or leave-one-group-out cross-validation.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let e = &cfg.eval;
    if e.manifests.is_empty() {
        bail!("eval.manifests is empty");
    }
    let pipeline = &cfg.preprocess.pipeline;
    let Some(by) = e.group_by else {
        let ckpt = load_checkpoint(required(&e.checkpoint, "eval.checkpoint")?)?;
        let set = window_set(&e.manifests, pipeline, e.stride, 0)?;
        let report = evaluate(&ckpt.model, &set)?;
        report.write_csv(create(&out.join("metrics.csv"))?)?;
        println!("eval: {} windows, MAE {:.2} mm", report.samples, report.mae_mm);
        return Ok(());
    };
    let metas = e
        .manifests
        .iter()
        .map(|p| read_manifest(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let splits = leave_one_group_out(&metas, by);
    if splits.len() < 2 {
        bail!("cross-validation needs at least two distinct groups");
    }
    let mut summary = csv::Writer::from_writer(create(&out.join("cv_summary.csv"))?);
    for split in &splits {
        let dir = out.join(format!("fold-{}", split.held_out));
        std::fs::create_dir_all(&dir)?;
        let pick = |idx: &[usize]| idx.iter().map(|&i| e.manifests[i].clone()).collect::<Vec<_>>();
        let ckpt = train_on(cfg, &pick(&split.train), &[], &dir)?;
        let test = window_set(&pick(&split.test), pipeline, e.stride, 0)?;
        let report = evaluate(&ckpt.model, &test)?;
        report.write_csv(create(&dir.join("metrics.csv"))?)?;
        summary.serialize(FoldRow {
            held_out: &split.held_out,
            samples: report.samples,
            mae_mm: report.mae_mm,
            median_mae_mm: report.median_mae_mm,
            mean_joint_distance_mm: report.mean_joint_distance_mm,
        })?;
        println!(
            "fold {}: MAE {:.2} mm over {} windows",
            split.held_out, report.mae_mm, report.samples
        );
    }
    summary.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityRow {
    pub frame: usize,
    pub timestamp_us: i64,
    pub similarity: f64,
}

/// Run the activation detector over a session's pose stream. Writes
/// `similarity.csv` and `events.csv`; returns the events.
pub fn cmd_activate(cfg: &RunConfig, out: &Path) -> anyhow::Result<Vec<SimilarityRow>> {
    let a = &cfg.activate;
    let path = required(&a.manifest, "activate.manifest")?;
    let template_pose = match &a.template {
        Some(p) => {
            read_poses(BufReader::new(
                File::open(p).with_context(|| format!("opening {}", p.display()))?,
            ))?
            .into_iter()
            .next()
            .ok_or_else(|| anyhow!("template file {} has no poses", p.display()))?
            .pose
        }
        None => crate::pose::canonical_activation_pose(),
    };
    let template = ActivationTemplate::new(&template_pose, a.threshold)?;
    let stream: Vec<(i64, HandPose)> = match &a.checkpoint {
        None => load_session(path)?
            .ground_truth
            .into_iter()
            .map(|p| (p.timestamp_us, p.pose))
            .collect(),
        Some(ck) => {
            let model = load_checkpoint(ck)?.model;
            let set = window_set(&[path.to_path_buf()], &cfg.preprocess.pipeline, a.stride, 0)?;
            let preds = predict(&model, &set)?;
            set.samples
                .iter()
                .zip(preds)
                .map(|(r, (p, _))| Ok((set.streams[0].window_end_us(r.start), HandPose::from_flat(&p)?)))
                .collect::<crate::Result<_>>()?
        }
    };
    let mut det = ActivationDetector::new(template.clone(), a.debounce)?;
    let mut sims = csv::Writer::from_writer(create(&out.join("similarity.csv"))?);
    let mut events = Vec::new();
    for (frame, (t, pose)) in stream.iter().enumerate() {
        let similarity = activation_similarity(pose, &template).unwrap_or(f64::NEG_INFINITY);
        sims.serialize(SimilarityRow {
            frame,
            timestamp_us: *t,
            similarity,
        })?;
        if let Some(ev) = det.push(pose) {
            events.push(SimilarityRow {
                frame: ev.frame,
                timestamp_us: *t,
                similarity: ev.similarity,
            });
        }
    }
    sims.flush()?;
    let mut ev = csv::Writer::from_writer(create(&out.join("events.csv"))?);
    for e in &events {
        ev.serialize(e)?;
    }
    ev.flush()?;
    println!("activate: {} frames, {} events", stream.len(), events.len());
    Ok(events)
}
