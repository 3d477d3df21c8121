//! Command implementations behind the `tactile` binary.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use tactile::analysis::{self, class_average_frame, detect_slip, relative_mean_response, AnalysisError};
use tactile::calib::{self, CalibError, ThresholdMap};
use tactile::eval::{self, cv_loso, cv_random, random_folds, EvalError, EvalReport, SampleSet};
use tactile::frames::pgm::encode_pgm8;
use tactile::frames::{read_dataset, write_dataset, Dataset, FramesError, Recording, TactileFrame, GRID_SIZE};
use tactile::model::{build_tactile_net, infer_batch, load_model, profile, save_model, ModelError};
use tactile::power::{duty_cycle, energy_and_lifetime, PowerError};
use tactile::sensorsim::{
    generate_scene, simulate_recording, synthesize_calibration_frames, synthesize_dataset, MaskKind,
    Orientation, RecordingMeta, SceneKind, SimError, SlideProfile,
};

pub use config::{ModelSection, PowerSection, RunConfig, SlipSection};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_FILE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NON_CONVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile(_) => EXIT_MISSING_FILE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::NonConvergence(_) => EXIT_NON_CONVERGENCE,
            CliError::Io(_) | CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FramesError> for CliError {
    fn from(e: FramesError) -> Self {
        match e {
            FramesError::Io(io) => CliError::Io(io),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        match e {
            CalibError::Io(io) => CliError::Io(io),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(io) => CliError::Io(io),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PowerError> for CliError {
    fn from(e: PowerError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tactile", version, about = "Simulate, train and analyse a tactile glove")]
pub struct Cli {
    /// JSON run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Print the primary report as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-session dataset and calibration frames.
    Simulate(SimulateArgs),
    /// Compute per-taxel contact thresholds from empty-hand frames.
    Calibrate(CalibrateArgs),
    /// Train the classifier on contact frames.
    Train(DataArgs),
    /// Cross-validate the classifier.
    Eval {
        #[arg(value_enum)]
        protocol: Protocol,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Classify frames with a trained model.
    Infer(InferArgs),
    /// Report compute and memory budget of the network.
    Profile {
        #[arg(long)]
        with_imu: bool,
    },
    /// Degradation or slip analysis.
    Analyze {
        #[arg(value_enum)]
        kind: AnalysisKind,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Duty-cycle power, energy and battery life.
    Power(PowerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Cv,
    Loso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    Degradation,
    Slip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneChoice {
    /// Every class in every session.
    Dataset,
    /// A round spot dragged across a flat sensor.
    SlidePoint,
    /// A full-width band dragged along its own axis.
    SlideStripe,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scan rate in frames per second.
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long)]
    pub sessions: Option<usize>,
    /// Comma-separated class ids.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<u8>>,
    /// Seconds per recording.
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long, value_enum, default_value = "dataset")]
    pub scene: SceneChoice,
    /// Slide speed in pixels per frame.
    #[arg(long, default_value_t = 2.0)]
    pub speed: f64,
    /// Write no calibration frames.
    #[arg(long)]
    pub no_calibration: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Dataset file of empty-hand frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Frames to classify; a single no-contact frame when omitted.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Frame cadence the inference loop must sustain.
    #[arg(long, default_value_t = 8.0)]
    pub rate: f64,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub t_on: Option<f64>,
    #[arg(long)]
    pub t_off: Option<f64>,
    #[arg(long)]
    pub hours: Option<f64>,
    #[arg(long)]
    pub battery: Option<f64>,
}

pub const DATASET_FILE: &str = "dataset.stag";
pub const CALIBRATION_FILE: &str = "calibration.stag";
pub const THRESHOLD_FILE: &str = "thresholds.bin";
pub const MODEL_FILE: &str = "model.stagnn";

struct Env {
    cfg: RunConfig,
    out: PathBuf,
    json: bool,
}

impl Env {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input(&self, given: &Option<PathBuf>, default: &str) -> Result<PathBuf, CliError> {
        let p = given.clone().unwrap_or_else(|| self.path(default));
        if !p.exists() {
            return Err(CliError::MissingFile(p));
        }
        Ok(p)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)?;
        let p = self.path(name);
        fs::write(&p, bytes)?;
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)?;
        Ok(text)
    }

    /// Prints `text` unless JSON output was requested, in which case prints `json`.
    fn emit(&self, text: &str, json: &str) {
        if self.json {
            print!("{json}");
        } else {
            print!("{text}");
        }
    }
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let env = Env {
        cfg,
        out: cli.out,
        json: cli.json,
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&env, &a),
        Command::Calibrate(a) => cmd_calibrate(&env, &a),
        Command::Train(a) => cmd_train(&env, &a),
        Command::Eval { protocol, data } => cmd_eval(&env, protocol, &data),
        Command::Infer(a) => cmd_infer(&env, &a),
        Command::Profile { with_imu } => cmd_profile(&env, with_imu || env.cfg.model.with_imu),
        Command::Analyze { kind, data } => match kind {
            AnalysisKind::Degradation => cmd_degradation(&env, &data),
            AnalysisKind::Slip => cmd_slip(&env, &data),
        },
        Command::Power(a) => cmd_power(&env, &a),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    scene: &'static str,
    sessions: usize,
    recordings: usize,
    frames: usize,
    calibration_frames: usize,
    baseline_count: u16,
}

fn cmd_simulate(env: &Env, a: &SimulateArgs) -> Result<(), CliError> {
    let mut synth = env.cfg.synth.clone();
    synth.sim.readout.scan_rate = a.rate;
    if let Some(s) = a.sessions {
        synth.sessions = s;
    }
    if let Some(c) = &a.classes {
        synth.classes = c.clone();
    }
    if let Some(s) = a.seconds {
        synth.seconds_per_recording = s;
    }
    let seed = env.cfg.seed;
    let (dataset, scene) = match a.scene {
        SceneChoice::Dataset => (synthesize_dataset(&synth, seed)?, "dataset"),
        SceneChoice::SlidePoint | SceneChoice::SlideStripe => {
            synth.validate()?;
            let n = synth.frames_per_recording();
            let kind = if a.scene == SceneChoice::SlidePoint {
                SceneKind::Slide {
                    profile: SlideProfile::point(),
                    start: (4.0, 16.0),
                    velocity: (a.speed, 0.0),
                }
            } else {
                SceneKind::Slide {
                    profile: SlideProfile::Stripe {
                        orientation: Orientation::Vertical,
                        width: 6.0,
                        pressure: 5.0,
                    },
                    start: (16.0, 0.0),
                    velocity: (0.0, a.speed),
                }
            };
            synth.sim.mask = MaskKind::Square;
            let grid = synth.sim.grid(1.0)?;
            let scene = generate_scene(kind, n, seed)?;
            let meta = RecordingMeta { session_id: 1, seed };
            let mut ds = Dataset::default();
            ds.push(simulate_recording(&scene, &grid, &synth.sim, 1.0, meta)?);
            (ds, if a.scene == SceneChoice::SlidePoint { "slide_point" } else { "slide_stripe" })
        }
    };
    fs::create_dir_all(&env.out)?;
    write_dataset(&dataset, env.path(DATASET_FILE))?;
    let mut calibration_frames = 0;
    if !a.no_calibration && synth.calibration_frames > 0 {
        let frames = synthesize_calibration_frames(&synth, tactile::seed::derive(seed, &[0xca1]))?;
        calibration_frames = frames.len();
        write_dataset(&frames_as_dataset(frames)?, env.path(CALIBRATION_FILE))?;
    }
    let summary = SimulateSummary {
        scene,
        sessions: dataset.session_ids().len(),
        recordings: dataset.recording_count(),
        frames: dataset.frame_count(),
        calibration_frames,
        baseline_count: synth.sim.baseline_count(),
    };
    let json = env.write_json("simulate.json", &summary)?;
    let mut text = String::new();
    for (id, recs) in dataset.sessions() {
        let n: usize = recs.iter().map(|r| r.frames().len()).sum();
        let _ = writeln!(text, "session {id}: {} recordings, {n} frames", recs.len());
    }
    let _ = writeln!(text, "total: {} frames", summary.frames);
    let _ = writeln!(text, "calibration: {calibration_frames} empty-hand frames");
    env.emit(&text, &json);
    Ok(())
}

/// Packs loose empty-hand frames into a dataset of buffer-sized recordings.
fn frames_as_dataset(frames: Vec<TactileFrame>) -> Result<Dataset, CliError> {
    let mut ds = Dataset::default();
    for chunk in frames.chunks(tactile::sensorsim::MAX_BUFFER_FRAMES) {
        let frames = chunk
            .iter()
            .enumerate()
            .map(|(k, f)| f.clone().with_timestamp(k as u64 * tactile::frames::FRAME_PERIOD_US))
            .collect();
        ds.push(Recording::new(tactile::frames::EMPTY_HAND, 1, frames, vec![])?);
    }
    Ok(ds)
}

#[derive(Serialize)]
struct CalibrationSummary {
    frames: usize,
    min_threshold: u16,
    max_threshold: u16,
    mean_threshold: f64,
}

fn cmd_calibrate(env: &Env, a: &CalibrateArgs) -> Result<(), CliError> {
    let path = env.input(&a.frames, CALIBRATION_FILE)?;
    let ds = read_dataset(&path)?;
    let frames: Vec<TactileFrame> = ds.recordings().flat_map(|r| r.frames().iter().cloned()).collect();
    let map = calib::calibrate(&frames)?;
    fs::create_dir_all(&env.out)?;
    map.write(env.path(THRESHOLD_FILE))?;
    let v = map.values();
    let summary = CalibrationSummary {
        frames: frames.len(),
        min_threshold: *v.iter().min().expect("1024 taxels"),
        max_threshold: *v.iter().max().expect("1024 taxels"),
        mean_threshold: v.iter().map(|&t| t as f64).sum::<f64>() / v.len() as f64,
    };
    let json = env.write_json("calibration.json", &summary)?;
    let text = format!(
        "calibrated {} frames: thresholds {}..{} (mean {:.2})\n",
        summary.frames, summary.min_threshold, summary.max_threshold, summary.mean_threshold
    );
    env.emit(&text, &json);
    Ok(())
}

fn load_samples(env: &Env, d: &DataArgs) -> Result<(Dataset, ThresholdMap, SampleSet), CliError> {
    let ds = read_dataset(env.input(&d.dataset, DATASET_FILE)?)?;
    let th = ThresholdMap::read(env.input(&d.thresholds, THRESHOLD_FILE)?)?;
    let samples = SampleSet::from_dataset(&ds, &th);
    Ok((ds, th, samples))
}

#[derive(Serialize)]
struct TrainSummary {
    samples: usize,
    n_train: usize,
    n_val: usize,
    epochs: usize,
    final_train_loss: f64,
    final_val_loss: f64,
    final_val_accuracy: f64,
    top3: f64,
}

fn cmd_train(env: &Env, d: &DataArgs) -> Result<(), CliError> {
    let (_, _, samples) = load_samples(env, d)?;
    let mut ecfg = env.cfg.eval.clone();
    ecfg.seed = env.cfg.seed;
    ecfg.use_imu = env.cfg.model.with_imu;
    ecfg.validate()?;
    // One random fold is held out to track generalization.
    let folds = random_folds(samples.len(), ecfg.n_folds, ecfg.seed);
    let val_idx = folds[0].clone();
    let train_idx: Vec<usize> = folds[1..].concat();
    let mut net = build_tactile_net(ecfg.use_imu, tactile::seed::derive(ecfg.seed, &[0x7e7]))
        .with_baseline(env.cfg.synth.sim.baseline_count() as f64);
    let (curve, preds) = eval::train(&mut net, &samples, &train_idx, &val_idx, &ecfg, tactile::seed::derive(ecfg.seed, &[0x7e8]))?;
    fs::create_dir_all(&env.out)?;
    save_model(&net, &env.path(MODEL_FILE))?;
    env.write("train_curve.csv", curve.to_csv())?;
    let last = curve.epochs.last().expect("at least one epoch");
    let summary = TrainSummary {
        samples: samples.len(),
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        epochs: curve.epochs.len(),
        final_train_loss: last.train_loss,
        final_val_loss: last.val_loss,
        final_val_accuracy: last.val_accuracy,
        top3: eval::top_k_accuracy(&preds.probs, &preds.labels, 3)?,
    };
    let json = env.write_json("train.json", &summary)?;
    let text = format!(
        "trained {} epochs on {} samples: val top-1 {:.4}, top-3 {:.4}\nmodel written to {}\n",
        summary.epochs,
        summary.n_train,
        summary.final_val_accuracy,
        summary.top3,
        env.path(MODEL_FILE).display()
    );
    env.emit(&text, &json);
    Ok(())
}

fn cmd_eval(env: &Env, protocol: Protocol, d: &DataArgs) -> Result<(), CliError> {
    let (ds, _, samples) = load_samples(env, d)?;
    let mut ecfg = env.cfg.eval.clone();
    ecfg.seed = env.cfg.seed;
    ecfg.use_imu = env.cfg.model.with_imu;
    let (report, tag) = match protocol {
        Protocol::Cv => (cv_random(&samples, &ecfg)?, "cv"),
        Protocol::Loso => (cv_loso(&samples, &ecfg)?, "loso"),
    };
    let json = env.write_json(&format!("eval_{tag}.json"), &report)?;
    write_eval_artifacts(env, tag, &report, ds.class_names())?;
    let mut text = String::new();
    for f in &report.folds {
        let label = if protocol == Protocol::Cv { "fold" } else { "session" };
        let _ = writeln!(text, "{label} {}: top-1 {:.4}  top-3 {:.4}  ({} val)", f.held_out, f.top1, f.top3, f.n_val);
    }
    let _ = writeln!(
        text,
        "mean top-1 {:.4} +- {:.4}, top-3 {:.4} +- {:.4}",
        report.top1_mean, report.top1_std, report.top3_mean, report.top3_std
    );
    env.emit(&text, &json);
    Ok(())
}

fn write_eval_artifacts(env: &Env, tag: &str, report: &EvalReport, names: &[String]) -> Result<(), CliError> {
    env.write(&format!("confusion_{tag}.csv"), report.confusion.to_csv(names))?;
    env.write(&format!("confusion_{tag}.pgm"), report.confusion.to_pgm(8))?;
    for f in &report.folds {
        env.write(&format!("curve_{tag}_{}.csv", f.held_out), f.curve.to_csv())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InferReport {
    frames: usize,
    rate_hz: f64,
    mean_latency_ms: f64,
    max_latency_ms: f64,
    keeps_up: bool,
    accuracy: Option<f64>,
    predictions: Vec<usize>,
}

fn cmd_infer(env: &Env, a: &InferArgs) -> Result<(), CliError> {
    if !(a.rate > 0.0 && a.rate.is_finite()) {
        return Err(CliError::Validation(format!("rate {} must be positive", a.rate)));
    }
    let net = load_model(&env.input(&a.model, MODEL_FILE)?)?;
    let (frames, labels): (Vec<TactileFrame>, Option<Vec<u8>>) = match &a.dataset {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::MissingFile(p.clone()));
            }
            let ds = read_dataset(p)?;
            let mut frames = Vec::new();
            let mut labels = Vec::new();
            for r in ds.recordings() {
                frames.extend(r.frames().iter().cloned());
                labels.extend(std::iter::repeat_n(r.label(), r.frames().len()));
            }
            (frames, Some(labels))
        }
        None => (vec![TactileFrame::uniform(net.baseline.round() as u16, 0)], None),
    };
    if net.has_imu() {
        return Err(CliError::Validation("IMU-fused models need IMU features; infer supports tactile-only models".into()));
    }
    let mut predictions = Vec::with_capacity(frames.len());
    let mut csv = String::from("frame,predicted,probability\n");
    let (mut total, mut worst) = (0.0f64, 0.0f64);
    for (k, f) in frames.iter().enumerate() {
        let t = Instant::now();
        let probs = infer_batch(&net, &[f], None)?.pop().expect("one row");
        let dt = t.elapsed().as_secs_f64() * 1e3;
        total += dt;
        worst = worst.max(dt);
        let row: Vec<f64> = probs.iter().map(|&p| p as f64).collect();
        let c = eval::argmax(&row);
        let _ = writeln!(csv, "{k},{c},{:.6}", row[c]);
        predictions.push(c);
    }
    let accuracy = labels.map(|l| {
        let hits = l.iter().zip(&predictions).filter(|(a, b)| **a as usize == **b).count();
        hits as f64 / l.len().max(1) as f64
    });
    let mean = total / frames.len().max(1) as f64;
    let report = InferReport {
        frames: frames.len(),
        rate_hz: a.rate,
        mean_latency_ms: mean,
        max_latency_ms: worst,
        keeps_up: worst <= 1e3 / a.rate,
        accuracy,
        predictions,
    };
    env.write("predictions.csv", &csv)?;
    // Latencies vary run to run, so the saved report omits them.
    let json = serde_json::to_string_pretty(&report)? + "\n";
    let mut text = String::new();
    let names = Dataset::default().class_names().to_vec();
    if report.frames == 1 {
        let c = report.predictions[0];
        let _ = writeln!(text, "predicted class {c} ({})", names[c]);
    }
    if let Some(acc) = report.accuracy {
        let _ = writeln!(text, "accuracy {acc:.4} over {} frames", report.frames);
    }
    let _ = writeln!(
        text,
        "latency mean {:.3} ms, max {:.3} ms; {} the {} Hz cadence",
        report.mean_latency_ms,
        report.max_latency_ms,
        if report.keeps_up { "keeps up with" } else { "misses" },
        report.rate_hz
    );
    env.emit(&text, &json);
    Ok(())
}

fn cmd_profile(env: &Env, with_imu: bool) -> Result<(), CliError> {
    let net = build_tactile_net(with_imu, env.cfg.seed);
    let report = profile(&net)?;
    let json = env.write_json("profile.json", &report)?;
    let mut text = format!("{:<24} {:>14} {:>12} {:>8}\n", "layer", "output", "macc", "params");
    for l in &report.layers {
        let shape = l.output_shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        let _ = writeln!(text, "{:<24} {:>14} {:>12} {:>8}", l.name, shape, l.macc, l.params);
    }
    let _ = writeln!(
        text,
        "total: {} MACC, {} params ({} bytes at 32 bit), peak activations {} bytes",
        report.macc_total, report.param_count, report.param_bytes_32bit, report.peak_activation_bytes
    );
    env.emit(&text, &json);
    Ok(())
}

/// Class whose per-session average frames are exported.
const AVERAGE_FRAME_CLASS: u8 = 13;

fn cmd_degradation(env: &Env, d: &DataArgs) -> Result<(), CliError> {
    let ds = read_dataset(env.input(&d.dataset, DATASET_FILE)?)?;
    let th = ThresholdMap::read(env.input(&d.thresholds, THRESHOLD_FILE)?)?;
    let baseline = env.cfg.synth.sim.baseline_count() as f64;
    let report = relative_mean_response(&ds, &th, baseline)?;
    let json = env.write_json("degradation.json", &report)?;
    for s in ds.session_ids() {
        if let Ok(avg) = class_average_frame(&ds, AVERAGE_FRAME_CLASS, s, &th) {
            let mut csv = String::new();
            for row in avg.chunks(GRID_SIZE) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
                csv.push_str(&line.join(","));
                csv.push('\n');
            }
            env.write(&format!("class{AVERAGE_FRAME_CLASS}_session{s}.csv"), csv)?;
            let px: Vec<u8> = avg
                .iter()
                .map(|v| ((v - baseline).max(0.0) / (4095.0 - baseline) * 255.0).round().min(255.0) as u8)
                .collect();
            env.write(&format!("class{AVERAGE_FRAME_CLASS}_session{s}.pgm"), encode_pgm8(GRID_SIZE, GRID_SIZE, &px))?;
        }
    }
    let mut text = String::new();
    for s in &report.sessions {
        let _ = writeln!(
            text,
            "session {}: relative response {:.4} ({} contact frames)",
            s.session, s.relative, s.contact_frames
        );
    }
    env.emit(&text, &json);
    Ok(())
}

fn cmd_slip(env: &Env, d: &DataArgs) -> Result<(), CliError> {
    let ds = read_dataset(env.input(&d.dataset, DATASET_FILE)?)?;
    let th = ThresholdMap::read(env.input(&d.thresholds, THRESHOLD_FILE)?)?;
    let rec = ds
        .recordings()
        .next()
        .ok_or_else(|| CliError::Validation("dataset holds no recordings".into()))?;
    let report = detect_slip(rec.frames(), &th, env.cfg.slip.window)?;
    let json = env.write_json("slip.json", &report)?;
    env.write("centroids.csv", report.centroids_csv())?;
    let text = match (report.speed, report.direction_deg) {
        (Some(s), Some(dir)) => format!(
            "{}: speed {s:.3} px/frame, direction {dir:.1} deg (threshold {} px/frame)\n",
            match report.state {
                analysis::SlipState::Slipping => "slipping",
                _ => "static",
            },
            analysis::SLIP_SPEED_PX
        ),
        _ => "undefined: not enough consecutive contact frames\n".to_string(),
    };
    env.emit(&text, &json);
    Ok(())
}

#[derive(Serialize)]
struct PowerReport {
    profile: tactile::power::PowerProfile,
    p_on_mw: f64,
    p_off_mw: f64,
    t_on_s: f64,
    t_off_s: f64,
    hours_per_day: f64,
    battery_wh: f64,
    energy: tactile::power::EnergyReport,
}

fn cmd_power(env: &Env, a: &PowerArgs) -> Result<(), CliError> {
    let p = &env.cfg.power;
    let t_on = a.t_on.unwrap_or(p.t_on_s);
    let t_off = a.t_off.unwrap_or(p.t_off_s);
    let hours = a.hours.unwrap_or(p.hours_per_day);
    let battery = a.battery.unwrap_or(p.battery_wh);
    let dc = duty_cycle(t_on, t_off)?;
    let energy = energy_and_lifetime(dc, hours, battery, &p.profile)?;
    let report = PowerReport {
        profile: p.profile.clone(),
        p_on_mw: p.profile.p_on_mw(),
        p_off_mw: p.profile.p_off_mw(),
        t_on_s: t_on,
        t_off_s: t_off,
        hours_per_day: hours,
        battery_wh: battery,
        energy,
    };
    let json = env.write_json("power.json", &report)?;
    let mut text = format!("{:<10} {:>8} {:>12} {:>14}\n", "subsystem", "supply V", "run mW", "standby mW");
    for s in &p.profile.subsystems {
        let _ = writeln!(text, "{:<10} {:>8.2} {:>12.3} {:>14.3}", s.name, s.supply_v, s.p_on_mw, s.p_off_mw);
    }
    let _ = writeln!(text, "{:<10} {:>8} {:>12.3} {:>14.3}", "total", "", report.p_on_mw, report.p_off_mw);
    let _ = writeln!(text, "duty cycle {:.4}: average power {:.4} mW", dc, energy.average_power_mw);
    let _ = writeln!(text, "energy {:.5} Wh per {hours} h day", energy.energy_wh_per_day);
    match (energy.lifetime_days, energy.lifetime_hours) {
        (Some(days), Some(h)) => {
            let _ = writeln!(text, "{battery} Wh battery lasts {days:.4} days ({h:.2} h of use)");
        }
        _ => {
            let _ = writeln!(text, "no power drawn: battery life unbounded");
        }
    }
    env.emit(&text, &json);
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
