use std::fs::File;
use std::io::{LineWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mocap_core::calibration::{calibrate as calibrate_profile, CalibConfig, CalibLabel, CalibProfile, CalibSampleSet};
use mocap_core::kinematics::{Skeleton, NUM_JOINTS};
use mocap_core::metrics::{CurveOptions, EvalReport, EvalSummary, MESH_ERROR_LABEL};
use mocap_core::neural::{pose_windows, train as train_net, velocity_windows, NetDims, TrainConfig, TrainReport, WindowOptions};
use mocap_core::pipeline::live::{collect_records, record_live, run_live, LiveOptions};
use mocap_core::pipeline::offline::evaluate_set;
use mocap_core::pipeline::simulate::{packetize, synthetic_session, to_record, FaultInjector};
use mocap_core::pipeline::{
    aligned_pairs, records_to_jsonl, ComputeStage, Engine, EngineConfig, Models, MotionRecord, OutputSink, RecordFile,
    Session, SessionConfig, SessionStats,
};
use mocap_core::rotmath::{Rot3, Vec3};
use mocap_core::synth::procedural::{generate, ClipKind, ClipParams};
use mocap_core::synth::sensors::SessionTruth;
use mocap_core::synth::{read_clip, read_dataset, synthesize, write_dataset, SynthFrameSet, SynthOptions, HEIGHT_NOISE_STD};

use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Orientation noise of simulated devices, degrees per axis.
const SIM_ORIENTATION_NOISE_DEG: f64 = 0.5;
/// Accelerometer noise of simulated devices, m/s².
const SIM_ACC_NOISE: f64 = 0.05;

/// Settings shared by every subcommand.
pub struct Context {
    config: Option<SessionConfig>,
    seed: u64,
    checkpoint: Option<PathBuf>,
}

impl Context {
    pub fn new(config: Option<&Path>, seed: Option<u64>, checkpoint: Option<PathBuf>) -> Result<Self> {
        let config = match config {
            Some(p) if !p.is_file() => return Err(CliError::MissingConfig(p.to_path_buf())),
            Some(p) => Some(SessionConfig::load(p)?),
            None => None,
        };
        let seed = seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
        Ok(Context { config, seed, checkpoint })
    }

    fn session_config(&self) -> SessionConfig {
        self.config.clone().unwrap_or_default()
    }

    fn require_config(&self, command: &str) -> Result<&SessionConfig> {
        self.config.as_ref().ok_or_else(|| CliError::Usage(format!("`{command}` requires --config")))
    }

    fn skeleton(&self) -> Result<Skeleton> {
        match self.config.as_ref().and_then(|c| c.skeleton.as_deref()) {
            Some(p) => Ok(Skeleton::load(p)?),
            None => Ok(Skeleton::default()),
        }
    }

    fn checkpoint_dir(&self) -> Option<&Path> {
        self.checkpoint.as_deref().or(self.config.as_ref().and_then(|c| c.checkpoint.as_deref()))
    }

    fn models(&self) -> Result<Models> {
        match self.checkpoint_dir() {
            Some(dir) => Ok(Models::load_dir(dir)?),
            None => {
                let dims = self.session_config().model;
                eprintln!("warning: no checkpoint given; using untrained networks (seed {})", self.seed);
                Ok(Models::random(dims, self.seed))
            }
        }
    }

    fn engine(&self, profile: &CalibProfile) -> Result<Engine> {
        let cfg = self.session_config();
        let engine_cfg = EngineConfig { frame_rate: cfg.frame_rate, filter: cfg.filter, skeleton: self.skeleton()? };
        Ok(Engine::new(profile, self.models()?, engine_cfg))
    }
}

/// Writes to standard output; a closed pipe is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn print_json(value: &impl Serialize) {
    emit(&(serde_json::to_string_pretty(value).expect("report serializes") + "\n"));
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(CliError::io(format!("cannot write {}", path.display())))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(CliError::io(format!("cannot read {}", path.display())))
}

fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(CliError::io(format!("cannot create {}", path.display())))
}

fn output_sink(explicit: Option<PathBuf>, cfg: &SessionConfig) -> OutputSink {
    match explicit {
        Some(p) if p.as_os_str() == "-" => OutputSink::Stdout,
        Some(p) => OutputSink::File(p),
        None => cfg.output.clone(),
    }
}

fn report_stats(stats: &SessionStats) {
    eprintln!("{}", serde_json::to_string(stats).expect("stats serialize"));
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated procedural clip kinds (walk, squat, stairs, leglift, tpose) or `all`.
    #[arg(long, value_delimiter = ',')]
    clips: Option<Vec<String>>,
    /// Clips per kind, each with its own randomized parameters.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Seconds per procedural clip.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Standard deviation of the synthetic height noise, meters.
    #[arg(long, default_value_t = HEIGHT_NOISE_STD)]
    noise: f64,
    /// Motion clip files to include (repeatable).
    #[arg(long = "clip-file")]
    clip_files: Vec<PathBuf>,
    /// Smooth positions before differentiating accelerations.
    #[arg(long)]
    smooth: bool,
}

fn clip_kinds(names: &[String]) -> Result<Vec<ClipKind>> {
    let mut kinds = Vec::new();
    for name in names {
        if name == "all" {
            kinds.extend(ClipKind::ALL);
        } else {
            kinds.push(ClipKind::from_name(name).ok_or_else(|| CliError::Usage(format!("unknown clip kind `{name}`")))?);
        }
    }
    Ok(kinds)
}

pub fn synth(ctx: &Context, a: SynthArgs) -> Result<()> {
    if !(a.duration > 0.0) || !(a.noise >= 0.0) {
        return Err(CliError::Usage("--duration must be positive and --noise non-negative".into()));
    }
    let skel = ctx.skeleton()?;
    let kinds = match &a.clips {
        Some(names) => clip_kinds(names)?,
        None if a.clip_files.is_empty() => ClipKind::ALL.to_vec(),
        None => Vec::new(),
    };
    let mut clips = Vec::new();
    for kind in kinds {
        for _ in 0..a.count {
            let seed = ctx.seed.wrapping_add(clips.len() as u64);
            clips.push((generate(&ClipParams::randomized(kind, a.duration, seed), &skel), seed));
        }
    }
    for path in &a.clip_files {
        clips.push((read_clip(path)?, ctx.seed.wrapping_add(clips.len() as u64)));
    }
    let mut sets = Vec::with_capacity(clips.len());
    for (clip, seed) in &clips {
        let opts = SynthOptions { height_noise_std: a.noise, smooth_positions: a.smooth, seed: *seed };
        sets.push(synthesize(clip, &skel, &opts)?);
    }
    write_dataset(&a.out, &sets)?;
    let frames: usize = sets.iter().map(|s| s.frames.len()).sum();
    let tags: Vec<&str> = sets.iter().map(|s| s.tag.as_str()).collect();
    print_json(&json!({ "out": a.out, "sets": sets.len(), "frames": frames, "tags": tags }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// LSTM width; defaults to the config model section.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Optimizer steps per network.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// Frames per training window.
    #[arg(long, default_value_t = 150)]
    seq_len: usize,
    /// Wall-clock budget in minutes, split evenly between the two networks.
    #[arg(long)]
    minutes: Option<f64>,
    /// Start windows every half window instead of every window.
    #[arg(long)]
    overlap: bool,
}

#[derive(Serialize)]
struct LossSummary {
    steps: usize,
    epochs: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
}

impl From<&TrainReport> for LossSummary {
    fn from(r: &TrainReport) -> Self {
        LossSummary {
            steps: r.steps(),
            epochs: r.epoch_loss.len(),
            initial_loss: r.step_loss.first().copied(),
            final_loss: r.epoch_loss.last().copied(),
        }
    }
}

pub fn train(ctx: &Context, a: TrainArgs) -> Result<()> {
    let dir = ctx.checkpoint.clone().ok_or_else(|| CliError::Usage("`train` requires --checkpoint DIR".into()))?;
    let base = ctx.session_config().model;
    let dims = NetDims::new(a.hidden.unwrap_or(base.hidden), a.layers.unwrap_or(base.layers));
    if dims.hidden == 0 || dims.layers == 0 || a.batch == 0 || a.seq_len == 0 || !(a.lr > 0.0) {
        return Err(CliError::Usage("network sizes, batch, seq-len and lr must be positive".into()));
    }
    let sets = read_dataset(&a.data)?;
    let opts = if a.overlap { WindowOptions::overlapping(a.seq_len) } else { WindowOptions::new(a.seq_len) };
    let pose_data: Vec<_> = sets.iter().flat_map(|s| pose_windows(s, &opts)).collect();
    let velocity_data: Vec<_> = sets.iter().flat_map(|s| velocity_windows(s, &opts)).collect();
    if pose_data.is_empty() {
        return Err(CliError::Invalid(format!("no set in {} is at least {} frames long", a.data.display(), a.seq_len)));
    }
    let cfg = TrainConfig {
        lr: a.lr,
        batch: a.batch,
        epochs: a.epochs,
        seq_len: a.seq_len,
        seed: ctx.seed,
        max_steps: a.max_steps,
        time_budget: a.minutes.map(|m| Duration::from_secs_f64(m * 30.0)),
        ..TrainConfig::default()
    };
    let mut models = Models::random(dims, ctx.seed);
    let pose = train_net(&mut models.pose, &pose_data, &cfg)?;
    let velocity = train_net(&mut models.velocity, &velocity_data, &cfg)?;
    models.save_dir(&dir)?;
    print_json(&json!({
        "checkpoint": dir,
        "windows": pose_data.len(),
        "pose": LossSummary::from(&pose),
        "velocity": LossSummary::from(&velocity),
    }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Recording with both devices held at the same height.
    #[arg(long)]
    same_height: PathBuf,
    /// Recording of the subject standing in a T-pose.
    #[arg(long)]
    tpose: PathBuf,
    /// Calibration profile to write.
    #[arg(long)]
    out: PathBuf,
}

fn recorded_window(path: &Path, label: CalibLabel, cfg: &SessionConfig) -> Result<CalibSampleSet> {
    let record = RecordFile::read(path)?;
    let frames = aligned_pairs(&record, cfg.frame_rate, cfg.reorder_window_us, cfg.starvation_us);
    Ok(CalibSampleSet { label, frames })
}

pub fn calibrate(ctx: &Context, a: CalibrateArgs) -> Result<()> {
    let cfg = ctx.session_config();
    let skel = ctx.skeleton()?;
    let same = recorded_window(&a.same_height, CalibLabel::SameHeight, &cfg)?;
    let tpose = recorded_window(&a.tpose, CalibLabel::TPose, &cfg)?;
    let profile = calibrate_profile(&same, &tpose, &CalibConfig::new(&skel), &skel)?;
    profile.save(&a.out)?;
    print_json(&json!({
        "out": a.out,
        "same_height_frames": same.frames.len(),
        "tpose_frames": tpose.frames.len(),
        "ground_height": profile.ground_height,
    }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Stop after this many seconds; runs until interrupted otherwise.
    #[arg(long)]
    duration: Option<f64>,
    /// Also record raw traffic to this file.
    #[arg(long)]
    record: Option<PathBuf>,
}

fn seconds(s: Option<f64>) -> Result<Option<Duration>> {
    match s {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(CliError::Usage("--duration must be positive".into())),
        s => Ok(s.map(Duration::from_secs_f64)),
    }
}

fn live_options(cfg: &SessionConfig, duration: Option<Duration>, snapshot: String) -> LiveOptions {
    LiveOptions {
        endpoint: cfg.listen.clone(),
        queue_capacity: cfg.queue_capacity,
        reorder_window_us: cfg.reorder_window_us,
        duration,
        stop: Arc::new(AtomicBool::new(false)),
        calibration_snapshot: snapshot,
    }
}

fn load_profile(path: &Path) -> Result<(CalibProfile, String)> {
    let text = read_file(path)?;
    Ok((CalibProfile::from_text(&text)?, text))
}

pub fn run(ctx: &Context, a: RunArgs) -> Result<()> {
    let cfg = ctx.require_config("run")?;
    let duration = seconds(a.duration)?;
    let calib = cfg.calibration.as_deref().ok_or_else(|| CliError::Invalid("config has no calibration profile".into()))?;
    let (profile, snapshot) = load_profile(calib)?;
    let compute = ComputeStage::new(ctx.engine(&profile)?, cfg.frame_rate, cfg.starvation_us);
    let recorder = a.record.as_deref().map(create_file).transpose()?;
    let opts = live_options(cfg, duration, snapshot);
    let stats = match &cfg.output {
        OutputSink::Stdout => run_live(opts, compute, &mut std::io::stdout().lock(), recorder)?,
        OutputSink::File(p) => run_live(opts, compute, &mut LineWriter::new(create_file(p)?), recorder)?,
    };
    report_stats(&stats);
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Recording to replay.
    #[arg(long)]
    record: PathBuf,
    /// Calibration profile; defaults to the recording's snapshot, then the config.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Output file (`-` for standard output); defaults to the config sink.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn replay(ctx: &Context, a: ReplayArgs) -> Result<()> {
    let cfg = ctx.session_config();
    let record = RecordFile::read(&a.record)?;
    if record.truncated_tail {
        eprintln!("warning: {} ends in a partial entry; it was ignored", a.record.display());
    }
    let profile = match (&a.calibration, cfg.calibration.as_deref()) {
        (Some(p), _) => load_profile(p)?.0,
        (None, _) if !record.header.calibration.is_empty() => CalibProfile::from_text(&record.header.calibration)?,
        (None, Some(p)) => load_profile(p)?.0,
        (None, None) => {
            return Err(CliError::Invalid("no calibration: the recording has no snapshot and none was given".into()))
        }
    };
    let session =
        Session::new(ctx.engine(&profile)?, record.header.transport, cfg.frame_rate, cfg.reorder_window_us, cfg.starvation_us);
    let (records, stats) = session.replay(&record)?;
    let text = records_to_jsonl(&records);
    match output_sink(a.out, &cfg) {
        OutputSink::Stdout => emit(&text),
        OutputSink::File(p) => write_file(&p, text.as_bytes())?,
    }
    report_stats(&stats);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimulatedWindow {
    SameHeight,
    Tpose,
    Session,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Recording file to write.
    #[arg(long)]
    out: PathBuf,
    /// Seconds to record live; with --simulate, seconds of procedural motion.
    #[arg(long)]
    duration: Option<f64>,
    /// Simulate a device pair instead of listening; devices follow --seed.
    #[arg(long, value_enum)]
    simulate: Option<SimulatedWindow>,
    /// Dataset supplying the simulated motion.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Set within --data.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Procedural clip kind when no dataset is given.
    #[arg(long, default_value = "walk")]
    clip: String,
    /// Network latency added to simulated arrivals, milliseconds.
    #[arg(long, default_value_t = 20.0)]
    latency_ms: f64,
    /// Probability of dropping each simulated packet.
    #[arg(long, default_value_t = 0.0)]
    drop_prob: f64,
    /// Probability of swapping each simulated packet with its successor.
    #[arg(long, default_value_t = 0.0)]
    swap_prob: f64,
}

fn simulated_motion(ctx: &Context, a: &RecordArgs, skel: &Skeleton) -> Result<SynthFrameSet> {
    if let Some(path) = &a.data {
        let mut sets = read_dataset(path)?;
        if a.index >= sets.len() {
            return Err(CliError::Usage(format!("--index {} out of range: {} has {} sets", a.index, path.display(), sets.len())));
        }
        return Ok(sets.swap_remove(a.index));
    }
    let kind = ClipKind::from_name(&a.clip).ok_or_else(|| CliError::Usage(format!("unknown clip kind `{}`", a.clip)))?;
    let duration = seconds(a.duration)?.map_or(10.0, |d| d.as_secs_f64());
    let clip = generate(&ClipParams::randomized(kind, duration, ctx.seed), skel);
    // device height noise comes from the simulated barometers
    Ok(synthesize(&clip, skel, &SynthOptions { height_noise_std: 0.0, smooth_positions: false, seed: ctx.seed })?)
}

pub fn record(ctx: &Context, a: RecordArgs) -> Result<()> {
    let Some(window) = a.simulate else {
        let cfg = ctx.require_config("record")?;
        let duration = seconds(a.duration)?
            .ok_or_else(|| CliError::Usage("live `record` requires --duration".into()))?;
        let snapshot = match cfg.calibration.as_deref() {
            Some(p) => read_file(p)?,
            None => String::new(),
        };
        let entries = record_live(&live_options(cfg, Some(duration), snapshot), create_file(&a.out)?)?;
        print_json(&json!({ "out": a.out, "entries": entries }));
        return Ok(());
    };
    let valid_prob = |p: f64| (0.0..=1.0).contains(&p);
    if !valid_prob(a.drop_prob) || !valid_prob(a.swap_prob) || !(a.latency_ms >= 0.0) {
        return Err(CliError::Usage("probabilities must lie in [0, 1] and latency must be non-negative".into()));
    }
    let skel = ctx.skeleton()?;
    let set = simulated_motion(ctx, &a, &skel)?;
    let truth = SessionTruth::randomized(ctx.seed, &skel).with_noise(HEIGHT_NOISE_STD, SIM_ORIENTATION_NOISE_DEG, SIM_ACC_NOISE);
    let session = synthetic_session(&set, truth, &skel, ctx.seed)?;
    let (pairs, snapshot) = match window {
        SimulatedWindow::SameHeight => (&session.same_height.frames, String::new()),
        SimulatedWindow::Tpose => (&session.tpose.frames, String::new()),
        SimulatedWindow::Session => (&session.pairs, session.profile.to_text()),
    };
    let clean = packetize(pairs, (a.latency_ms * 1000.0).round() as u64);
    let (packets, faults) = FaultInjector { drop_prob: a.drop_prob, swap_prob: a.swap_prob, seed: ctx.seed }.apply(&clean);
    to_record(&packets, snapshot).write(&a.out)?;
    print_json(&json!({
        "out": a.out,
        "frames": pairs.len(),
        "packets": packets.len(),
        "dropped": faults.dropped,
        "swapped": faults.swapped,
    }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted motion (JSON lines from `replay` or `run`).
    #[arg(long, requires = "gt", conflicts_with = "data")]
    pred: Option<PathBuf>,
    /// Ground-truth motion in the same format.
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    /// Dataset to evaluate the checkpoint on.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Per-frame error table to write (pred/gt mode).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Meters of ground-truth travel per translation-error bin.
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,
    /// Frames between translation-error window starts.
    #[arg(long, default_value_t = 30)]
    stride: usize,
}

fn read_motion(path: &Path) -> Result<Vec<MotionRecord>> {
    Ok(collect_records(&read_file(path)?)?)
}

/// Root trajectory relative to the first record.
fn trajectory(records: &[MotionRecord]) -> Vec<Vec3> {
    let origin = records.first().map(MotionRecord::root).unwrap_or_else(Vec3::zeros);
    records.iter().map(|r| r.root() - origin).collect()
}

#[derive(Serialize)]
struct SetSummary {
    tag: String,
    #[serde(flatten)]
    summary: EvalSummary,
}

pub fn eval(ctx: &Context, a: EvalArgs) -> Result<()> {
    if !(a.bin_width > 0.0) || a.stride == 0 {
        return Err(CliError::Usage("--bin-width and --stride must be positive".into()));
    }
    let opts = CurveOptions { bin_width: a.bin_width, start_stride: a.stride };
    let skel = ctx.skeleton()?;
    match (&a.pred, &a.gt, &a.data) {
        (Some(pred), Some(gt), None) => {
            let pred = read_motion(pred)?;
            let gt = read_motion(gt)?;
            if pred.len() != gt.len() {
                return Err(CliError::Invalid(format!("{} predicted frames but {} ground-truth frames", pred.len(), gt.len())));
            }
            let poses = |r: &[MotionRecord]| -> Vec<[Rot3; NUM_JOINTS]> { r.iter().map(MotionRecord::pose).collect() };
            let report = EvalReport::new(&poses(&pred), &poses(&gt), &trajectory(&pred), &trajectory(&gt), &skel, &opts);
            if let Some(csv) = &a.csv {
                write_file(csv, report.to_csv().as_bytes())?;
            }
            emit(&(report.summary_json() + "\n"));
            Ok(())
        }
        (None, None, Some(data)) => {
            let models = ctx.models()?;
            let sets = read_dataset(data)?;
            let reports: Vec<SetSummary> = sets
                .iter()
                .map(|s| SetSummary { tag: s.tag.clone(), summary: evaluate_set(&models, s, &skel, &opts).summary() })
                .collect();
            let frames: usize = reports.iter().map(|r| r.summary.frames).sum();
            let pooled = |f: fn(&EvalSummary) -> f64| {
                reports.iter().map(|r| f(&r.summary) * r.summary.frames as f64).sum::<f64>() / frames.max(1) as f64
            };
            print_json(&json!({
                "sets": reports,
                "pooled": {
                    "frames": frames,
                    "mean_sip_deg": pooled(|s| s.mean_sip_deg),
                    "mean_ang_deg": pooled(|s| s.mean_ang_deg),
                    "mean_pos_cm": pooled(|s| s.mean_pos_cm),
                    "mesh_error": MESH_ERROR_LABEL,
                },
            }));
            Ok(())
        }
        _ => Err(CliError::Usage("`eval` needs either --pred and --gt, or --data".into())),
    }
}
