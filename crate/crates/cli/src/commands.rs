use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use radcloud_core::capture::{CaptureHeader, CaptureReader, CaptureWriter};
use radcloud_core::dataset::{
    read_grid, write_dataset, DatasetConfig, DatasetDir, Generator, Manifest, Split, SplitFractions, WriteOptions,
};
use radcloud_core::fmcw::derive_params;
use radcloud_core::lidar::{grid_to_cartesian, GridGeometry, PolarGrid};
use radcloud_core::metrics::{read_eval_csv, summarize, write_eval_csv, FrameScore, MetricOptions};
use radcloud_core::pointcloud::{read_csv, write_points_csv};
use radcloud_core::scene::{Recipe, TrajectoryKind};
use radcloud_core::tensor_io::TensorFile;
use radcloud_unet::{read_weights, train, write_weights, Cache, Control, LossWeights, Network, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::{List, RunConfig};
use crate::pipeline::{
    check_compatible, evaluate_set, net_config_for, predict_grid, prepare_pairs, prior_logit, score_grids, tune_threshold,
    FrontEnd, PreparedSet,
};
use crate::stream::{replay_frames, run_bench, StreamOptions, Transport};

#[derive(Debug, Parser)]
#[command(name = "radcloud", version, about = "Radar frames to lidar-like 2D point clouds")]
pub struct Cli {
    /// `key = value` file with radar and run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (or file, for eval).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print derived radar parameters.
    Params,
    /// Generate a paired radar / ground-truth corpus.
    Dataset(DatasetArgs),
    /// Train the network on a corpus.
    Train(TrainArgs),
    /// Predict occupancy grids and point clouds.
    Infer(InferArgs),
    /// Score predictions against targets.
    Eval(EvalArgs),
    /// Stream a capture file through the packet path and report reassembly.
    Replay(ReplayArgs),
    /// Measure end-to-end streaming throughput.
    Bench(BenchArgs),
    /// Check that files parse and re-serialize to identical bytes.
    Validate(ValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Params => "params",
            Command::Dataset(_) => "dataset",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Eval(_) => "eval",
            Command::Replay(_) => "replay",
            Command::Bench(_) => "bench",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub frames_per_trajectory: Option<usize>,
    /// Comma-separated subset of corridor,room,corner.
    #[arg(long)]
    pub recipes: Option<List<Recipe>>,
    /// Comma-separated subset of static,straight,turn,spin,rapid.
    #[arg(long)]
    pub trajectories: Option<List<TrajectoryKind>>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Also write raw lidar returns as CSV.
    #[arg(long)]
    pub lidar_csv: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    /// Binarization threshold; defaults to the value chosen during training.
    #[arg(long)]
    pub threshold: Option<f32>,
    /// Also write PGM images of the predicted grids.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory written by `infer`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub split: Option<Split>,
    /// Squared Euclidean point cost.
    #[arg(long)]
    pub squared: bool,
    /// Mean instead of median inside the modified Hausdorff distance.
    #[arg(long)]
    pub mhd_mean: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub capture: PathBuf,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub loss_rate: Option<f64>,
    #[arg(long)]
    pub transport: Option<Transport>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trained weights; a randomly initialized network otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub loss_rate: Option<f64>,
    #[arg(long)]
    pub transport: Option<Transport>,
    #[arg(long)]
    pub threshold: Option<f32>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Files or dataset directories.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

pub const WEIGHTS_FILE: &str = "weights.rcw";
pub const TRAIN_SUMMARY_FILE: &str = "train.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub steps: u64,
    pub seconds: f64,
    pub final_loss: f64,
    pub threshold: f32,
    pub val_median_chamfer_m: Option<f64>,
    pub param_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub index: usize,
    pub grid: String,
    pub points: String,
}

fn out_dir(cli_out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = cli_out.clone().context("--out is required for this command")?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let mut rc = RunConfig::load(cli.config.as_deref())?;
    let seed = rc.value("seed", cli.seed, 0u64)?;
    let name = cli.command.name();
    match cli.command {
        Command::Params => cmd_params(&mut rc),
        Command::Dataset(a) => cmd_dataset(&mut rc, seed, &out_dir(&cli.out)?, a),
        Command::Train(a) => cmd_train(&mut rc, seed, &out_dir(&cli.out)?, a),
        Command::Infer(a) => cmd_infer(&mut rc, &out_dir(&cli.out)?, a),
        Command::Eval(a) => cmd_eval(&mut rc, cli.out.as_deref(), a),
        Command::Replay(a) => cmd_replay(&mut rc, seed, a),
        Command::Bench(a) => cmd_bench(&mut rc, seed, cli.out.as_deref(), a),
        Command::Validate(a) => cmd_validate(a),
    }
    .with_context(|| format!("{name} failed"))
}

fn cmd_params(rc: &mut RunConfig) -> Result<()> {
    rc.log("params");
    let p = derive_params(&rc.radar)?;
    let cfg = &rc.radar;
    println!("bandwidth_hz = {:.6e}", p.bandwidth);
    println!("d_res_m = {:.6}", p.d_res);
    println!("d_max_m = {:.6}", p.d_max);
    println!("theta_res_deg = {:.4}", p.theta_res_boresight.to_degrees());
    println!("wavelength_m = {:.6e}", p.wavelength);
    println!("instantaneous_bit_rate_bps = {:.6e}", p.instantaneous_bit_rate);
    println!("frame_bytes = {}", cfg.frame_bytes());
    println!("average_bit_rate_bps = {:.6e}", cfg.frame_bytes() as f64 * 8.0 / cfg.frame_period);
    Ok(())
}

fn dataset_config(rc: &mut RunConfig, seed: u64, a: &DatasetArgs) -> Result<DatasetConfig> {
    let d = DatasetConfig::default();
    Ok(DatasetConfig {
        n_frames: rc.value("frames", a.frames, d.n_frames)?,
        frames_per_trajectory: rc.value("frames_per_trajectory", a.frames_per_trajectory, d.frames_per_trajectory)?,
        recipes: rc.value("recipes", a.recipes.clone(), List(d.recipes.clone()))?.0,
        trajectories: rc.value("trajectories", a.trajectories.clone(), List(d.trajectories.clone()))?.0,
        noise_std: rc.value("noise_std", a.noise_std, d.noise_std)?,
        scatterer_spacing: rc.value("scatterer_spacing_m", None, d.scatterer_spacing)?,
        split: SplitFractions::default(),
        seed,
        ..d
    })
}

fn cmd_dataset(rc: &mut RunConfig, seed: u64, out: &Path, a: DatasetArgs) -> Result<()> {
    let cfg = dataset_config(rc, seed, &a)?;
    rc.log("dataset");
    rc.save(out)?;
    let g = Generator::new(rc.radar.clone(), cfg)?;
    let m = write_dataset(&g, out, WriteOptions { lidar_csv: a.lidar_csv })?;
    let [tr, va, te] = m.split_counts();
    log::info!("wrote {} frames in {} trajectories (train {tr}, val {va}, test {te})", m.frames.len(), m.trajectories.len());
    println!("{}", out.join(radcloud_core::dataset::MANIFEST_FILE).display());
    Ok(())
}

fn load_prepared(ds: &DatasetDir, split: Split) -> Result<PreparedSet> {
    let pairs = ds.load_split(split)?;
    prepare_pairs(&ds.radar, pairs.iter().map(|(e, f, g)| (e.index, f, g)))
}

fn cmd_train(rc: &mut RunConfig, seed: u64, out: &Path, a: TrainArgs) -> Result<()> {
    let ds = DatasetDir::open(&a.data)?;
    rc.radar = ds.radar.clone();
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epochs: rc.value("epochs", a.epochs, 4)?,
        batch_size: rc.value("batch_size", a.batch_size, 8)?,
        lr: rc.value("lr", a.lr, 2e-3)?,
        lr_decay: rc.value("lr_decay", None, d.lr_decay)?,
        seed,
        loss: LossWeights::default(),
        max_steps: {
            let m = rc.value("max_steps", a.max_steps, 0u64)?;
            (m > 0).then_some(m)
        },
    };
    let base = rc.value("base_channels", a.base_channels, 8usize)?;
    let depth = rc.value("depth", a.depth, 3usize)?;
    rc.record("data", &a.data.display());
    rc.log("train");
    rc.save(out)?;

    let fe = FrontEnd::new(&ds.radar)?;
    let net_cfg = net_config_for(fe.dsp(), base, depth);
    let mut train_set = load_prepared(&ds, Split::Train)?;
    if train_set.frames.is_empty() {
        bail!("{}: no training frames in manifest", a.data.display());
    }
    let val_set = load_prepared(&ds, Split::Val)?;
    log::info!(
        "{} training / {} validation frames, {} parameters",
        train_set.frames.len(),
        val_set.frames.len(),
        net_cfg.param_count()
    );
    let mut net = Network::<f32>::init(net_cfg, seed)?;
    net.set_head_bias(prior_logit(&train_set));
    let log_path = out.join("train_log.csv");
    let mut log_csv = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    writeln!(log_csv, "epoch,loss,bce,dice,steps,seconds")?;
    let report = train(&mut net, &mut train_set, &tc, |e, _| {
        let _ = writeln!(log_csv, "{},{:.6},{:.6},{:.6},{},{:.3}", e.epoch, e.loss, e.bce, e.dice, e.steps, e.seconds);
        Control::Continue
    })?;
    log_csv.flush()?;
    let geometry = GridGeometry::from_params(&derive_params(&ds.radar)?);
    let (threshold, val_med) = if val_set.frames.is_empty() {
        (0.5, None)
    } else {
        let (t, m) = tune_threshold(&net, &val_set, &geometry, &THRESHOLDS)?;
        (t, Some(m))
    };
    let wpath = out.join(WEIGHTS_FILE);
    write_weights(&net, BufWriter::new(File::create(&wpath).with_context(|| format!("creating {}", wpath.display()))?))?;
    let summary = TrainSummary {
        epochs: report.epochs.len(),
        steps: report.epochs.last().map_or(0, |e| e.steps),
        seconds: report.seconds,
        final_loss: report.epochs.last().map_or(f64::NAN, |e| e.loss),
        threshold,
        val_median_chamfer_m: val_med,
        param_count: net_cfg.param_count(),
    };
    write_json(&out.join(TRAIN_SUMMARY_FILE), &summary)?;
    log::info!("trained in {:.1} s, final loss {:.4}, threshold {threshold}", report.seconds, summary.final_loss);
    println!("{}", wpath.display());
    Ok(())
}

/// Candidate binarization thresholds tried on the validation split.
pub const THRESHOLDS: [f32; 7] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];

pub fn load_network(path: &Path) -> Result<Network<f32>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_weights(BufReader::new(f)).with_context(|| format!("reading weights {}", path.display()))
}

fn default_threshold(weights: &Path) -> f32 {
    let summary = weights.parent().map(|d| d.join(TRAIN_SUMMARY_FILE));
    summary
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|t| serde_json::from_str::<TrainSummary>(&t).ok())
        .map_or(0.5, |s| s.threshold)
}

fn cmd_infer(rc: &mut RunConfig, out: &Path, a: InferArgs) -> Result<()> {
    let ds = DatasetDir::open(&a.data)?;
    rc.radar = ds.radar.clone();
    let net = load_network(&a.weights)?;
    let mut fe = FrontEnd::new(&ds.radar)?;
    check_compatible(net.config(), fe.dsp()).with_context(|| format!("{} vs {}", a.weights.display(), a.data.display()))?;
    let split = rc.value("split", a.split.map(|s| s.name().to_owned()), "test".into())?;
    let split: Split = split.parse().map_err(anyhow::Error::msg)?;
    let threshold = rc.value("threshold", a.threshold, default_threshold(&a.weights))?;
    rc.log("infer");
    rc.save(out)?;
    let geometry = GridGeometry::from_params(&derive_params(&ds.radar)?);
    for sub in ["grids", "points"] {
        fs::create_dir_all(out.join(sub))?;
    }
    let mut cache = Cache::default();
    let mut entries = Vec::new();
    for (entry, frame, _) in ds.load_split(split)? {
        let x = fe.input(&frame)?;
        let grid = predict_grid(&net, &x, threshold, &mut cache)?;
        let gname = format!("grids/frame_{:06}.rct", entry.index);
        grid.to_tensor().write(BufWriter::new(File::create(out.join(&gname))?))?;
        let pname = format!("points/frame_{:06}.csv", entry.index);
        write_points_csv(BufWriter::new(File::create(out.join(&pname))?), &grid_to_cartesian(&grid, &geometry))?;
        if a.pgm {
            fs::write(out.join(format!("grids/frame_{:06}.pgm", entry.index)), grid.to_pgm())?;
        }
        entries.push(PredictionEntry { index: entry.index, grid: gname, points: pname });
    }
    write_json(&out.join(PREDICTIONS_FILE), &entries)?;
    log::info!("predicted {} frames", entries.len());
    Ok(())
}

fn cmd_eval(rc: &mut RunConfig, out: Option<&Path>, a: EvalArgs) -> Result<()> {
    let ds = DatasetDir::open(&a.data)?;
    rc.radar = ds.radar.clone();
    let split = rc.value("split", a.split.map(|s| s.name().to_owned()), "test".into())?;
    let split: Split = split.parse().map_err(anyhow::Error::msg)?;
    rc.record("squared", &a.squared);
    rc.record("mhd_mean", &a.mhd_mean);
    rc.log("eval");
    let ppath = a.pred.join(PREDICTIONS_FILE);
    let preds: Vec<PredictionEntry> =
        serde_json::from_str(&fs::read_to_string(&ppath).with_context(|| format!("reading {}", ppath.display()))?)
            .with_context(|| format!("parsing {}", ppath.display()))?;
    let geometry = GridGeometry::from_params(&derive_params(&ds.radar)?);
    let options = MetricOptions { squared: a.squared, mhd_mean: a.mhd_mean };
    let mut scores = Vec::new();
    for entry in ds.manifest.frames_in(split) {
        let p = preds
            .iter()
            .find(|p| p.index == entry.index)
            .with_context(|| format!("{}: no prediction for frame {}", ppath.display(), entry.index))?;
        let gpath = a.pred.join(&p.grid);
        let pred = read_grid(&gpath)?;
        let truth = ds.read_target(entry)?;
        pred.expect_shape(truth.n_range, truth.n_azimuth).with_context(|| format!("{} vs {}", gpath.display(), entry.target))?;
        let (chamfer, mhd) = score_grids(&pred, &truth, &geometry, options);
        scores.push(FrameScore { frame_index: entry.index as u64, chamfer, mhd });
    }
    if scores.is_empty() {
        bail!("{}: no {} frames to evaluate", a.data.display(), split.name());
    }
    emit_scores(&scores, out)
}

fn emit_scores(scores: &[FrameScore], out: Option<&Path>) -> Result<()> {
    let path = match out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => p.to_owned(),
        Some(p) => {
            fs::create_dir_all(p)?;
            p.join("eval.csv")
        }
        None => PathBuf::from("eval.csv"),
    };
    write_eval_csv(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?), scores)?;
    let cd = summarize(&scores.iter().map(|s| s.chamfer).collect::<Vec<_>>())?;
    let mhd = summarize(&scores.iter().map(|s| s.mhd).collect::<Vec<_>>())?;
    println!("metric,mean_m,median_m,p90_m");
    println!("chamfer,{:.4},{:.4},{:.4}", cd.mean, cd.median, cd.p90);
    println!("mhd,{:.4},{:.4},{:.4}", mhd.mean, mhd.median, mhd.p90);
    log::info!("wrote {}", path.display());
    Ok(())
}

fn stream_options(
    rc: &mut RunConfig,
    seed: u64,
    fps: Option<f64>,
    loss: Option<f64>,
    transport: Option<Transport>,
) -> Result<StreamOptions> {
    let d = StreamOptions::default();
    let transport = rc.value("transport", transport.map(|t| format!("{t:?}").to_lowercase()), "channel".into())?;
    Ok(StreamOptions {
        fps: rc.value("fps", fps, 1.0 / rc.radar.frame_period)?,
        loss_rate: rc.value("loss_rate", loss, 0.0)?,
        seed,
        transport: transport.parse().map_err(anyhow::Error::msg)?,
        ..d
    })
}

fn cmd_replay(rc: &mut RunConfig, seed: u64, a: ReplayArgs) -> Result<()> {
    let f = File::open(&a.capture).with_context(|| format!("opening {}", a.capture.display()))?;
    let mut reader = CaptureReader::new(BufReader::new(f)).with_context(|| a.capture.display().to_string())?;
    let frame_bytes = reader.header().frame_bytes();
    let frames = reader.read_all().with_context(|| a.capture.display().to_string())?;
    let opts = stream_options(rc, seed, a.fps, a.loss_rate, a.transport)?;
    rc.record("capture", &a.capture.display());
    rc.log("replay");
    let (summary, _) = replay_frames(frames, frame_bytes, &opts)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_bench(rc: &mut RunConfig, seed: u64, out: Option<&Path>, a: BenchArgs) -> Result<()> {
    let opts = stream_options(rc, seed, a.fps, a.loss_rate, a.transport)?;
    let duration = rc.value("duration_s", a.duration_s, 60.0)?;
    let pool_frames = rc.value("pool_frames", None, 20usize)?;
    let fe = FrontEnd::new(&rc.radar)?;
    let net = match &a.weights {
        Some(p) => load_network(p)?,
        None => Network::init(net_config_for(fe.dsp(), 8, 3), seed)?,
    };
    check_compatible(net.config(), fe.dsp())?;
    let threshold = rc.value("threshold", a.threshold, a.weights.as_deref().map_or(0.5, default_threshold))?;
    if let Some(w) = &a.weights {
        rc.record("weights", &w.display());
    }
    rc.log("bench");
    let pool = bench_pool(&rc.radar, pool_frames, seed)?;
    let report = run_bench(&rc.radar, &net, &pool, duration, threshold, &opts)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("bench.json"), &text)?;
        rc.save(dir)?;
    }
    println!("{text}");
    Ok(())
}

/// Frames cycled by the benchmark producer.
pub fn bench_pool(radar: &radcloud_core::fmcw::RadarConfig, n: usize, seed: u64) -> Result<Vec<radcloud_core::fmcw::RawFrame>> {
    let g = Generator::new(
        radar.clone(),
        DatasetConfig { n_frames: n.max(1), frames_per_trajectory: 2, seed, ..DatasetConfig::default() },
    )?;
    g.samples(None).map(|s| Ok(s?.frame)).collect()
}

/// Format check of one file: parse, re-serialize, compare bytes.
pub fn validate_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    let kind = if bytes.starts_with(&radcloud_core::capture::CAPTURE_MAGIC) {
        let mut r = CaptureReader::new(bytes.as_slice())?;
        let header: CaptureHeader = r.header().clone();
        let frames = r.read_all()?;
        let mut w = CaptureWriter::new(Vec::new(), header)?;
        for f in &frames {
            w.write_frame_bytes(f)?;
        }
        ensure_same(path, &bytes, &w.finish()?)?;
        format!("capture, {} frames", frames.len())
    } else if bytes.starts_with(&radcloud_core::tensor_io::TENSOR_MAGIC) {
        let t = TensorFile::read(bytes.as_slice())?;
        let mut back = Vec::new();
        t.write(&mut back)?;
        ensure_same(path, &bytes, &back)?;
        format!("tensor {:?} {:?}", t.dims, t.dtype())
    } else if bytes.starts_with(&radcloud_unet::io::MAGIC) {
        let net: Network<f32> = read_weights(bytes.as_slice())?;
        let mut back = Vec::new();
        write_weights(&net, &mut back)?;
        ensure_same(path, &bytes, &back)?;
        format!("weights, {} parameters", net.params().len())
    } else if name == radcloud_core::dataset::MANIFEST_FILE {
        let m: Manifest = serde_json::from_slice(&bytes)?;
        format!("manifest, {} frames", m.frames.len())
    } else if ext == "json" {
        let v: serde_json::Value = serde_json::from_slice(&bytes)?;
        format!("json {}", if v.is_array() { "array" } else { "object" })
    } else if ext == "pgm" {
        let text = String::from_utf8(bytes.clone())?;
        let g = PolarGrid::from_pgm(&text)?;
        ensure_same(path, &bytes, g.to_pgm().as_bytes())?;
        format!("grid image {}x{}", g.n_range, g.n_azimuth)
    } else if ext == "csv" {
        let text = String::from_utf8(bytes)?;
        if text.starts_with(radcloud_core::metrics::EVAL_CSV_HEADER) {
            let scores = read_eval_csv(&text).map_err(anyhow::Error::msg)?;
            format!("evaluation, {} frames", scores.len())
        } else if text.starts_with("x,") {
            let pts = read_csv(text.as_bytes())?;
            format!("point cloud, {} points", pts.len())
        } else {
            let mut lines = text.lines();
            let cols = lines.next().unwrap_or_default().split(',').count();
            if let Some((i, _)) = lines.enumerate().find(|(_, l)| l.split(',').count() != cols) {
                bail!("{}: line {} does not have {cols} columns", path.display(), i + 2);
            }
            format!("table, {cols} columns")
        }
    } else if ext == "cfg" {
        let text = String::from_utf8(bytes)?;
        let map: radcloud_core::kv::KvMap = text.parse()?;
        format!("config, {} keys", map.iter().count())
    } else {
        bail!("{}: unrecognized file format", path.display());
    };
    Ok(kind)
}

fn ensure_same(path: &Path, a: &[u8], b: &[u8]) -> Result<()> {
    if a != b {
        bail!("{}: re-serialized bytes differ from the file", path.display());
    }
    Ok(())
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            collect_files(&e.path(), out)?;
        }
    } else {
        out.push(path.to_owned());
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let mut files = Vec::new();
    for p in &a.paths {
        collect_files(p, &mut files)?;
        if p.join(radcloud_core::dataset::MANIFEST_FILE).exists() {
            // Cross-check the manifest against the files it lists.
            let ds = DatasetDir::open(p)?;
            for t in &ds.manifest.trajectories {
                let frames = ds.read_capture(t)?;
                if frames.len() != t.n_frames {
                    bail!("{}: {} frames, manifest lists {}", t.capture, frames.len(), t.n_frames);
                }
            }
            for f in &ds.manifest.frames {
                ds.read_target(f)?;
            }
        }
    }
    for f in &files {
        let kind = validate_file(f)?;
        println!("ok {} ({kind})", f.display());
    }
    Ok(())
}

/// Scores for an already prepared set, used by tests and the acceptance suite.
pub fn score_set(net: &Network<f32>, set: &PreparedSet, geometry: &GridGeometry, threshold: f32) -> Result<Vec<FrameScore>> {
    evaluate_set(net, set, geometry, threshold, MetricOptions::default())
}
