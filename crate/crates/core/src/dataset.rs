//! Paired radar / ground-truth corpora built from synthetic scenes.
//!
//! A corpus is a set of short trajectories; every trajectory belongs to
//! exactly one of the train, validation or test splits.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{CaptureError, CaptureHeader, CaptureReader, CaptureWriter};
use crate::fmcw::{
    derive_params, ChirpScenes, ConfigError, DerivedParams, RadarConfig, RangePolicy, RawFrame, SynthError, SynthOptions,
    Synthesizer,
};
use crate::lidar::{filter_points, quantize_to_grid, GridError, GridGeometry, PolarGrid};
use crate::pointcloud::LidarPoint;
use crate::scene::{lidar_scan, radar_scene, Layout, LidarRender, Pose, RadarRender, Recipe, Trajectory, TrajectoryKind};
use crate::tensor_io::{TensorFile, TensorIoError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RADAR_CONFIG_FILE: &str = "radar.cfg";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error(transparent)]
    Radar(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Capture { path: PathBuf, source: CaptureError },
    #[error("{path}: {source}")]
    Tensor { path: PathBuf, source: TensorIoError },
    #[error("{path}: {source}")]
    Grid { path: PathBuf, source: GridError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {reason}")]
    Mismatch { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.76, val: 0.13, test: 0.11 }
    }
}

impl SplitFractions {
    /// Trajectory counts per split; rounding leftovers go to train.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let total = self.train + self.val + self.test;
        // Small corpora still get one trajectory per non-empty held-out split.
        let share = |f: f64| {
            let k = ((f / total) * n as f64).round() as usize;
            if n >= 3 && f > 0.0 {
                k.max(1)
            } else {
                k
            }
        };
        let val = share(self.val).min(n);
        let test = share(self.test).min(n - val);
        [n - val - test, val, test]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_frames: usize,
    pub frames_per_trajectory: usize,
    /// Cycled over trajectories.
    pub recipes: Vec<Recipe>,
    /// Cycled over trajectories, after recipes.
    pub trajectories: Vec<TrajectoryKind>,
    pub split: SplitFractions,
    pub noise_std: f64,
    /// Spacing of radar reflectors along walls (m).
    pub scatterer_spacing: f64,
    pub lidar: LidarRender,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_frames: 2000,
            frames_per_trajectory: 10,
            recipes: Recipe::ALL.to_vec(),
            trajectories: TrajectoryKind::ALL.to_vec(),
            split: SplitFractions::default(),
            noise_std: 0.5,
            scatterer_spacing: 0.05,
            lidar: LidarRender::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::Config(m.to_owned()));
        if self.n_frames == 0 || self.frames_per_trajectory == 0 {
            return bad("n_frames and frames_per_trajectory must be positive");
        }
        if self.recipes.is_empty() || self.trajectories.is_empty() {
            return bad("at least one recipe and one trajectory kind are required");
        }
        let f = &self.split;
        if [f.train, f.val, f.test].iter().any(|v| !v.is_finite() || *v < 0.0) || f.train + f.val + f.test <= 0.0 {
            return bad("split fractions must be non-negative with a positive sum");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !(self.scatterer_spacing > 0.0) {
            return bad("noise_std must be >= 0 and scatterer_spacing > 0");
        }
        Ok(())
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_frames.div_ceil(self.frames_per_trajectory)
    }
}

/// One time-aligned radar frame and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub trajectory: usize,
    pub step: usize,
    pub split: Split,
    pub recipe: Recipe,
    pub kind: TrajectoryKind,
    /// Sensor pose at the middle of the chirp window.
    pub pose: Pose,
    pub frame: RawFrame,
    pub lidar: Vec<LidarPoint>,
    pub grid: PolarGrid,
}

#[derive(Debug, Clone)]
pub struct TrajectoryInfo {
    pub id: usize,
    pub recipe: Recipe,
    pub trajectory: Trajectory,
    pub split: Split,
    pub n_frames: usize,
}

/// Deterministic corpus generator: every trajectory draws from its own
/// random streams, so any subset can be produced independently.
#[derive(Debug, Clone)]
pub struct Generator {
    radar: RadarConfig,
    params: DerivedParams,
    geometry: GridGeometry,
    synth: Synthesizer,
    config: DatasetConfig,
    splits: Vec<Split>,
}

impl Generator {
    pub fn new(radar: RadarConfig, config: DatasetConfig) -> Result<Self, DatasetError> {
        config.validate()?;
        let params = derive_params(&radar)?;
        let synth = Synthesizer::new(radar.clone(), SynthOptions { range_policy: RangePolicy::Drop, ..SynthOptions::default() })?;
        let n = config.n_trajectories();
        let [n_train, n_val, _] = config.split.counts(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        let mut splits = vec![Split::Test; n];
        for (rank, &t) in order.iter().enumerate() {
            splits[t] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
        Ok(Self { geometry: GridGeometry::from_params(&params), radar, params, synth, config, splits })
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn radar(&self) -> &RadarConfig {
        &self.radar
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn n_trajectories(&self) -> usize {
        self.splits.len()
    }

    pub fn split_of(&self, trajectory: usize) -> Split {
        self.splits[trajectory]
    }

    fn stream(&self, trajectory: usize, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(4 * trajectory as u64 + purpose);
        rng
    }

    fn frames_in(&self, trajectory: usize) -> usize {
        let fpt = self.config.frames_per_trajectory;
        fpt.min(self.config.n_frames - trajectory * fpt)
    }

    fn layout_and_path(&self, id: usize) -> (Layout, TrajectoryInfo) {
        let r = self.config.recipes.len();
        let recipe = self.config.recipes[id % r];
        let kind = self.config.trajectories[(id / r) % self.config.trajectories.len()];
        let layout = Layout::sample(recipe, &mut self.stream(id, 0));
        let duration = self.frames_in(id) as f64 * self.radar.frame_period;
        let trajectory = Trajectory::sample(kind, &layout, duration, &mut self.stream(id, 1));
        let info = TrajectoryInfo { id, recipe, trajectory, split: self.splits[id], n_frames: self.frames_in(id) };
        (layout, info)
    }

    pub fn trajectory_info(&self, id: usize) -> TrajectoryInfo {
        self.layout_and_path(id).1
    }

    /// All frames of one trajectory.
    pub fn trajectory(&self, id: usize) -> Result<Vec<Sample>, DatasetError> {
        let (layout, info) = self.layout_and_path(id);
        let mut scatter_rng = self.stream(id, 2);
        let walls = layout.scatterers(self.config.scatterer_spacing, &mut scatter_rng);
        let mut noise_rng = self.stream(id, 3);
        let render = RadarRender { noise_std: self.config.noise_std, max_range: self.params.d_max * 0.999 };
        let cfg = &self.radar;
        let mid = (cfg.n_chirps as f64 - 1.0) / 2.0 * cfg.chirp_period;
        let mut out = Vec::with_capacity(info.n_frames);
        for step in 0..info.n_frames {
            let t0 = step as f64 * cfg.frame_period;
            let noise_seed: u64 = noise_rng.random();
            let lidar_seed: u64 = noise_rng.random();
            let mut frame = if info.trajectory.kind == TrajectoryKind::Static {
                let scene = radar_scene(&layout, &walls, &info.trajectory.pose_at(t0), &render);
                self.synth.synthesize(ChirpScenes::Static(&scene), noise_seed)?
            } else {
                let scenes: Vec<_> = (0..cfg.n_chirps)
                    .map(|c| {
                        let pose = info.trajectory.pose_at(t0 + c as f64 * cfg.chirp_period);
                        radar_scene(&layout, &walls, &pose, &render)
                    })
                    .collect();
                self.synth.synthesize(ChirpScenes::PerChirp(&scenes), noise_seed)?
            };
            let index = id * self.config.frames_per_trajectory + step;
            frame.frame_index = index as u64;
            frame.timestamp = t0;
            let pose = info.trajectory.pose_at(t0 + mid);
            let lidar = lidar_scan(&layout, &pose, &self.config.lidar, &mut ChaCha8Rng::seed_from_u64(lidar_seed));
            let grid = quantize_to_grid(&filter_points(&lidar, &self.geometry), &self.geometry);
            out.push(Sample {
                index,
                trajectory: id,
                step,
                split: info.split,
                recipe: info.recipe,
                kind: info.trajectory.kind,
                pose,
                frame,
                lidar,
                grid,
            });
        }
        Ok(out)
    }

    /// Frames of the given split in index order.
    pub fn samples(&self, split: Option<Split>) -> impl Iterator<Item = Result<Sample, DatasetError>> + '_ {
        (0..self.n_trajectories()).filter(move |&t| split.is_none_or(|s| self.splits[t] == s)).flat_map(move |t| {
            match self.trajectory(t) {
                Ok(v) => v.into_iter().map(Ok).collect::<Vec<_>>(),
                Err(e) => vec![Err(e)],
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub id: usize,
    pub recipe: String,
    pub kind: String,
    pub split: Split,
    pub speed_m_s: f64,
    pub yaw_rate_rad_s: f64,
    pub capture: String,
    pub n_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub trajectory: usize,
    pub split: Split,
    /// Position of the frame inside its capture file.
    pub capture_frame: usize,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lidar: Option<String>,
    pub pose: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub n_frames: usize,
    pub frames_per_trajectory: usize,
    pub split_fractions: SplitFractions,
    pub noise_std: f64,
    pub scatterer_spacing_m: f64,
    pub radar_config: String,
    pub trajectories: Vec<TrajectoryEntry>,
    pub frames: Vec<FrameEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let file = File::open(&path).map_err(io_err(&path))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|source| DatasetError::Json { path, source })
    }

    pub fn frames_in(&self, split: Split) -> impl Iterator<Item = &FrameEntry> {
        self.frames.iter().filter(move |f| f.split == split)
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for t in &self.trajectories {
            c[t.split as usize] += t.n_frames;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    /// Also store raw lidar returns as CSV per frame.
    pub lidar_csv: bool,
}

/// Writes captures, target grids, the radar config and the manifest under `dir`.
pub fn write_dataset(generator: &Generator, dir: &Path, options: WriteOptions) -> Result<Manifest, DatasetError> {
    for sub in ["captures", "targets", "lidar"] {
        if sub == "lidar" && !options.lidar_csv {
            continue;
        }
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let radar_path = dir.join(RADAR_CONFIG_FILE);
    fs::write(&radar_path, generator.radar().to_string()).map_err(io_err(&radar_path))?;
    let header =
        CaptureHeader::from_config(generator.radar()).map_err(|source| DatasetError::Capture { path: dir.to_owned(), source })?;
    let cfg = generator.config();
    let mut manifest = Manifest {
        version: 1,
        seed: cfg.seed,
        n_frames: cfg.n_frames,
        frames_per_trajectory: cfg.frames_per_trajectory,
        split_fractions: cfg.split,
        noise_std: cfg.noise_std,
        scatterer_spacing_m: cfg.scatterer_spacing,
        radar_config: RADAR_CONFIG_FILE.into(),
        trajectories: Vec::new(),
        frames: Vec::new(),
    };
    for t in 0..generator.n_trajectories() {
        let samples = generator.trajectory(t)?;
        let info = generator.trajectory_info(t);
        let capture = format!("captures/traj_{t:05}.rdc");
        let cpath = dir.join(&capture);
        let file = File::create(&cpath).map_err(io_err(&cpath))?;
        let cap_err = |source| DatasetError::Capture { path: cpath.clone(), source };
        let mut writer = CaptureWriter::new(BufWriter::new(file), header.clone()).map_err(io_err(&cpath))?;
        for (k, s) in samples.iter().enumerate() {
            writer.write_frame(&s.frame).map_err(cap_err)?;
            let target = format!("targets/frame_{:06}.rct", s.index);
            let tpath = dir.join(&target);
            let f = File::create(&tpath).map_err(io_err(&tpath))?;
            s.grid.to_tensor().write(BufWriter::new(f)).map_err(|source| DatasetError::Tensor { path: tpath, source })?;
            let lidar = if options.lidar_csv {
                let name = format!("lidar/frame_{:06}.csv", s.index);
                let lpath = dir.join(&name);
                let f = File::create(&lpath).map_err(io_err(&lpath))?;
                crate::pointcloud::write_lidar_csv(BufWriter::new(f), &s.lidar).map_err(io_err(&lpath))?;
                Some(name)
            } else {
                None
            };
            manifest.frames.push(FrameEntry {
                index: s.index,
                trajectory: t,
                split: s.split,
                capture_frame: k,
                target,
                lidar,
                pose: [s.pose.x, s.pose.y, s.pose.heading],
            });
        }
        writer.finish().map_err(io_err(&cpath))?;
        manifest.trajectories.push(TrajectoryEntry {
            id: t,
            recipe: info.recipe.to_string(),
            kind: info.trajectory.kind.to_string(),
            split: info.split,
            speed_m_s: info.trajectory.speed,
            yaw_rate_rad_s: info.trajectory.yaw_rate,
            capture,
            n_frames: samples.len(),
        });
    }
    let mpath = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| DatasetError::Json { path: mpath.clone(), source })?;
    fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
    Ok(manifest)
}

/// A dataset directory opened for reading.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub radar: RadarConfig,
}

impl DatasetDir {
    pub fn open(root: &Path) -> Result<Self, DatasetError> {
        let manifest = Manifest::load(root)?;
        let rpath = root.join(&manifest.radar_config);
        let text = fs::read_to_string(&rpath).map_err(io_err(&rpath))?;
        let radar: RadarConfig =
            text.parse().map_err(|e: ConfigError| DatasetError::Mismatch { path: rpath.clone(), reason: e.to_string() })?;
        Ok(Self { root: root.to_owned(), manifest, radar })
    }

    pub fn read_target(&self, entry: &FrameEntry) -> Result<PolarGrid, DatasetError> {
        read_grid(&self.root.join(&entry.target))
    }

    /// Raw frames and targets of every frame in `split`, in manifest order.
    pub fn load_split(&self, split: Split) -> Result<Vec<(FrameEntry, RawFrame, PolarGrid)>, DatasetError> {
        let mut out = Vec::new();
        for t in self.manifest.trajectories.iter().filter(|t| t.split == split) {
            let frames = self.read_capture(t)?;
            for entry in self.manifest.frames.iter().filter(|f| f.trajectory == t.id) {
                let frame = frames.get(entry.capture_frame).cloned().ok_or_else(|| DatasetError::Mismatch {
                    path: self.root.join(&t.capture),
                    reason: format!("frame {} missing from capture", entry.capture_frame),
                })?;
                out.push((entry.clone(), frame, self.read_target(entry)?));
            }
        }
        Ok(out)
    }

    pub fn read_capture(&self, t: &TrajectoryEntry) -> Result<Vec<RawFrame>, DatasetError> {
        let path = self.root.join(&t.capture);
        let file = File::open(&path).map_err(io_err(&path))?;
        let cap_err = |source| DatasetError::Capture { path: path.clone(), source };
        let mut reader = CaptureReader::new(BufReader::new(file)).map_err(cap_err)?;
        if !reader.header().matches(&self.radar) {
            return Err(DatasetError::Mismatch {
                path: path.clone(),
                reason: "capture header does not match the dataset radar config".into(),
            });
        }
        let mut frames = Vec::new();
        while let Some(f) = reader.next_frame().map_err(cap_err)? {
            frames.push(f);
        }
        Ok(frames)
    }
}

pub fn read_grid(path: &Path) -> Result<PolarGrid, DatasetError> {
    let f = File::open(path).map_err(io_err(path))?;
    let t = TensorFile::read(BufReader::new(f)).map_err(|source| DatasetError::Tensor { path: path.to_owned(), source })?;
    PolarGrid::from_tensor(t).map_err(|source| DatasetError::Grid { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_frames: usize, seed: u64) -> Generator {
        Generator::new(
            RadarConfig::default(),
            DatasetConfig { n_frames, frames_per_trajectory: 4, seed, ..DatasetConfig::default() },
        )
        .unwrap()
    }

    #[test]
    fn split_counts_follow_fractions() {
        assert_eq!(SplitFractions::default().counts(100), [76, 13, 11]);
        assert_eq!(SplitFractions::default().counts(1), [1, 0, 0]);
        assert_eq!(SplitFractions::default().counts(4), [2, 1, 1]);
        let c = SplitFractions::default().counts(37);
        assert_eq!(c.iter().sum::<usize>(), 37);
    }

    #[test]
    fn splits_are_by_trajectory() {
        let g = small(40, 9);
        let samples: Vec<_> = g.samples(None).collect::<Result<_, _>>().unwrap();
        assert_eq!(samples.len(), 40);
        for s in &samples {
            assert_eq!(s.split, g.split_of(s.trajectory));
        }
        assert_eq!(samples.iter().map(|s| s.index).collect::<Vec<_>>(), (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = small(8, 4).trajectory(1).unwrap();
        let b = small(8, 4).trajectory(1).unwrap();
        assert_eq!(a, b);
        let c = small(8, 5).trajectory(1).unwrap();
        assert_ne!(a[0].frame, c[0].frame);
    }

    #[test]
    fn targets_are_nonempty_and_consistent() {
        let g = small(30, 1);
        for s in g.samples(None) {
            let s = s.unwrap();
            assert!(s.grid.count() > 0, "trajectory {} empty target", s.trajectory);
            let again = quantize_to_grid(&filter_points(&s.lidar, g.geometry()), g.geometry());
            assert_eq!(again, s.grid);
        }
    }

    #[test]
    fn rapid_recipe_rotates_fast_within_a_frame() {
        let g = Generator::new(
            RadarConfig::default(),
            DatasetConfig {
                n_frames: 50,
                frames_per_trajectory: 5,
                trajectories: vec![TrajectoryKind::Rapid],
                ..DatasetConfig::default()
            },
        )
        .unwrap();
        let cfg = RadarConfig::default();
        for t in 0..g.n_trajectories() {
            let traj = g.trajectory_info(t).trajectory;
            // Heading change between consecutive chirps, as a rate.
            let dh = crate::scene::wrap_angle(traj.pose_at(cfg.chirp_period).heading - traj.pose_at(0.0).heading);
            assert!(dh.abs() / cfg.chirp_period >= 2.0 - 1e-9, "{}", dh / cfg.chirp_period);
        }
    }
}
