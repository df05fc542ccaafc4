//! Glue between signal processing, the network and the metrics.

use anyhow::{bail, Context, Result};
use radcloud_core::dataset::{Generator, Sample, Split};
use radcloud_core::dsp::{DspConfig, Processor};
use radcloud_core::fmcw::{RadarConfig, RawFrame};
use radcloud_core::lidar::{grid_to_cartesian, GridGeometry, PolarGrid};
use radcloud_core::metrics::{evaluate, FrameScore, MetricOptions};
use radcloud_core::pointcloud::{Point2, PointCloud2D};
use radcloud_unet::{binarize, Cache, NetConfig, Network, SampleSource};

/// Network input and binary target of one frame. Inputs are held as 16-bit
/// fixed point in `[0, 1]` to halve memory; targets as bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    pub index: usize,
    pub input: Vec<u16>,
    pub target: Vec<u8>,
}

const FIXED_SCALE: f32 = u16::MAX as f32;

impl PreparedFrame {
    pub fn new(index: usize, input: &[f32], target: &PolarGrid) -> Self {
        Self {
            index,
            input: input.iter().map(|&v| (v.clamp(0.0, 1.0) * FIXED_SCALE).round() as u16).collect(),
            target: target.cells().to_vec(),
        }
    }

    pub fn input_f32(&self, out: &mut Vec<f32>) {
        out.clear();
        out.extend(self.input.iter().map(|&v| v as f32 / FIXED_SCALE));
    }
}

/// In-memory training or evaluation set.
#[derive(Debug, Clone, Default)]
pub struct PreparedSet {
    pub frames: Vec<PreparedFrame>,
}

impl SampleSource for PreparedSet {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn load(&mut self, index: usize, input: &mut Vec<f32>, target: &mut Vec<f32>) -> Result<(), String> {
        let f = &self.frames[index];
        f.input_f32(input);
        target.clear();
        target.extend(f.target.iter().map(|&t| t as f32));
        Ok(())
    }
}

/// Frame-to-tensor front end.
pub struct FrontEnd {
    processor: Processor<f32>,
}

impl FrontEnd {
    pub fn new(radar: &RadarConfig) -> Result<Self> {
        Ok(Self { processor: Processor::new(DspConfig::for_radar(radar))? })
    }

    pub fn dsp(&self) -> &DspConfig {
        self.processor.config()
    }

    pub fn input(&mut self, frame: &RawFrame) -> Result<Vec<f32>> {
        Ok(self.processor.assemble_input(frame)?.data)
    }
}

/// Network shape implied by the DSP output.
pub fn net_config_for(dsp: &DspConfig, base_channels: usize, depth: usize) -> NetConfig {
    let [c, h, w] = dsp.input_dims();
    NetConfig { input_channels: c, base_channels, depth, kernel_size: 3, height: h, width: w }
}

pub fn check_compatible(net: &NetConfig, dsp: &DspConfig) -> Result<()> {
    let [c, h, w] = dsp.input_dims();
    if (net.input_channels, net.height, net.width) != (c, h, w) {
        bail!(
            "network expects {}x{}x{} input but the radar config produces {c}x{h}x{w}",
            net.input_channels,
            net.height,
            net.width
        );
    }
    Ok(())
}

/// Runs the generator for `split` and keeps only tensors.
pub fn prepare_generated(generator: &Generator, split: Option<Split>) -> Result<PreparedSet> {
    let mut fe = FrontEnd::new(generator.radar())?;
    let mut set = PreparedSet::default();
    for s in generator.samples(split) {
        let s: Sample = s?;
        let x = fe.input(&s.frame)?;
        set.frames.push(PreparedFrame::new(s.index, &x, &s.grid));
    }
    Ok(set)
}

pub fn prepare_pairs<'a>(
    radar: &RadarConfig,
    pairs: impl IntoIterator<Item = (usize, &'a RawFrame, &'a PolarGrid)>,
) -> Result<PreparedSet> {
    let mut fe = FrontEnd::new(radar)?;
    let mut set = PreparedSet::default();
    for (index, frame, grid) in pairs {
        let x = fe.input(frame).with_context(|| format!("frame {index}"))?;
        set.frames.push(PreparedFrame::new(index, &x, grid));
    }
    Ok(set)
}

/// Thresholded network output as a grid.
pub fn predict_grid(net: &Network<f32>, input: &[f32], threshold: f32, cache: &mut Cache<f32>) -> Result<PolarGrid> {
    let p = net.forward_with(input, cache)?;
    let c = net.config();
    Ok(PolarGrid::from_cells(c.height, c.width, binarize(&p, threshold))?)
}

/// Metric policy for empty clouds: two empty clouds score 0, one empty
/// cloud scores `penalty` (the maximum range).
pub fn score_clouds(pred: &[Point2], truth: &[Point2], options: MetricOptions, penalty: f64) -> (f64, f64) {
    match (pred.is_empty(), truth.is_empty()) {
        (true, true) => (0.0, 0.0),
        (true, false) | (false, true) => (penalty, penalty),
        (false, false) => {
            let r = evaluate(pred, truth, options).expect("non-empty finite clouds");
            (r.chamfer, r.mhd)
        }
    }
}

pub fn score_grids(pred: &PolarGrid, truth: &PolarGrid, geometry: &GridGeometry, options: MetricOptions) -> (f64, f64) {
    let a: PointCloud2D = grid_to_cartesian(pred, geometry);
    let b: PointCloud2D = grid_to_cartesian(truth, geometry);
    score_clouds(&a, &b, options, geometry.max_range)
}

/// Per-frame scores of `net` on `set`.
pub fn evaluate_set(
    net: &Network<f32>,
    set: &PreparedSet,
    geometry: &GridGeometry,
    threshold: f32,
    options: MetricOptions,
) -> Result<Vec<FrameScore>> {
    let mut cache = Cache::default();
    let mut input = Vec::new();
    let c = net.config();
    let mut out = Vec::with_capacity(set.frames.len());
    for f in &set.frames {
        f.input_f32(&mut input);
        let pred = predict_grid(net, &input, threshold, &mut cache)?;
        let truth = PolarGrid::from_cells(c.height, c.width, f.target.clone())?;
        let (chamfer, mhd) = score_grids(&pred, &truth, geometry, options);
        out.push(FrameScore { frame_index: f.index as u64, chamfer, mhd });
    }
    Ok(out)
}

/// Picks the binarization threshold with the lowest median Chamfer on `set`.
pub fn tune_threshold(net: &Network<f32>, set: &PreparedSet, geometry: &GridGeometry, candidates: &[f32]) -> Result<(f32, f64)> {
    let mut cache = Cache::default();
    let mut input = Vec::new();
    let c = net.config();
    let probs: Vec<Vec<f32>> = set
        .frames
        .iter()
        .map(|f| {
            f.input_f32(&mut input);
            net.forward_with(&input, &mut cache)
        })
        .collect::<Result<_, _>>()?;
    let mut best = (0.5, f64::INFINITY);
    for &th in candidates {
        let mut cds: Vec<f64> = probs
            .iter()
            .zip(&set.frames)
            .map(|(p, f)| {
                let pred = PolarGrid::from_cells(c.height, c.width, binarize(p, th)).expect("shape");
                let truth = PolarGrid::from_cells(c.height, c.width, f.target.clone()).expect("shape");
                score_grids(&pred, &truth, geometry, MetricOptions::default()).0
            })
            .collect();
        cds.sort_by(f64::total_cmp);
        let med = radcloud_core::metrics::median(&cds);
        if med < best.1 {
            best = (th, med);
        }
    }
    Ok(best)
}

/// Logit of the mean occupancy of `set`, a sensible starting output bias.
pub fn prior_logit(set: &PreparedSet) -> f32 {
    let (ones, total) = set
        .frames
        .iter()
        .fold((0usize, 0usize), |(o, t), f| (o + f.target.iter().filter(|&&v| v != 0).count(), t + f.target.len()));
    let p = (ones as f64 / total.max(1) as f64).clamp(1e-4, 1.0 - 1e-4);
    (p / (1.0 - p)).ln() as f32
}
