//! Producer/consumer streaming: paced packet emission on one thread,
//! reassembly and per-frame processing on the other.

use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Result};
use radcloud_core::capture::{
    channel, stream_frames, AssembledFrame, FrameAssembler, LossInjector, PacketSink, PacketSource, RecvOutcome, ReplayOptions,
    ReplayReport, StreamStats, UdpSink, UdpSource,
};
use radcloud_core::fmcw::{derive_params, RadarConfig, RawFrame};
use radcloud_core::lidar::{grid_to_cartesian, GridGeometry};
use radcloud_unet::{Cache, Network};
use serde::Serialize;

use crate::pipeline::{predict_grid, FrontEnd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Channel,
    Udp,
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "channel" => Ok(Transport::Channel),
            "udp" => Ok(Transport::Udp),
            _ => Err(format!("unknown transport `{s}` (expected channel or udp)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamOptions {
    pub fps: f64,
    pub loss_rate: f64,
    pub seed: u64,
    pub transport: Transport,
    /// Packets the in-process queue holds before dropping.
    pub queue_packets: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self { fps: 10.0, loss_rate: 0.0, seed: 0, transport: Transport::Channel, queue_packets: 4096 }
    }
}

/// Everything the consumer saw, plus the producer's own counters.
#[derive(Debug, Clone)]
pub struct SessionOutcome<T> {
    pub replay: ReplayReport,
    pub stats: StreamStats,
    pub results: Vec<T>,
    /// Consumer clock at the end of each handled frame, from session start.
    pub done_at: Vec<f64>,
    pub elapsed: f64,
}

/// Streams `frames` through the chosen transport and hands every
/// reassembled frame to `handle` on the calling thread.
pub fn run_session<T, F>(
    frames: Vec<Vec<u8>>,
    frame_bytes: usize,
    options: &StreamOptions,
    mut handle: F,
) -> Result<SessionOutcome<T>>
where
    F: FnMut(&AssembledFrame) -> Result<T>,
{
    let (sink, source): (Box<dyn PacketSink>, Box<dyn PacketSource>) = match options.transport {
        Transport::Channel => {
            let (s, r) = channel(options.queue_packets);
            (Box::new(s), Box::new(r))
        }
        Transport::Udp => {
            let r = UdpSource::bind("127.0.0.1:0")?;
            let addr = r.local_addr()?;
            (Box::new(UdpSink::connect("127.0.0.1:0", addr)?), Box::new(r))
        }
    };
    let mut replay_opts = ReplayOptions::new(options.fps);
    if options.loss_rate > 0.0 {
        replay_opts.loss = Some(LossInjector::new(options.loss_rate, options.seed));
    }
    let start = Instant::now();
    thread::scope(|scope| {
        let mut sink = sink;
        let producer = scope.spawn(move || stream_frames(frames, &mut replay_opts, sink.as_mut()));
        let mut source = source;
        let mut asm = FrameAssembler::new(frame_bytes);
        let mut results = Vec::new();
        let mut done_at = Vec::new();
        let mut process = |f: &AssembledFrame, results: &mut Vec<T>, done_at: &mut Vec<f64>| -> Result<()> {
            results.push(handle(f)?);
            done_at.push(start.elapsed().as_secs_f64());
            Ok(())
        };
        loop {
            match source.recv(Duration::from_millis(500))? {
                RecvOutcome::Packet(p) => {
                    for f in asm.push(&p)? {
                        process(&f, &mut results, &mut done_at)?;
                    }
                }
                RecvOutcome::Timeout => {
                    if producer.is_finished() {
                        break;
                    }
                }
                RecvOutcome::Closed => break,
            }
        }
        let replay = producer.join().map_err(|_| anyhow!("producer thread panicked"))??;
        for f in asm.finish(Some(replay.frames_sent)) {
            process(&f, &mut results, &mut done_at)?;
        }
        asm.account_tail(replay.packets_sent + replay.packets_dropped_injected + replay.packets_dropped_queue);
        asm.stats_mut().set_elapsed(start.elapsed().as_secs_f64());
        Ok(SessionOutcome { replay, stats: asm.stats().clone(), results, done_at, elapsed: start.elapsed().as_secs_f64() })
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Percentiles {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

impl Percentiles {
    pub fn of(seconds: &[f64]) -> Self {
        if seconds.is_empty() {
            return Self::default();
        }
        let mut v: Vec<f64> = seconds.iter().map(|s| s * 1e3).collect();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            p50_ms: rank(0.5),
            p90_ms: rank(0.9),
            p99_ms: rank(0.99),
            max_ms: *v.last().unwrap(),
            mean_ms: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct FrameTiming {
    decode: f64,
    dsp: f64,
    infer: f64,
    points: usize,
    gap: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub duration_s: f64,
    pub offered_fps: f64,
    pub frames_sent: u64,
    pub frames_processed: u64,
    pub frames_with_gaps: u64,
    pub packets_lost: u64,
    pub packets_dropped_injected: u64,
    pub packets_dropped_queue: u64,
    /// Frames handled per second of wall time from the first emission to
    /// the last completed frame.
    pub sustained_fps: f64,
    /// Frames per second the consumer could sustain if never idle.
    pub capacity_fps: f64,
    pub decode: Percentiles,
    pub dsp: Percentiles,
    pub inference: Percentiles,
    pub total: Percentiles,
    pub mean_points: f64,
    pub elapsed_s: f64,
}

/// Full chain: paced replay of `pool` (cycled) for `duration` seconds,
/// reassembly, range-azimuth processing, inference and point extraction.
pub fn run_bench(
    radar: &RadarConfig,
    net: &Network<f32>,
    pool: &[RawFrame],
    duration: f64,
    threshold: f32,
    options: &StreamOptions,
) -> Result<BenchReport> {
    if pool.is_empty() {
        return Err(anyhow!("benchmark needs at least one frame"));
    }
    let n = ((duration * options.fps).round() as usize).max(1);
    let frames: Vec<Vec<u8>> = (0..n).map(|i| pool[i % pool.len()].to_bytes()).collect();
    let geometry = GridGeometry::from_params(&derive_params(radar)?);
    let mut fe = FrontEnd::new(radar)?;
    crate::pipeline::check_compatible(net.config(), fe.dsp())?;
    let mut cache = Cache::default();
    let outcome = run_session(frames, radar.frame_bytes(), options, |f| {
        let t0 = Instant::now();
        let raw = RawFrame::from_bytes(radar.n_chirps, radar.n_rx, radar.n_samples, &f.bytes)?;
        let t1 = Instant::now();
        let x = fe.input(&raw)?;
        let t2 = Instant::now();
        let grid = predict_grid(net, &x, threshold, &mut cache)?;
        let cloud = grid_to_cartesian(&grid, &geometry);
        let t3 = Instant::now();
        Ok(FrameTiming {
            decode: (t1 - t0).as_secs_f64(),
            dsp: (t2 - t1).as_secs_f64(),
            infer: (t3 - t2).as_secs_f64(),
            points: cloud.len(),
            gap: f.has_gap,
        })
    })?;
    let r = &outcome.results;
    let col = |f: fn(&FrameTiming) -> f64| r.iter().map(f).collect::<Vec<_>>();
    let totals = col(|t| t.decode + t.dsp + t.infer);
    let mean_total = totals.iter().sum::<f64>() / totals.len().max(1) as f64;
    let last_done = outcome.done_at.last().copied().unwrap_or(outcome.elapsed);
    Ok(BenchReport {
        duration_s: duration,
        offered_fps: options.fps,
        frames_sent: outcome.replay.frames_sent,
        frames_processed: r.len() as u64,
        frames_with_gaps: r.iter().filter(|t| t.gap).count() as u64,
        packets_lost: outcome.stats.packets_lost,
        packets_dropped_injected: outcome.replay.packets_dropped_injected,
        packets_dropped_queue: outcome.replay.packets_dropped_queue,
        sustained_fps: if last_done > 0.0 { r.len() as f64 / last_done } else { 0.0 },
        capacity_fps: if mean_total > 0.0 { 1.0 / mean_total } else { f64::INFINITY },
        decode: Percentiles::of(&col(|t| t.decode)),
        dsp: Percentiles::of(&col(|t| t.dsp)),
        inference: Percentiles::of(&col(|t| t.infer)),
        total: Percentiles::of(&totals),
        mean_points: r.iter().map(|t| t.points as f64).sum::<f64>() / r.len().max(1) as f64,
        elapsed_s: outcome.elapsed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplaySummary {
    pub frames_sent: u64,
    pub frames_received: u64,
    pub frames_with_gaps: u64,
    pub packets_sent: u64,
    pub packets_lost: u64,
    pub packets_dropped_injected: u64,
    pub mean_frame_period_s: Option<f64>,
    pub achieved_bit_rate: f64,
    pub elapsed_s: f64,
}

/// Replays capture frames and only reassembles them.
pub fn replay_frames(
    frames: Vec<Vec<u8>>,
    frame_bytes: usize,
    options: &StreamOptions,
) -> Result<(ReplaySummary, Vec<AssembledFrame>)> {
    let out = run_session(frames, frame_bytes, options, |f| Ok(f.clone()))?;
    let summary = ReplaySummary {
        frames_sent: out.replay.frames_sent,
        frames_received: out.results.len() as u64,
        frames_with_gaps: out.results.iter().filter(|f| f.has_gap).count() as u64,
        packets_sent: out.replay.packets_sent,
        packets_lost: out.stats.packets_lost,
        packets_dropped_injected: out.replay.packets_dropped_injected,
        mean_frame_period_s: out.replay.mean_frame_period(),
        achieved_bit_rate: out.replay.achieved_bit_rate,
        elapsed_s: out.elapsed,
    };
    Ok((summary, out.results))
}
