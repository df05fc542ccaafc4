use std::io::Read;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CaptureError, CaptureReader, PacketSink, Packetizer, SendOutcome};

/// Seeded Bernoulli packet dropper. One uniform draw is consumed per packet
/// whatever the rate, so two injectors with the same seed and different
/// rates drop nested sets of packets.
#[derive(Debug, Clone)]
pub struct LossInjector {
    rate: f64,
    rng: ChaCha8Rng,
}

impl LossInjector {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self { rate: rate.clamp(0.0, 1.0), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn should_drop(&mut self) -> bool {
        let u: f64 = self.rng.random();
        u < self.rate
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    /// Frames per second.
    pub pace: f64,
    pub max_payload: usize,
    pub loss: Option<LossInjector>,
}

impl ReplayOptions {
    pub fn new(pace: f64) -> Self {
        Self { pace, max_payload: super::MAX_PAYLOAD, loss: None }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayReport {
    pub frames_sent: u64,
    pub packets_sent: u64,
    /// Dropped by the loss injector before reaching the transport.
    pub packets_dropped_injected: u64,
    /// Dropped by the transport because the consumer was behind.
    pub packets_dropped_queue: u64,
    pub payload_bytes: u64,
    pub elapsed: f64,
    pub achieved_bit_rate: f64,
    /// Emission time of each frame relative to the session start (s).
    pub frame_times: Vec<f64>,
}

impl ReplayReport {
    /// Mean interval between consecutive frame emissions.
    pub fn mean_frame_period(&self) -> Option<f64> {
        let n = self.frame_times.len();
        (n > 1).then(|| (self.frame_times[n - 1] - self.frame_times[0]) / (n - 1) as f64)
    }
}

/// Sends frames at a fixed cadence: the packets of frame `k` go out
/// back-to-back at `start + k / pace`. The schedule is absolute, so a late
/// frame does not shift the ones after it.
pub fn stream_frames<I>(frames: I, options: &mut ReplayOptions, sink: &mut dyn PacketSink) -> Result<ReplayReport, CaptureError>
where
    I: IntoIterator,
    I::Item: AsRef<[u8]>,
{
    if !(options.pace > 0.0 && options.pace.is_finite()) {
        return Err(CaptureError::Pace(options.pace));
    }
    let mut packetizer = Packetizer::new(options.max_payload)?;
    let period = Duration::from_secs_f64(1.0 / options.pace);
    let start = Instant::now();
    let mut report = ReplayReport::default();
    for (k, frame) in frames.into_iter().enumerate() {
        let deadline = start + period * k as u32;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        }
        report.frame_times.push(start.elapsed().as_secs_f64());
        for packet in packetizer.push(frame.as_ref())? {
            if let Some(loss) = options.loss.as_mut() {
                if loss.should_drop() {
                    report.packets_dropped_injected += 1;
                    continue;
                }
            }
            match sink.send(&packet)? {
                SendOutcome::Sent => {
                    report.packets_sent += 1;
                    report.payload_bytes += packet.payload.len() as u64;
                }
                SendOutcome::Dropped => report.packets_dropped_queue += 1,
            }
        }
        report.frames_sent += 1;
    }
    sink.close()?;
    report.elapsed = start.elapsed().as_secs_f64();
    // Rate over the emission window: n frames occupy n periods.
    let window = (report.frames_sent as f64 / options.pace).max(report.elapsed);
    if window > 0.0 {
        report.achieved_bit_rate = report.payload_bytes as f64 * 8.0 / window;
    }
    Ok(report)
}

/// Replays a raw-capture file at `options.pace` frames per second.
pub fn stream_replay<R: Read>(
    reader: &mut CaptureReader<R>,
    options: &mut ReplayOptions,
    sink: &mut dyn PacketSink,
) -> Result<ReplayReport, CaptureError> {
    if !(options.pace > 0.0 && options.pace.is_finite()) {
        return Err(CaptureError::Pace(options.pace));
    }
    let frames = reader.read_all()?;
    stream_frames(frames, options, sink)
}
