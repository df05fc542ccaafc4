//! FMCW radar parameter model and IF-sample simulator.
//!
//! The simulator renders point scatterers directly into dechirped IF samples:
//! every scatterer at range `d` and azimuth `theta` contributes a complex tone
//! at `f_IF = 2 S d / c` with an inter-element phase progression of
//! `2 pi (k * spacing / lambda) sin(theta)` across the receive array and a
//! constant round-trip phase `2 pi f_c t_d`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::kv::{KvError, KvMap};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Largest sampled chirp bandwidth the sensor family supports (Hz).
pub const MAX_BANDWIDTH_HZ: f64 = 4.0e9;
/// Bytes per complex sample on the wire: 16-bit I followed by 16-bit Q.
pub const SAMPLE_BYTES: usize = 4;
/// Fraction of the signed 16-bit range the strongest sample is scaled to.
pub const DEFAULT_PEAK_FRACTION: f64 = 0.75;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{name} must be strictly positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be at least 1")]
    ZeroCount { name: &'static str },
    #[error("sampled bandwidth {bandwidth_hz:.4e} Hz exceeds the 4 GHz limit")]
    BandwidthTooLarge { bandwidth_hz: f64 },
    #[error("{n_chirps} chirps of {chirp_period} s do not fit in a frame period of {frame_period} s")]
    FrameOverrun { n_chirps: usize, chirp_period: f64, frame_period: f64 },
    #[error("chirp period {chirp_period} s is shorter than the sampling window {window} s")]
    ChirpTooShort { chirp_period: f64, window: f64 },
    #[error(transparent)]
    Kv(#[from] KvError),
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scatterer at ({x:.3}, {y:.3}) has range {range:.3} m outside (0, {d_max:.3}) m")]
    OutOfRange { x: f64, y: f64, range: f64, d_max: f64 },
    #[error("negative range {0} m")]
    NegativeRange(f64),
    #[error("fixed scale {scale} saturates 16-bit samples (peak component {peak:.1} counts)")]
    Saturation { scale: f64, peak: f64 },
    #[error("expected {expected} per-chirp scenes, got {got}")]
    SceneCount { expected: usize, got: usize },
    #[error("non-finite scatterer or noise parameter")]
    NonFinite,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Chirp and sampling configuration of the radar front end.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    /// Chirp slope `S` in Hz/s.
    pub chirp_slope: f64,
    /// Chirp start frequency `f_c` in Hz.
    pub start_freq: f64,
    /// ADC rate in complex samples per second.
    pub sample_rate: f64,
    /// Complex samples per chirp.
    pub n_samples: usize,
    /// Chirps per frame.
    pub n_chirps: usize,
    /// Receive channels in the uniform linear array.
    pub n_rx: usize,
    /// Element pitch in meters.
    pub rx_spacing: f64,
    /// Time between frame starts (s).
    pub frame_period: f64,
    /// Time between chirp starts within a frame (s).
    pub chirp_period: f64,
    /// Transmit amplitude scaling every scatterer.
    pub tx_amplitude: f64,
}

impl Default for RadarConfig {
    /// The 2D-sensing configuration: 35 MHz/us slope, 2 MSa/s, 64 samples,
    /// 4 Rx at half-wavelength pitch, 40 chirps spread over 8 ms, 10 fps.
    fn default() -> Self {
        let start_freq = 77.0e9;
        Self {
            chirp_slope: 35.0e12,
            start_freq,
            sample_rate: 2.0e6,
            n_samples: 64,
            n_chirps: 40,
            n_rx: 4,
            rx_spacing: SPEED_OF_LIGHT / start_freq / 2.0,
            frame_period: 0.1,
            chirp_period: 200.0e-6,
            tx_amplitude: 1.0,
        }
    }
}

/// Quantities derived from a [`RadarConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    /// Sampled bandwidth `B = S * N_samp / f_samp` (Hz).
    pub bandwidth: f64,
    /// Range resolution `c / (2B)` (m).
    pub d_res: f64,
    /// Maximum unambiguous range `f_samp * c / (2S)` (m).
    pub d_max: f64,
    /// Boresight angular resolution `2 / N_rx` (rad).
    pub theta_res_boresight: f64,
    /// Carrier wavelength `c / f_c` (m).
    pub wavelength: f64,
    /// Duration of the sampled part of a chirp (s).
    pub chirp_sample_window: f64,
    /// Instantaneous ADC data rate (bits/s).
    pub instantaneous_bit_rate: f64,
}

impl RadarConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("chirp_slope", self.chirp_slope),
            ("start_freq", self.start_freq),
            ("sample_rate", self.sample_rate),
            ("rx_spacing", self.rx_spacing),
            ("frame_period", self.frame_period),
            ("chirp_period", self.chirp_period),
            ("tx_amplitude", self.tx_amplitude),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::NonPositive { name, value });
            }
        }
        for (name, count) in [("n_samples", self.n_samples), ("n_chirps", self.n_chirps), ("n_rx", self.n_rx)] {
            if count == 0 {
                return Err(ConfigError::ZeroCount { name });
            }
        }
        let bandwidth = self.bandwidth();
        if bandwidth > MAX_BANDWIDTH_HZ {
            return Err(ConfigError::BandwidthTooLarge { bandwidth_hz: bandwidth });
        }
        let window = self.n_samples as f64 / self.sample_rate;
        if self.chirp_period < window {
            return Err(ConfigError::ChirpTooShort { chirp_period: self.chirp_period, window });
        }
        if self.chirp_period * self.n_chirps as f64 > self.frame_period * (1.0 + 1e-12) {
            return Err(ConfigError::FrameOverrun {
                n_chirps: self.n_chirps,
                chirp_period: self.chirp_period,
                frame_period: self.frame_period,
            });
        }
        Ok(())
    }

    fn bandwidth(&self) -> f64 {
        self.chirp_slope * self.n_samples as f64 / self.sample_rate
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.start_freq
    }

    /// Bytes of one frame on the wire.
    pub fn frame_bytes(&self) -> usize {
        self.n_chirps * self.n_rx * self.n_samples * SAMPLE_BYTES
    }

    /// Parses a `key = value` config file. Missing keys keep their defaults;
    /// `rx_spacing_m = auto` selects half a wavelength at the start frequency.
    pub fn from_kv(map: &KvMap) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut spacing_auto = true;
        for (key, value) in map.iter() {
            match key {
                "chirp_slope_hz_per_s" => cfg.chirp_slope = map.parse(key)?,
                "start_freq_hz" => cfg.start_freq = map.parse(key)?,
                "sample_rate_sps" => cfg.sample_rate = map.parse(key)?,
                "n_samples" => cfg.n_samples = map.parse(key)?,
                "n_chirps" => cfg.n_chirps = map.parse(key)?,
                "n_rx" => cfg.n_rx = map.parse(key)?,
                "rx_spacing_m" => {
                    if value != "auto" {
                        cfg.rx_spacing = map.parse(key)?;
                        spacing_auto = false;
                    }
                }
                "frame_period_s" => cfg.frame_period = map.parse(key)?,
                "chirp_period_s" => cfg.chirp_period = map.parse(key)?,
                "tx_amplitude" => cfg.tx_amplitude = map.parse(key)?,
                _ => {}
            }
        }
        if spacing_auto {
            cfg.rx_spacing = cfg.wavelength() / 2.0;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keys accepted by [`RadarConfig::from_kv`].
    pub const KEYS: &'static [&'static str] = &[
        "chirp_slope_hz_per_s",
        "start_freq_hz",
        "sample_rate_sps",
        "n_samples",
        "n_chirps",
        "n_rx",
        "rx_spacing_m",
        "frame_period_s",
        "chirp_period_s",
        "tx_amplitude",
    ];
}

impl fmt::Display for RadarConfig {
    /// Writes the config in the `key = value` format read by [`RadarConfig::from_kv`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "chirp_slope_hz_per_s = {:e}", self.chirp_slope)?;
        writeln!(f, "start_freq_hz = {:e}", self.start_freq)?;
        writeln!(f, "sample_rate_sps = {:e}", self.sample_rate)?;
        writeln!(f, "n_samples = {}", self.n_samples)?;
        writeln!(f, "n_chirps = {}", self.n_chirps)?;
        writeln!(f, "n_rx = {}", self.n_rx)?;
        writeln!(f, "rx_spacing_m = {:e}", self.rx_spacing)?;
        writeln!(f, "frame_period_s = {}", self.frame_period)?;
        writeln!(f, "chirp_period_s = {:e}", self.chirp_period)?;
        writeln!(f, "tx_amplitude = {}", self.tx_amplitude)
    }
}

impl FromStr for RadarConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let map: KvMap = s.parse()?;
        map.reject_unknown(Self::KEYS)?;
        Self::from_kv(&map)
    }
}

pub fn derive_params(config: &RadarConfig) -> Result<DerivedParams, ConfigError> {
    config.validate()?;
    let bandwidth = config.bandwidth();
    Ok(DerivedParams {
        bandwidth,
        d_res: SPEED_OF_LIGHT / (2.0 * bandwidth),
        // The printed range equation omits the factor of two; the reported
        // 8.56 m for 2 MSa/s and 35 MHz/us needs it.
        d_max: config.sample_rate * SPEED_OF_LIGHT / (2.0 * config.chirp_slope),
        theta_res_boresight: 2.0 / config.n_rx as f64,
        wavelength: config.wavelength(),
        chirp_sample_window: config.n_samples as f64 / config.sample_rate,
        instantaneous_bit_rate: config.sample_rate * SAMPLE_BYTES as f64 * 8.0 * config.n_rx as f64,
    })
}

/// Beat frequency `2 S d / c` of a reflector at `range` meters.
pub fn if_frequency(config: &RadarConfig, range: f64) -> Result<f64, SynthError> {
    if range < 0.0 || range.is_nan() {
        return Err(SynthError::NegativeRange(range));
    }
    Ok(2.0 * config.chirp_slope * range / SPEED_OF_LIGHT)
}

/// A point reflector in the radar frame (`y` along boresight, `x = d sin(theta)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointScatterer {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
}

impl PointScatterer {
    pub fn new(x: f64, y: f64, amplitude: f64) -> Self {
        Self { x, y, amplitude }
    }

    /// Places a scatterer at `range` meters and azimuth `theta` radians.
    pub fn polar(range: f64, theta: f64, amplitude: f64) -> Self {
        Self { x: range * theta.sin(), y: range * theta.cos(), amplitude }
    }

    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn azimuth(&self) -> f64 {
        self.x.atan2(self.y)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub scatterers: Vec<PointScatterer>,
    /// Standard deviation of the additive complex Gaussian noise per sample
    /// (`E|n|^2 = noise_std^2`).
    pub noise_std: f64,
}

impl Scene {
    pub fn new(scatterers: Vec<PointScatterer>, noise_std: f64) -> Self {
        Self { scatterers, noise_std }
    }
}

/// What to do with scatterers at or beyond the maximum unambiguous range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangePolicy {
    #[default]
    Reject,
    /// Skip them and log a warning.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantization {
    /// Scale so the strongest complex sample magnitude of the frame lands at
    /// this fraction of the 16-bit full scale.
    PeakFraction(f64),
    /// Fixed counts per unit amplitude; clipping is reported as saturation.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub range_policy: RangePolicy,
    pub quantization: Quantization,
    /// Scale amplitudes by `1/d^2`.
    pub range_rolloff: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            range_policy: RangePolicy::Reject,
            quantization: Quantization::PeakFraction(DEFAULT_PEAK_FRACTION),
            range_rolloff: false,
        }
    }
}

/// Scene content per chirp: one scene for the whole frame or one per chirp.
#[derive(Debug, Clone, Copy)]
pub enum ChirpScenes<'a> {
    Static(&'a Scene),
    PerChirp(&'a [Scene]),
}

impl<'a> ChirpScenes<'a> {
    fn get(&self, chirp: usize) -> &'a Scene {
        match self {
            ChirpScenes::Static(scene) => scene,
            ChirpScenes::PerChirp(scenes) => &scenes[chirp],
        }
    }
}

/// Floating-point IF samples laid out `[chirp][rx][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IqCube {
    pub n_chirps: usize,
    pub n_rx: usize,
    pub n_samples: usize,
    pub data: Vec<Complex<f64>>,
}

impl IqCube {
    pub fn zeros(n_chirps: usize, n_rx: usize, n_samples: usize) -> Self {
        Self { n_chirps, n_rx, n_samples, data: vec![Complex::new(0.0, 0.0); n_chirps * n_rx * n_samples] }
    }

    pub fn index(&self, chirp: usize, rx: usize, sample: usize) -> usize {
        (chirp * self.n_rx + rx) * self.n_samples + sample
    }

    pub fn get(&self, chirp: usize, rx: usize, sample: usize) -> Complex<f64> {
        self.data[self.index(chirp, rx, sample)]
    }

    pub fn chirp(&self, chirp: usize) -> &[Complex<f64>] {
        let len = self.n_rx * self.n_samples;
        &self.data[chirp * len..(chirp + 1) * len]
    }

    /// Largest complex sample magnitude.
    pub fn peak_magnitude(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// One frame of 16-bit complex samples laid out `[chirp][rx][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub n_chirps: usize,
    pub n_rx: usize,
    pub n_samples: usize,
    pub samples: Vec<Complex<i16>>,
    pub frame_index: u64,
    pub timestamp: f64,
}

#[derive(Debug, Error)]
#[error("frame payload has {got} bytes, expected {expected}")]
pub struct FrameSizeError {
    pub expected: usize,
    pub got: usize,
}

impl RawFrame {
    pub fn zeros(n_chirps: usize, n_rx: usize, n_samples: usize) -> Self {
        Self {
            n_chirps,
            n_rx,
            n_samples,
            samples: vec![Complex::new(0, 0); n_chirps * n_rx * n_samples],
            frame_index: 0,
            timestamp: 0.0,
        }
    }

    pub fn get(&self, chirp: usize, rx: usize, sample: usize) -> Complex<i16> {
        self.samples[(chirp * self.n_rx + rx) * self.n_samples + sample]
    }

    /// Samples of one chirp, rx-major.
    pub fn chirp(&self, chirp: usize) -> &[Complex<i16>] {
        let len = self.n_rx * self.n_samples;
        &self.samples[chirp * len..(chirp + 1) * len]
    }

    pub fn byte_len(&self) -> usize {
        self.samples.len() * SAMPLE_BYTES
    }

    /// Interleaved little-endian `I0, Q0, I1, Q1, ...`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        for s in &self.samples {
            out.extend_from_slice(&s.re.to_le_bytes());
            out.extend_from_slice(&s.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(n_chirps: usize, n_rx: usize, n_samples: usize, bytes: &[u8]) -> Result<Self, FrameSizeError> {
        let expected = n_chirps * n_rx * n_samples * SAMPLE_BYTES;
        if bytes.len() != expected {
            return Err(FrameSizeError { expected, got: bytes.len() });
        }
        let samples = bytes
            .chunks_exact(SAMPLE_BYTES)
            .map(|c| Complex::new(i16::from_le_bytes([c[0], c[1]]), i16::from_le_bytes([c[2], c[3]])))
            .collect();
        Ok(Self { n_chirps, n_rx, n_samples, samples, frame_index: 0, timestamp: 0.0 })
    }
}

/// Renders scenes into IF samples for a fixed radar configuration.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    config: RadarConfig,
    params: DerivedParams,
    options: SynthOptions,
}

impl Synthesizer {
    pub fn new(config: RadarConfig, options: SynthOptions) -> Result<Self, ConfigError> {
        let params = derive_params(&config)?;
        Ok(Self { config, params, options })
    }

    pub fn config(&self) -> &RadarConfig {
        &self.config
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    pub fn options(&self) -> &SynthOptions {
        &self.options
    }

    /// Noise-free IF samples of one chirp, rx-major, accumulated into `out`.
    fn render_chirp(&self, scene: &Scene, out: &mut [Complex<f64>]) -> Result<(), SynthError> {
        let cfg = &self.config;
        let n = cfg.n_samples;
        let two_pi = std::f64::consts::TAU;
        let element_phase_per_sin = two_pi * cfg.rx_spacing / self.params.wavelength;
        let mut tone = vec![Complex::new(0.0, 0.0); n];
        for s in &scene.scatterers {
            if !(s.x.is_finite() && s.y.is_finite() && s.amplitude.is_finite()) {
                return Err(SynthError::NonFinite);
            }
            let range = s.range();
            if !(range > 0.0 && range < self.params.d_max) {
                match self.options.range_policy {
                    RangePolicy::Reject => {
                        return Err(SynthError::OutOfRange { x: s.x, y: s.y, range, d_max: self.params.d_max })
                    }
                    RangePolicy::Drop => {
                        log::warn!("dropping scatterer at range {range:.3} m");
                        continue;
                    }
                }
            }
            let mut amplitude = cfg.tx_amplitude * s.amplitude;
            if self.options.range_rolloff {
                amplitude /= range * range;
            }
            let f_if = 2.0 * cfg.chirp_slope * range / SPEED_OF_LIGHT;
            let round_trip = 2.0 * range / SPEED_OF_LIGHT;
            // Reduce the large carrier phase before it reaches sin/cos.
            let range_phase = (two_pi * (cfg.start_freq * round_trip).fract()).rem_euclid(two_pi);
            let sin_theta = s.x / range;
            let step = two_pi * f_if / cfg.sample_rate;
            for (k, t) in tone.iter_mut().enumerate() {
                *t = Complex::from_polar(amplitude, step * k as f64 + range_phase);
            }
            for rx in 0..cfg.n_rx {
                let element = Complex::from_polar(1.0, element_phase_per_sin * rx as f64 * sin_theta);
                let row = &mut out[rx * n..(rx + 1) * n];
                for (o, t) in row.iter_mut().zip(&tone) {
                    *o += t * element;
                }
            }
        }
        Ok(())
    }

    /// Floating-point IF samples, before 16-bit quantization.
    pub fn synthesize_iq(&self, scenes: ChirpScenes<'_>, seed: u64) -> Result<IqCube, SynthError> {
        let cfg = &self.config;
        if let ChirpScenes::PerChirp(list) = scenes {
            if list.len() != cfg.n_chirps {
                return Err(SynthError::SceneCount { expected: cfg.n_chirps, got: list.len() });
            }
        }
        let mut cube = IqCube::zeros(cfg.n_chirps, cfg.n_rx, cfg.n_samples);
        let chirp_len = cfg.n_rx * cfg.n_samples;
        match scenes {
            ChirpScenes::Static(scene) => {
                let (first, rest) = cube.data.split_at_mut(chirp_len);
                self.render_chirp(scene, first)?;
                for chunk in rest.chunks_exact_mut(chirp_len) {
                    chunk.copy_from_slice(first);
                }
            }
            ChirpScenes::PerChirp(list) => {
                for (scene, chunk) in list.iter().zip(cube.data.chunks_exact_mut(chirp_len)) {
                    self.render_chirp(scene, chunk)?;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (c, chunk) in cube.data.chunks_exact_mut(chirp_len).enumerate() {
            let noise_std = scenes.get(c).noise_std;
            if !noise_std.is_finite() || noise_std < 0.0 {
                return Err(SynthError::NonFinite);
            }
            if noise_std == 0.0 {
                continue;
            }
            let normal = Normal::new(0.0, noise_std / std::f64::consts::SQRT_2).map_err(|_| SynthError::NonFinite)?;
            for z in chunk.iter_mut() {
                *z += Complex::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
        Ok(cube)
    }

    /// Rounds IF samples to 16-bit integers according to the quantization mode.
    pub fn quantize(&self, cube: &IqCube) -> Result<RawFrame, SynthError> {
        let full_scale = i16::MAX as f64;
        let scale = match self.options.quantization {
            Quantization::PeakFraction(fraction) => {
                let peak = cube.peak_magnitude();
                if peak > 0.0 {
                    fraction * full_scale / peak
                } else {
                    0.0
                }
            }
            Quantization::Fixed(scale) => {
                let peak = cube.data.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max) * scale;
                if peak.round() > full_scale {
                    return Err(SynthError::Saturation { scale, peak });
                }
                scale
            }
        };
        let samples =
            cube.data.iter().map(|z| Complex::new((z.re * scale).round() as i16, (z.im * scale).round() as i16)).collect();
        Ok(RawFrame {
            n_chirps: cube.n_chirps,
            n_rx: cube.n_rx,
            n_samples: cube.n_samples,
            samples,
            frame_index: 0,
            timestamp: 0.0,
        })
    }

    pub fn synthesize(&self, scenes: ChirpScenes<'_>, seed: u64) -> Result<RawFrame, SynthError> {
        let cube = self.synthesize_iq(scenes, seed)?;
        self.quantize(&cube)
    }
}

/// Renders a static scene with default options.
pub fn synthesize_frame(config: &RadarConfig, scene: &Scene, seed: u64) -> Result<RawFrame, SynthError> {
    Synthesizer::new(config.clone(), SynthOptions::default())?.synthesize(ChirpScenes::Static(scene), seed)
}
