//! Raw frame to network input: per-chirp range FFT over samples, zero-padded
//! azimuth FFT over rx elements, magnitude, relative threshold, max
//! normalization and a symmetric field-of-view crop.
//!
//! Azimuth bins are uniform in `sin(theta)`. After the shift, bin
//! `n_azimuth / 2` is boresight and bin `a` corresponds to
//! `sin(theta) = (a - n_azimuth / 2) / n_azimuth * lambda / rx_spacing`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::num_traits::{Float, NumCast};
use rustfft::{Fft, FftNum, FftPlanner};
use thiserror::Error;

use crate::fmcw::{RadarConfig, RawFrame};

pub const DEFAULT_AZIMUTH_BINS: usize = 64;
pub const DEFAULT_CROP_BINS: usize = 48;
pub const DEFAULT_INPUT_CHIRPS: usize = 40;
pub const DEFAULT_THRESHOLD_DB: f64 = 45.0;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("chirp has {got} samples, expected {expected} ({n_rx} rx x {n_samples} samples)")]
    ChirpShape { expected: usize, got: usize, n_rx: usize, n_samples: usize },
    #[error("frame is {got_rx} rx x {got_samples} samples, processor expects {n_rx} x {n_samples}")]
    FrameShape { n_rx: usize, n_samples: usize, got_rx: usize, got_samples: usize },
    #[error("frame has {got} chirps, at least {needed} required")]
    TooFewChirps { needed: usize, got: usize },
    #[error("grid is {got} azimuth bins wide, expected {expected}")]
    GridWidth { expected: usize, got: usize },
    #[error("invalid dsp configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    pub n_rx: usize,
    /// Samples per chirp; also the range FFT length and range bin count.
    pub n_samples: usize,
    /// Azimuth FFT length after zero padding the rx axis.
    pub n_azimuth: usize,
    /// Central azimuth bins kept by the crop.
    pub crop_bins: usize,
    /// Chirps stacked into the input tensor.
    pub input_chirps: usize,
    /// Cells more than this many dB below the chirp maximum are zeroed.
    pub threshold_db: f64,
    /// Hann taper on the sample axis before the range FFT.
    pub range_window: bool,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            n_rx: 4,
            n_samples: 64,
            n_azimuth: DEFAULT_AZIMUTH_BINS,
            crop_bins: DEFAULT_CROP_BINS,
            input_chirps: DEFAULT_INPUT_CHIRPS,
            threshold_db: DEFAULT_THRESHOLD_DB,
            range_window: false,
        }
    }
}

impl DspConfig {
    pub fn for_radar(radar: &RadarConfig) -> Self {
        Self { n_rx: radar.n_rx, n_samples: radar.n_samples, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: &str| Err(DspError::Config(m.to_string()));
        if self.n_rx == 0 || self.n_samples == 0 || self.input_chirps == 0 {
            return bad("dimensions must be positive");
        }
        if self.n_azimuth < self.n_rx {
            return bad("azimuth FFT shorter than the array");
        }
        if self.crop_bins == 0 || self.crop_bins > self.n_azimuth || (self.n_azimuth - self.crop_bins) % 2 != 0 {
            return bad("crop must be a symmetric subset of the azimuth bins");
        }
        if !(self.threshold_db.is_finite() && self.threshold_db > 0.0) {
            return bad("threshold must be a positive dB value");
        }
        Ok(())
    }

    /// First azimuth bin kept by the crop.
    pub fn crop_start(&self) -> usize {
        (self.n_azimuth - self.crop_bins) / 2
    }

    /// Tensor shape `[chirps, range, azimuth]`.
    pub fn input_dims(&self) -> [usize; 3] {
        [self.input_chirps, self.n_samples, self.crop_bins]
    }

    /// `sin(theta)` at the center of shifted azimuth bin `a`.
    pub fn azimuth_bin_sin(&self, a: f64, wavelength: f64, rx_spacing: f64) -> f64 {
        (a - (self.n_azimuth / 2) as f64) / self.n_azimuth as f64 * wavelength / rx_spacing
    }

    /// Fractional shifted azimuth bin for an arrival angle.
    pub fn azimuth_bin_of(&self, theta: f64, wavelength: f64, rx_spacing: f64) -> f64 {
        (self.n_azimuth / 2) as f64 + theta.sin() * rx_spacing / wavelength * self.n_azimuth as f64
    }
}

/// Complex response of one chirp, `[range][azimuth]` with azimuth fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAzimuth<T> {
    pub n_range: usize,
    pub n_azimuth: usize,
    pub values: Vec<Complex<T>>,
}

impl<T: Float> RangeAzimuth<T> {
    pub fn get(&self, range: usize, azimuth: usize) -> Complex<T> {
        self.values[range * self.n_azimuth + azimuth]
    }

    pub fn magnitudes(&self) -> Vec<T> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// `(range, azimuth)` of the largest magnitude.
    pub fn peak(&self) -> (usize, usize) {
        let i = argmax(&self.magnitudes());
        (i / self.n_azimuth, i % self.n_azimuth)
    }
}

/// Thresholded, normalized magnitude map, row-major `[range][width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeMap<T> {
    pub n_range: usize,
    pub width: usize,
    pub values: Vec<T>,
    /// The input was identically zero; the map is zero and was not divided.
    pub all_zero: bool,
}

/// The network input, `[chirp][range][azimuth]`, azimuth fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub dims: [usize; 3],
    pub data: Vec<f32>,
    /// Chirp slices whose response was identically zero.
    pub zero_slices: usize,
}

impl InputTensor {
    pub fn slice(&self, chirp: usize) -> &[f32] {
        let len = self.dims[1] * self.dims[2];
        &self.data[chirp * len..(chirp + 1) * len]
    }
}

pub(crate) fn argmax<T: Float>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Planned FFTs and scratch for one configuration. Not `Sync` because of the
/// scratch buffers; build one per worker.
pub struct Processor<T: FftNum = f32> {
    config: DspConfig,
    range_fft: Arc<dyn Fft<T>>,
    azimuth_fft: Arc<dyn Fft<T>>,
    window: Option<Vec<T>>,
    scratch: Vec<Complex<T>>,
    rows: Vec<Complex<T>>,
}

impl<T: FftNum + Float> Processor<T> {
    pub fn new(config: DspConfig) -> Result<Self, DspError> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        let range_fft = planner.plan_fft_forward(config.n_samples);
        let azimuth_fft = planner.plan_fft_forward(config.n_azimuth);
        let scratch_len = range_fft.get_inplace_scratch_len().max(azimuth_fft.get_inplace_scratch_len());
        let window = config.range_window.then(|| hann(config.n_samples));
        Ok(Self {
            rows: vec![Complex::new(T::zero(), T::zero()); config.n_rx * config.n_samples],
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
            config,
            range_fft,
            azimuth_fft,
            window,
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.config
    }

    /// 2-D response of one chirp given rx-major samples (`[rx][sample]`).
    pub fn range_azimuth(&mut self, chirp: &[Complex<T>]) -> Result<RangeAzimuth<T>, DspError> {
        let (n_rx, n_s, n_az) = (self.config.n_rx, self.config.n_samples, self.config.n_azimuth);
        if chirp.len() != n_rx * n_s {
            return Err(DspError::ChirpShape { expected: n_rx * n_s, got: chirp.len(), n_rx, n_samples: n_s });
        }
        self.rows.copy_from_slice(chirp);
        if let Some(w) = &self.window {
            for row in self.rows.chunks_exact_mut(n_s) {
                for (z, &w) in row.iter_mut().zip(w) {
                    *z = *z * w;
                }
            }
        }
        self.range_fft.process_with_scratch(&mut self.rows, &mut self.scratch);

        // Transpose to [range][azimuth], zero padded beyond n_rx.
        let zero = Complex::new(T::zero(), T::zero());
        let mut values = vec![zero; n_s * n_az];
        for rx in 0..n_rx {
            for r in 0..n_s {
                values[r * n_az + rx] = self.rows[rx * n_s + r];
            }
        }
        self.azimuth_fft.process_with_scratch(&mut values, &mut self.scratch);
        for row in values.chunks_exact_mut(n_az) {
            row.rotate_right(n_az / 2);
        }
        Ok(RangeAzimuth { n_range: n_s, n_azimuth: n_az, values })
    }

    /// Full per-chirp chain on 16-bit samples: response, threshold, crop.
    pub fn process_chirp(&mut self, chirp: &[Complex<i16>]) -> Result<MagnitudeMap<T>, DspError> {
        let samples: Vec<Complex<T>> = chirp
            .iter()
            .map(|z| Complex::new(<T as NumCast>::from(z.re).unwrap(), <T as NumCast>::from(z.im).unwrap()))
            .collect();
        let response = self.range_azimuth(&samples)?;
        let map = magnitude_threshold_normalize(&response, self.config.threshold_db);
        crop_fov(&map, self.config.crop_bins)
    }

    /// Stacks the first `input_chirps` processed chirps of a frame.
    pub fn assemble_input(&mut self, frame: &RawFrame) -> Result<InputTensor, DspError> {
        let cfg = &self.config;
        if frame.n_rx != cfg.n_rx || frame.n_samples != cfg.n_samples {
            return Err(DspError::FrameShape {
                n_rx: cfg.n_rx,
                n_samples: cfg.n_samples,
                got_rx: frame.n_rx,
                got_samples: frame.n_samples,
            });
        }
        if frame.n_chirps < cfg.input_chirps {
            return Err(DspError::TooFewChirps { needed: cfg.input_chirps, got: frame.n_chirps });
        }
        let dims = cfg.input_dims();
        let mut data = Vec::with_capacity(dims.iter().product());
        let mut zero_slices = 0;
        for c in 0..dims[0] {
            let map = self.process_chirp(frame.chirp(c))?;
            zero_slices += map.all_zero as usize;
            data.extend(map.values.iter().map(|v| v.to_f32().unwrap()));
        }
        Ok(InputTensor { dims, data, zero_slices })
    }
}

/// Magnitude relative to the map maximum, with cells below `-threshold_db`
/// set to exactly zero. An all-zero response passes through undivided.
pub fn magnitude_threshold_normalize<T: Float>(response: &RangeAzimuth<T>, threshold_db: f64) -> MagnitudeMap<T> {
    let mut values = response.magnitudes();
    let max = values.iter().copied().fold(T::zero(), T::max);
    let all_zero = max <= T::zero();
    if !all_zero {
        let floor = max * <T as NumCast>::from(10f64.powf(-threshold_db / 20.0)).unwrap();
        for v in &mut values {
            *v = if *v < floor { T::zero() } else { *v / max };
        }
    }
    MagnitudeMap { n_range: response.n_range, width: response.n_azimuth, values, all_zero }
}

/// Keeps the central `keep` azimuth columns.
pub fn crop_fov<T: Float>(map: &MagnitudeMap<T>, keep: usize) -> Result<MagnitudeMap<T>, DspError> {
    if keep > map.width || (map.width - keep) % 2 != 0 {
        return Err(DspError::GridWidth { expected: keep + (map.width.saturating_sub(keep) % 2), got: map.width });
    }
    let start = (map.width - keep) / 2;
    let values = map.values.chunks_exact(map.width).flat_map(|row| row[start..start + keep].iter().copied()).collect();
    Ok(MagnitudeMap { n_range: map.n_range, width: keep, values, all_zero: map.all_zero })
}

/// Crops a map of the standard 64-bin width to 48 bins.
pub fn crop_standard<T: Float>(map: &MagnitudeMap<T>) -> Result<MagnitudeMap<T>, DspError> {
    if map.width != DEFAULT_AZIMUTH_BINS {
        return Err(DspError::GridWidth { expected: DEFAULT_AZIMUTH_BINS, got: map.width });
    }
    crop_fov(map, DEFAULT_CROP_BINS)
}

fn hann<T: Float>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / n as f64;
            <T as NumCast>::from(x.sin().powi(2)).unwrap()
        })
        .collect()
}
