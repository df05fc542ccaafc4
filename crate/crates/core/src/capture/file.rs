//! Raw-capture files: a 32-byte header followed by frames back to back.
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `RDC1`                |
//! | 4      | 2    | version                     |
//! | 6      | 2    | chirps per frame            |
//! | 8      | 2    | rx channels                 |
//! | 10     | 2    | samples per chirp           |
//! | 12     | 8    | sample rate (Sa/s)          |
//! | 20     | 8    | chirp slope (Hz/ms)         |
//! | 28     | 4    | reserved, zero              |
//!
//! All integers are little-endian. Samples are interleaved `I0, Q0, I1, Q1`
//! as signed 16-bit values; the fastest axis is the sample, then rx, then chirp.

use std::io::{self, Read, Write};

use super::CaptureError;
use crate::fmcw::{RadarConfig, RawFrame, SAMPLE_BYTES};

pub const CAPTURE_MAGIC: [u8; 4] = *b"RDC1";
pub const CAPTURE_VERSION: u16 = 1;
pub const CAPTURE_HEADER_BYTES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureHeader {
    pub version: u16,
    pub n_chirps: u16,
    pub n_rx: u16,
    pub n_samples: u16,
    pub sample_rate: u64,
    pub chirp_slope_hz_per_ms: u64,
}

impl CaptureHeader {
    pub fn from_config(config: &RadarConfig) -> Result<Self, CaptureError> {
        let dim = |v: usize| u16::try_from(v).map_err(|_| CaptureError::Header(format!("dimension {v} exceeds u16")));
        Ok(Self {
            version: CAPTURE_VERSION,
            n_chirps: dim(config.n_chirps)?,
            n_rx: dim(config.n_rx)?,
            n_samples: dim(config.n_samples)?,
            sample_rate: config.sample_rate.round() as u64,
            chirp_slope_hz_per_ms: (config.chirp_slope * 1e-3).round() as u64,
        })
    }

    pub fn frame_bytes(&self) -> usize {
        self.n_chirps as usize * self.n_rx as usize * self.n_samples as usize * SAMPLE_BYTES
    }

    /// Slope in Hz/s.
    pub fn chirp_slope(&self) -> f64 {
        self.chirp_slope_hz_per_ms as f64 * 1e3
    }

    pub fn to_bytes(&self) -> [u8; CAPTURE_HEADER_BYTES] {
        let mut out = [0u8; CAPTURE_HEADER_BYTES];
        out[..4].copy_from_slice(&CAPTURE_MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..8].copy_from_slice(&self.n_chirps.to_le_bytes());
        out[8..10].copy_from_slice(&self.n_rx.to_le_bytes());
        out[10..12].copy_from_slice(&self.n_samples.to_le_bytes());
        out[12..20].copy_from_slice(&self.sample_rate.to_le_bytes());
        out[20..28].copy_from_slice(&self.chirp_slope_hz_per_ms.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; CAPTURE_HEADER_BYTES]) -> Result<Self, CaptureError> {
        if bytes[..4] != CAPTURE_MAGIC {
            return Err(CaptureError::Header(format!("bad magic {:?}", &bytes[..4])));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let header = Self {
            version: u16_at(4),
            n_chirps: u16_at(6),
            n_rx: u16_at(8),
            n_samples: u16_at(10),
            sample_rate: u64_at(12),
            chirp_slope_hz_per_ms: u64_at(20),
        };
        if header.version != CAPTURE_VERSION {
            return Err(CaptureError::Header(format!("unsupported version {}", header.version)));
        }
        if header.frame_bytes() == 0 {
            return Err(CaptureError::Header("zero frame dimension".into()));
        }
        Ok(header)
    }

    /// True when the header describes frames produced by `config`.
    pub fn matches(&self, config: &RadarConfig) -> bool {
        self.n_chirps as usize == config.n_chirps
            && self.n_rx as usize == config.n_rx
            && self.n_samples as usize == config.n_samples
    }
}

pub struct CaptureWriter<W: Write> {
    header: CaptureHeader,
    inner: W,
    frames: u64,
}

impl<W: Write> CaptureWriter<W> {
    pub fn new(mut inner: W, header: CaptureHeader) -> io::Result<Self> {
        inner.write_all(&header.to_bytes())?;
        Ok(Self { header, inner, frames: 0 })
    }

    pub fn header(&self) -> &CaptureHeader {
        &self.header
    }

    pub fn write_frame(&mut self, frame: &RawFrame) -> Result<(), CaptureError> {
        if frame.n_chirps != self.header.n_chirps as usize
            || frame.n_rx != self.header.n_rx as usize
            || frame.n_samples != self.header.n_samples as usize
        {
            return Err(CaptureError::FrameShape { expected: self.header.frame_bytes(), got: frame.byte_len() });
        }
        self.write_frame_bytes(&frame.to_bytes())
    }

    pub fn write_frame_bytes(&mut self, bytes: &[u8]) -> Result<(), CaptureError> {
        if bytes.len() != self.header.frame_bytes() {
            return Err(CaptureError::FrameShape { expected: self.header.frame_bytes(), got: bytes.len() });
        }
        self.inner.write_all(bytes)?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> u64 {
        self.frames
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub struct CaptureReader<R: Read> {
    header: CaptureHeader,
    inner: R,
    frames_read: u64,
}

impl<R: Read> CaptureReader<R> {
    pub fn new(mut inner: R) -> Result<Self, CaptureError> {
        let mut buf = [0u8; CAPTURE_HEADER_BYTES];
        inner.read_exact(&mut buf).map_err(|e| CaptureError::Header(format!("truncated header: {e}")))?;
        Ok(Self { header: CaptureHeader::from_bytes(&buf)?, inner, frames_read: 0 })
    }

    pub fn header(&self) -> &CaptureHeader {
        &self.header
    }

    /// Next frame's raw bytes; `None` at a clean end of file. A partial
    /// trailing frame is an error.
    pub fn next_frame_bytes(&mut self) -> Result<Option<Vec<u8>>, CaptureError> {
        let len = self.header.frame_bytes();
        let mut buf = vec![0u8; len];
        let mut filled = 0;
        while filled < len {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        match filled {
            0 => Ok(None),
            n if n == len => {
                self.frames_read += 1;
                Ok(Some(buf))
            }
            n => Err(CaptureError::TruncatedFrame { expected: len, got: n }),
        }
    }

    pub fn next_frame(&mut self) -> Result<Option<RawFrame>, CaptureError> {
        let h = self.header;
        let index = self.frames_read;
        match self.next_frame_bytes()? {
            None => Ok(None),
            Some(bytes) => {
                let mut frame = RawFrame::from_bytes(h.n_chirps as usize, h.n_rx as usize, h.n_samples as usize, &bytes)
                    .expect("length checked by reader");
                frame.frame_index = index;
                Ok(Some(frame))
            }
        }
    }

    /// Reads every remaining frame.
    pub fn read_all(&mut self) -> Result<Vec<Vec<u8>>, CaptureError> {
        let mut frames = Vec::new();
        while let Some(f) = self.next_frame_bytes()? {
            frames.push(f);
        }
        Ok(frames)
    }
}
