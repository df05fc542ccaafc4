//! Little-endian weights file.
//!
//! Layout: magic `RCW1`, `u32` version, `u32` record count, then six `u16`
//! architecture fields (input channels, base channels, depth, kernel,
//! height, width). Each record is `u32` name length, UTF-8 name, `u32` rank,
//! `rank` x `u32` dims, then `f32` values. Every convolution contributes a
//! `<layer>.weight` record `[out, in, k, k]` followed by `<layer>.bias` `[out]`.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::config::NetConfig;
use crate::net::{NetError, Network};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"RCW1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("architecture field {0} exceeds u16")]
    TooLarge(&'static str),
    #[error("expected {expected} records, file has {got}")]
    RecordCount { expected: usize, got: usize },
    #[error("record {index}: expected `{expected}`, found `{got}`")]
    Name { index: usize, expected: String, got: String },
    #[error("record `{name}`: expected shape {expected:?}, found {got:?}")]
    Shape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("record name is not UTF-8")]
    Utf8,
    #[error("trailing bytes after last record")]
    Trailing,
    #[error(transparent)]
    Net(#[from] NetError),
}

fn records(config: &NetConfig) -> Vec<(String, Vec<usize>, usize)> {
    config
        .layout()
        .into_iter()
        .flat_map(|s| {
            [
                (format!("{}.weight", s.name), s.weight_shape().to_vec(), s.weight_offset),
                (format!("{}.bias", s.name), vec![s.c_out], s.bias_offset),
            ]
        })
        .collect()
}

fn u16_field(v: usize, name: &'static str) -> Result<[u8; 2], WeightsError> {
    u16::try_from(v).map(u16::to_le_bytes).map_err(|_| WeightsError::TooLarge(name))
}

pub fn write_weights<T: Scalar, W: Write>(net: &Network<T>, mut w: W) -> Result<(), WeightsError> {
    let c = net.config();
    let recs = records(c);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(recs.len() as u32).to_le_bytes())?;
    for (v, name) in [
        (c.input_channels, "input_channels"),
        (c.base_channels, "base_channels"),
        (c.depth, "depth"),
        (c.kernel_size, "kernel_size"),
        (c.height, "height"),
        (c.width, "width"),
    ] {
        w.write_all(&u16_field(v, name)?)?;
    }
    let params = net.params();
    for (name, dims, offset) in &recs {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for &d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let n: usize = dims.iter().product();
        let mut buf = Vec::with_capacity(4 * n);
        for p in &params[*offset..offset + n] {
            buf.extend_from_slice(&(p.f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a network, checking every record name and shape against the
/// architecture stored in the header.
pub fn read_weights<T: Scalar, R: Read>(mut r: R) -> Result<Network<T>, WeightsError> {
    let mut magic = [0; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(WeightsError::Magic(magic));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(WeightsError::Version(version));
    }
    let count = read_u32(&mut r)? as usize;
    let mut arch = [0; 12];
    r.read_exact(&mut arch)?;
    let f = |i: usize| u16::from_le_bytes([arch[2 * i], arch[2 * i + 1]]) as usize;
    let config =
        NetConfig { input_channels: f(0), base_channels: f(1), depth: f(2), kernel_size: f(3), height: f(4), width: f(5) };
    let mut net = Network::<T>::zeros(config)?;
    let recs = records(&config);
    if recs.len() != count {
        return Err(WeightsError::RecordCount { expected: recs.len(), got: count });
    }
    for (index, (name, dims, offset)) in recs.iter().enumerate() {
        let len = read_u32(&mut r)? as usize;
        let mut raw = vec![0; len];
        r.read_exact(&mut raw)?;
        let got = String::from_utf8(raw).map_err(|_| WeightsError::Utf8)?;
        if &got != name {
            return Err(WeightsError::Name { index, expected: name.clone(), got });
        }
        let rank = read_u32(&mut r)? as usize;
        let got_dims = (0..rank.min(8)).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<io::Result<Vec<_>>>()?;
        if &got_dims != dims {
            return Err(WeightsError::Shape { name: name.clone(), expected: dims.clone(), got: got_dims });
        }
        let n: usize = dims.iter().product();
        let mut buf = vec![0; 4 * n];
        r.read_exact(&mut buf)?;
        for (p, b) in net.params_mut()[*offset..offset + n].iter_mut().zip(buf.chunks_exact(4)) {
            *p = T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
        }
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(WeightsError::Trailing);
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NetConfig {
        NetConfig { input_channels: 3, base_channels: 2, depth: 2, kernel_size: 3, height: 16, width: 12 }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = Network::<f32>::init(cfg(), 11).unwrap();
        let mut buf = Vec::new();
        write_weights(&net, &mut buf).unwrap();
        let back: Network<f32> = read_weights(buf.as_slice()).unwrap();
        assert_eq!(back.config(), net.config());
        assert_eq!(back.params(), net.params());
        let x = vec![0.25f32; cfg().input_len()];
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn header_layout() {
        let net = Network::<f32>::zeros(cfg()).unwrap();
        let mut buf = Vec::new();
        write_weights(&net, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"RCW1");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize, 2 * cfg().layout().len());
        assert_eq!(u16::from_le_bytes([buf[16], buf[17]]), 2);
        let payload = 4 * cfg().param_count();
        assert!(buf.len() > 24 + payload);
    }

    #[test]
    fn rejects_corruption() {
        let net = Network::<f32>::init(cfg(), 1).unwrap();
        let mut buf = Vec::new();
        write_weights(&net, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights::<f32, _>(bad.as_slice()), Err(WeightsError::Magic(_))));

        // Rank of the first record: after the 24-byte header, name length and name.
        let name_len = u32::from_le_bytes(buf[24..28].try_into().unwrap()) as usize;
        let dim0 = 24 + 4 + name_len + 4;
        let mut bad = buf.clone();
        bad[dim0] ^= 1;
        assert!(matches!(read_weights::<f32, _>(bad.as_slice()), Err(WeightsError::Shape { .. })));

        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_weights::<f32, _>(bad.as_slice()), Err(WeightsError::Trailing)));

        assert!(read_weights::<f32, _>(&buf[..buf.len() - 1]).is_err());
    }
}
