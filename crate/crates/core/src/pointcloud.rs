//! Sensor-centric point types and their CSV form (`x,y[,z]`, meters).
//!
//! Frame convention used throughout: `y` is boresight, `x` points to the
//! radar's left, azimuth `theta = atan2(x, y)` is positive to the left.

use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing or unexpected header (want `x,y` or `x,y,z`), got {0:?}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(range: f64, theta: f64) -> Self {
        Self::new(range * theta.sin(), range * theta.cos())
    }

    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn azimuth(&self) -> f64 {
        self.x.atan2(self.y)
    }

    pub fn dist2(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn planar(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

pub type PointCloud2D = Vec<Point2>;

pub fn write_points_csv<W: Write>(mut w: W, points: &[Point2]) -> io::Result<()> {
    writeln!(w, "x,y")?;
    for p in points {
        writeln!(w, "{},{}", p.x, p.y)?;
    }
    w.flush()
}

pub fn write_lidar_csv<W: Write>(mut w: W, points: &[LidarPoint]) -> io::Result<()> {
    writeln!(w, "x,y,z")?;
    for p in points {
        writeln!(w, "{},{},{}", p.x, p.y, p.z)?;
    }
    w.flush()
}

/// Reads either CSV layout; a 2-column file gets `z = 0`.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<LidarPoint>, CsvError> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let cols = match header.trim() {
        "x,y" => 2,
        "x,y,z" => 3,
        other => return Err(CsvError::Header(other.to_string())),
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| CsvError::Parse { line: i + 2, reason };
        let values = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| parse_err(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != cols {
            return Err(parse_err(format!("expected {cols} fields, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite coordinate".into()));
        }
        out.push(LidarPoint::new(values[0], values[1], values.get(2).copied().unwrap_or(0.0)));
    }
    Ok(out)
}

pub fn read_points_csv<R: BufRead>(r: R) -> Result<PointCloud2D, CsvError> {
    Ok(read_csv(r)?.iter().map(LidarPoint::planar).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_bit_exact() {
        let pts = vec![Point2::new(0.1, 4.35), Point2::new(-1.0 / 3.0, 2.0e-7)];
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &pts).unwrap();
        assert!(buf.starts_with(b"x,y\n"));
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), pts);

        let lp = vec![LidarPoint::new(1.0, 2.0, -0.15)];
        let mut buf = Vec::new();
        write_lidar_csv(&mut buf, &lp).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), lp);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_csv(&b"a,b\n1,2\n"[..]), Err(CsvError::Header(_))));
        assert!(matches!(read_csv(&b"x,y\n1,2\n1,nope\n"[..]), Err(CsvError::Parse { line: 3, .. })));
        assert!(read_csv(&b"x,y,z\n1,2\n"[..]).is_err());
    }

    #[test]
    fn azimuth_is_positive_to_the_left() {
        let p = Point2::from_polar(2.0, 0.3);
        assert!(p.x > 0.0);
        assert!((p.azimuth() - 0.3).abs() < 1e-12);
        assert!((p.range() - 2.0).abs() < 1e-12);
    }
}
