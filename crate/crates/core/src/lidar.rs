//! Ground-truth occupancy: 3-D points to a binary polar grid of range x
//! azimuth cells, and grids back to 2-D Cartesian points at cell centers.

use std::fmt::Write as _;
use std::io;

use thiserror::Error;

use crate::fmcw::DerivedParams;
use crate::pointcloud::{LidarPoint, Point2, PointCloud2D};
use crate::tensor_io::{TensorFile, TensorIoError};

pub const GRID_RANGE_BINS: usize = 64;
pub const GRID_AZIMUTH_BINS: usize = 48;
pub const FOV_HALF_DEG: f64 = 50.0;
pub const Z_MIN: f64 = -0.20;
pub const Z_MAX: f64 = 0.10;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    Shape { rows: usize, cols: usize, got_rows: usize, got_cols: usize },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("grid cell values must be 0 or 1")]
    NotBinary,
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Cell layout of the polar grid. Azimuth cells are uniform in angle and
/// start at `azimuth_min` (the right edge of the field of view).
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    pub n_range: usize,
    pub n_azimuth: usize,
    /// Meters per range cell.
    pub range_res: f64,
    /// Radians per azimuth cell.
    pub azimuth_res: f64,
    pub azimuth_min: f64,
    /// Points at or beyond this range are dropped.
    pub max_range: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl GridGeometry {
    /// 64 x 48 cells spanning `d_max` and +/-50 degrees.
    pub fn from_params(params: &DerivedParams) -> Self {
        let half = FOV_HALF_DEG.to_radians();
        Self {
            n_range: GRID_RANGE_BINS,
            n_azimuth: GRID_AZIMUTH_BINS,
            range_res: params.d_res,
            azimuth_res: 2.0 * half / GRID_AZIMUTH_BINS as f64,
            azimuth_min: -half,
            max_range: params.d_max,
            z_min: Z_MIN,
            z_max: Z_MAX,
        }
    }

    pub fn azimuth_max(&self) -> f64 {
        self.azimuth_min + self.azimuth_res * self.n_azimuth as f64
    }

    /// Range and angle of the center of cell `(r, a)`.
    pub fn cell_center(&self, r: usize, a: usize) -> (f64, f64) {
        ((r as f64 + 0.5) * self.range_res, self.azimuth_min + (a as f64 + 0.5) * self.azimuth_res)
    }

    /// Cell containing a planar point, or `None` outside the grid.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let d = p.range();
        let theta = p.azimuth();
        // Tolerance absorbs atan2 rounding for points placed exactly on the edges.
        let eps = 1e-12;
        if !(d > 0.0 && d < self.max_range) || theta < self.azimuth_min - eps || theta > self.azimuth_max() + eps {
            return None;
        }
        let r = ((d / self.range_res).floor() as usize).min(self.n_range - 1);
        // The closed upper edge of the field of view falls in the last cell.
        let a = (((theta - self.azimuth_min) / self.azimuth_res).floor().max(0.0) as usize).min(self.n_azimuth - 1);
        Some((r, a))
    }

    /// Worst-case distance between a point and the center of its cell, for
    /// the point at range `d`; exact chord length at the cell corner.
    pub fn round_trip_bound(&self, d: f64) -> f64 {
        let d_center_max = d + self.range_res / 2.0;
        let half = self.range_res / 2.0;
        (half * half + 4.0 * d * d_center_max * (self.azimuth_res / 4.0).sin().powi(2)).sqrt()
    }
}

/// Keeps points inside the height slab, the field of view and `(0, max_range)`.
pub fn filter_points(points: &[LidarPoint], geometry: &GridGeometry) -> Vec<LidarPoint> {
    points
        .iter()
        .filter(|p| p.z >= geometry.z_min && p.z <= geometry.z_max && geometry.cell_of(p.planar()).is_some())
        .copied()
        .collect()
}

/// Binary occupancy grid `[range][azimuth]`, azimuth fastest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolarGrid {
    pub n_range: usize,
    pub n_azimuth: usize,
    cells: Vec<u8>,
}

impl PolarGrid {
    pub fn empty(n_range: usize, n_azimuth: usize) -> Self {
        Self { n_range, n_azimuth, cells: vec![0; n_range * n_azimuth] }
    }

    pub fn standard() -> Self {
        Self::empty(GRID_RANGE_BINS, GRID_AZIMUTH_BINS)
    }

    pub fn from_cells(n_range: usize, n_azimuth: usize, cells: Vec<u8>) -> Result<Self, GridError> {
        if cells.len() != n_range * n_azimuth {
            return Err(GridError::Shape {
                rows: n_range,
                cols: n_azimuth,
                got_rows: cells.len() / n_azimuth.max(1),
                got_cols: n_azimuth,
            });
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(GridError::NotBinary);
        }
        Ok(Self { n_range, n_azimuth, cells })
    }

    pub fn get(&self, r: usize, a: usize) -> bool {
        self.cells[r * self.n_azimuth + a] != 0
    }

    pub fn set(&mut self, r: usize, a: usize, value: bool) {
        self.cells[r * self.n_azimuth + a] = value as u8;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells.iter().enumerate().filter(|(_, &c)| c != 0).map(|(i, _)| (i / self.n_azimuth, i % self.n_azimuth))
    }

    /// Cells as `0.0` / `1.0`, the training target layout.
    pub fn to_f32(&self) -> Vec<f32> {
        self.cells.iter().map(|&c| c as f32).collect()
    }

    /// ASCII bitmap: one row per range bin, one column per azimuth bin.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P1\n{} {}\n", self.n_azimuth, self.n_range);
        for row in self.cells.chunks_exact(self.n_azimuth) {
            let line: Vec<&str> = row.iter().map(|&c| if c != 0 { "1" } else { "0" }).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_pgm(text: &str) -> Result<Self, GridError> {
        let mut tokens = text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace);
        if tokens.next() != Some("P1") {
            return Err(GridError::Pgm("missing P1 magic".into()));
        }
        let mut dim = || -> Result<usize, GridError> {
            tokens.next().and_then(|t| t.parse().ok()).ok_or_else(|| GridError::Pgm("bad dimensions".into()))
        };
        let cols = dim()?;
        let rows = dim()?;
        let cells: Vec<u8> = tokens
            .flat_map(str::chars)
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(GridError::Pgm(format!("unexpected {other:?}"))),
            })
            .collect::<Result<_, _>>()?;
        Self::from_cells(rows, cols, cells)
    }

    pub fn to_tensor(&self) -> TensorFile {
        TensorFile::u8([1, self.n_range, self.n_azimuth], self.cells.clone()).expect("shape matches cells")
    }

    pub fn from_tensor(t: TensorFile) -> Result<Self, GridError> {
        let [c, rows, cols] = t.dims;
        if c != 1 {
            return Err(GridError::Shape { rows, cols, got_rows: c * rows, got_cols: cols });
        }
        Self::from_cells(rows, cols, t.into_u8()?)
    }

    /// Checks the standard 64 x 48 shape.
    pub fn expect_shape(&self, n_range: usize, n_azimuth: usize) -> Result<(), GridError> {
        if self.n_range != n_range || self.n_azimuth != n_azimuth {
            return Err(GridError::Shape { rows: n_range, cols: n_azimuth, got_rows: self.n_range, got_cols: self.n_azimuth });
        }
        Ok(())
    }
}

/// Marks every cell hit by at least one point; points off the grid are ignored.
pub fn quantize_to_grid(points: &[LidarPoint], geometry: &GridGeometry) -> PolarGrid {
    quantize_planar(points.iter().map(LidarPoint::planar), geometry)
}

pub fn quantize_planar(points: impl IntoIterator<Item = Point2>, geometry: &GridGeometry) -> PolarGrid {
    let mut grid = PolarGrid::empty(geometry.n_range, geometry.n_azimuth);
    for p in points {
        if let Some((r, a)) = geometry.cell_of(p) {
            grid.set(r, a, true);
        }
    }
    grid
}

/// One point per occupied cell at the cell center.
pub fn grid_to_cartesian(grid: &PolarGrid, geometry: &GridGeometry) -> PointCloud2D {
    grid.occupied()
        .map(|(r, a)| {
            let (d, theta) = geometry.cell_center(r, a);
            Point2::from_polar(d, theta)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmcw::{derive_params, RadarConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometry() -> GridGeometry {
        GridGeometry::from_params(&derive_params(&RadarConfig::default()).unwrap())
    }

    fn polar(d: f64, deg: f64, z: f64) -> LidarPoint {
        let p = Point2::from_polar(d, deg.to_radians());
        LidarPoint::new(p.x, p.y, z)
    }

    #[test]
    fn filter_examples() {
        let g = geometry();
        let kept = filter_points(
            &[
                polar(3.0, 0.0, -0.30),
                polar(3.0, 0.0, 0.0),
                polar(3.0, 60.0, 0.0),
                polar(3.0, 0.0, 0.10),
                polar(3.0, 0.0, -0.20),
                polar(9.0, 0.0, 0.0),
                LidarPoint::new(0.0, -2.0, 0.0),
            ],
            &g,
        );
        assert_eq!(kept, vec![polar(3.0, 0.0, 0.0), polar(3.0, 0.0, 0.10), polar(3.0, 0.0, -0.20)]);
    }

    #[test]
    fn quantize_examples() {
        let g = geometry();
        assert_eq!(quantize_to_grid(&[], &g).count(), 0);
        let grid = quantize_to_grid(&[polar(4.285, 0.0, 0.0)], &g);
        assert_eq!(grid.occupied().collect::<Vec<_>>(), vec![(32, 24)]);
        // Both field-of-view edges land inside the grid.
        let edges = quantize_to_grid(&[polar(2.0, -50.0, 0.0), polar(2.0, 50.0, 0.0)], &g);
        assert_eq!(edges.occupied().map(|c| c.1).collect::<Vec<_>>(), vec![0, 47]);
    }

    #[test]
    fn cell_center_example() {
        let g = geometry();
        let (d, theta) = g.cell_center(32, 24);
        assert!((d - 32.5 * g.range_res).abs() < 1e-12);
        assert!((d - 4.35).abs() < 0.005);
        assert!((theta.to_degrees() - (-50.0 + 24.5 * 100.0 / 48.0)).abs() < 1e-9);
        let mut grid = PolarGrid::standard();
        assert!(grid_to_cartesian(&grid, &g).is_empty());
        grid.set(32, 24, true);
        let pts = grid_to_cartesian(&grid, &g);
        assert_eq!(pts.len(), 1);
        assert!((pts[0].range() - d).abs() < 1e-12);
    }

    #[test]
    fn wall_segment_is_a_connected_arc() {
        let g = geometry();
        let (a, b) = (Point2::new(-3.0, 5.0), Point2::new(2.5, 3.0));
        let pts: Vec<LidarPoint> = (0..1000)
            .map(|i| {
                let t = i as f64 / 999.0;
                LidarPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), 0.0)
            })
            .collect();
        let grid = quantize_to_grid(&filter_points(&pts, &g), &g);
        let cells: Vec<(usize, usize)> = grid.occupied().collect();
        assert!(cells.len() > 20);
        let mut seen = vec![false; cells.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..cells.len() {
                let (r0, a0) = cells[i];
                let (r1, a1) = cells[j];
                if !seen[j] && r0.abs_diff(r1) <= 1 && a0.abs_diff(a1) <= 1 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn round_trip_bound_on_10k_points() {
        let g = geometry();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let half = FOV_HALF_DEG.to_radians();
        for _ in 0..10_000 {
            let d = rng.random_range(1e-3..g.max_range);
            let theta = rng.random_range(-half..=half);
            let p = Point2::from_polar(d, theta);
            let (r, a) = g.cell_of(p).unwrap();
            let (dc, tc) = g.cell_center(r, a);
            let moved = p.dist2(&Point2::from_polar(dc, tc)).sqrt();
            assert!(moved <= g.round_trip_bound(d) + 1e-12, "d={d} moved={moved}");
        }
    }

    #[test]
    fn pgm_and_tensor_round_trip() {
        let mut grid = PolarGrid::standard();
        grid.set(0, 0, true);
        grid.set(63, 47, true);
        grid.set(10, 5, true);
        let pgm = grid.to_pgm();
        assert!(pgm.starts_with("P1\n48 64\n"));
        assert_eq!(pgm.lines().count(), 2 + 64);
        assert_eq!(PolarGrid::from_pgm(&pgm).unwrap(), grid);
        let mut buf = Vec::new();
        grid.to_tensor().write(&mut buf).unwrap();
        assert_eq!(u16::from_le_bytes([buf[10], buf[11]]), 1);
        assert_eq!(PolarGrid::from_tensor(TensorFile::read(buf.as_slice()).unwrap()).unwrap(), grid);
        assert!(PolarGrid::from_pgm("P1\n2 2\n0 1 2 0\n").is_err());
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(pts in proptest::collection::vec((0.01f64..9.0, -1.0f64..1.0, -0.3f64..0.2), 0..200)) {
            let g = geometry();
            let cloud: Vec<LidarPoint> = pts.iter().map(|&(d, t, z)| {
                let p = Point2::from_polar(d, t);
                LidarPoint::new(p.x, p.y, z)
            }).collect();
            let grid = quantize_to_grid(&filter_points(&cloud, &g), &g);
            prop_assert_eq!(grid.n_range, 64);
            prop_assert_eq!(grid.n_azimuth, 48);
            let again = quantize_planar(grid_to_cartesian(&grid, &g), &g);
            prop_assert_eq!(again, grid);
        }
    }
}
