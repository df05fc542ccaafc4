//! Synthetic 2D environments shared by the radar simulator and the lidar
//! ground-truth renderer.
//!
//! World and radar frames use the same handedness: at heading 0 the radar
//! looks along world +y and its +x axis (positive azimuth) is world +x.
//! Positive heading turns the boresight toward +x.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::fmcw::{PointScatterer, Scene};
use crate::pointcloud::{LidarPoint, Point2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        Self { a: Point2::new(ax, ay), b: Point2::new(bx, by) }
    }

    pub fn length(&self) -> f64 {
        self.a.dist2(&self.b).sqrt()
    }

    /// Parameter `t` along the ray `origin + t * dir` where it crosses this
    /// segment, if it does with `t > 0`.
    pub fn intersect_ray(&self, origin: Point2, dir: (f64, f64)) -> Option<f64> {
        let (ex, ey) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let denom = dir.0 * ey - dir.1 * ex;
        if denom.abs() < 1e-12 {
            return None;
        }
        let (wx, wy) = (self.a.x - origin.x, self.a.y - origin.y);
        let t = (wx * ey - wy * ex) / denom;
        let u = (wx * dir.1 - wy * dir.0) / denom;
        (t > 1e-9 && (-1e-9..=1.0 + 1e-9).contains(&u)).then_some(t)
    }

    /// Unit normal (left of `a -> b`).
    fn normal(&self) -> (f64, f64) {
        let len = self.length();
        (-(self.b.y - self.a.y) / len, (self.b.x - self.a.x) / len)
    }

    fn distance_to(&self, p: Point2) -> f64 {
        let (ex, ey) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let l2 = ex * ex + ey * ey;
        let t = (((p.x - self.a.x) * ex + (p.y - self.a.y) * ey) / l2).clamp(0.0, 1.0);
        p.dist2(&Point2::new(self.a.x + t * ex, self.a.y + t * ey)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recipe {
    Corridor,
    Room,
    Corner,
}

impl Recipe {
    pub const ALL: [Recipe; 3] = [Recipe::Corridor, Recipe::Room, Recipe::Corner];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Corridor => "corridor",
            Recipe::Room => "room",
            Recipe::Corner => "corner",
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown scene recipe `{s}` (expected corridor, room or corner)"))
    }
}

/// Wall segments plus the convex region a radar may occupy.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub recipe: Recipe,
    pub walls: Vec<Segment>,
    /// Axis-aligned bounds of the free region: `(x0, y0, x1, y1)`.
    pub free: (f64, f64, f64, f64),
}

impl Layout {
    /// Random geometry for `recipe`; the radar region always contains the origin.
    pub fn sample<R: Rng>(recipe: Recipe, rng: &mut R) -> Self {
        match recipe {
            Recipe::Corridor => {
                let w = rng.random_range(1.6..3.6);
                let off = rng.random_range(-0.3..0.3) * w;
                let (xl, xr) = (-w / 2.0 + off, w / 2.0 + off);
                let mut walls = vec![Segment::new(xl, -30.0, xl, 30.0), Segment::new(xr, -30.0, xr, 30.0)];
                let mut y1 = 30.0;
                if rng.random_bool(0.5) {
                    y1 = rng.random_range(3.0..12.0);
                    walls.push(Segment::new(xl, y1, xr, y1));
                }
                Self { recipe, walls, free: (xl, -30.0, xr, y1) }
            }
            Recipe::Room => {
                let (w, d) = (rng.random_range(3.0..9.0), rng.random_range(3.0..9.0));
                let x0 = -rng.random_range(0.25..0.75) * w;
                let y0 = -rng.random_range(0.15..0.6) * d;
                let (x1, y1) = (x0 + w, y0 + d);
                let walls = vec![
                    Segment::new(x0, y0, x1, y0),
                    Segment::new(x1, y0, x1, y1),
                    Segment::new(x1, y1, x0, y1),
                    Segment::new(x0, y1, x0, y0),
                ];
                Self { recipe, walls, free: (x0, y0, x1, y1) }
            }
            Recipe::Corner => {
                // Two walls meeting ahead of the radar; the region is the
                // quadrant behind both.
                let a = rng.random_range(0.8..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let b = rng.random_range(1.5..7.0);
                let far = 30.0;
                let side = Segment::new(a, -far, a, b);
                let front = Segment::new(a, b, a - a.signum() * far, b);
                let free = if a > 0.0 { (-far, -far, a, b) } else { (a, -far, far, b) };
                Self { recipe, walls: vec![side, front], free }
            }
        }
    }

    /// Nearest wall hit along `bearing` (radians from +y toward +x).
    pub fn raycast(&self, origin: Point2, bearing: f64) -> Option<(f64, usize)> {
        let dir = (bearing.sin(), bearing.cos());
        self.walls
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.intersect_ray(origin, dir).map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Whether `p` on wall `wall` is in line of sight of `origin`.
    pub fn visible(&self, origin: Point2, p: Point2, wall: usize) -> bool {
        let d = origin.dist2(&p).sqrt();
        if d < 1e-9 {
            return false;
        }
        let dir = ((p.x - origin.x) / d, (p.y - origin.y) / d);
        !self.walls.iter().enumerate().any(|(i, s)| i != wall && s.intersect_ray(origin, dir).is_some_and(|t| t < d - 1e-6))
    }

    /// Distance from `p` to the closest wall.
    pub fn clearance(&self, p: Point2) -> f64 {
        self.walls.iter().map(|s| s.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn inside(&self, p: Point2, margin: f64) -> bool {
        let (x0, y0, x1, y1) = self.free;
        p.x > x0 + margin && p.x < x1 - margin && p.y > y0 + margin && p.y < y1 - margin
    }

    /// Fixed reflectors along every wall, spaced `spacing` apart with
    /// random strength.
    pub fn scatterers<R: Rng>(&self, spacing: f64, rng: &mut R) -> Vec<WallScatterer> {
        let mut out = Vec::new();
        for (wall, s) in self.walls.iter().enumerate() {
            let n = (s.length() / spacing).ceil().max(1.0) as usize;
            for i in 0..n {
                let t = (i as f64 + rng.random_range(0.0..1.0)) / n as f64;
                out.push(WallScatterer {
                    p: Point2::new(s.a.x + t * (s.b.x - s.a.x), s.a.y + t * (s.b.y - s.a.y)),
                    amplitude: rng.random_range(0.5..1.5),
                    wall,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallScatterer {
    pub p: Point2,
    pub amplitude: f64,
    pub wall: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// World point expressed in the sensor frame.
    pub fn to_local(&self, p: Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        let (dx, dy) = (p.x - self.x, p.y - self.y);
        Point2::new(dx * c - dy * s, dx * s + dy * c)
    }

    pub fn to_world(&self, p: Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        Point2::new(self.x + p.x * c + p.y * s, self.y - p.x * s + p.y * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrajectoryKind {
    Static,
    Straight,
    Turn,
    Spin,
    /// In-place rotation no slower than [`RAPID_MIN_RATE`].
    Rapid,
}

/// Minimum yaw rate of the rapid recipe (rad/s).
pub const RAPID_MIN_RATE: f64 = 2.0;

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 5] =
        [TrajectoryKind::Static, TrajectoryKind::Straight, TrajectoryKind::Turn, TrajectoryKind::Spin, TrajectoryKind::Rapid];

    pub fn name(self) -> &'static str {
        match self {
            TrajectoryKind::Static => "static",
            TrajectoryKind::Straight => "straight",
            TrajectoryKind::Turn => "turn",
            TrajectoryKind::Spin => "spin",
            TrajectoryKind::Rapid => "rapid",
        }
    }

    /// Speed (m/s) and yaw rate (rad/s) ranges.
    fn motion_ranges(self) -> ((f64, f64), (f64, f64)) {
        match self {
            TrajectoryKind::Static => ((0.0, 0.0), (0.0, 0.0)),
            TrajectoryKind::Straight => ((0.3, 1.5), (0.0, 0.0)),
            TrajectoryKind::Turn => ((0.2, 1.0), (0.3, 1.2)),
            TrajectoryKind::Spin => ((0.0, 0.0), (0.8, 2.0)),
            TrajectoryKind::Rapid => ((0.0, 0.3), (RAPID_MIN_RATE, 4.0)),
        }
    }
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrajectoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrajectoryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown trajectory `{s}` (expected static, straight, turn, spin or rapid)"))
    }
}

/// Constant speed and yaw rate from a start pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub start: Pose,
    pub speed: f64,
    pub yaw_rate: f64,
}

impl Trajectory {
    pub fn pose_at(&self, t: f64) -> Pose {
        let h0 = self.start.heading;
        let h = h0 + self.yaw_rate * t;
        let (dx, dy) = if self.yaw_rate.abs() < 1e-9 {
            (self.speed * t * h0.sin(), self.speed * t * h0.cos())
        } else {
            let r = self.speed / self.yaw_rate;
            (r * (h0.cos() - h.cos()), r * (h.sin() - h0.sin()))
        };
        Pose::new(self.start.x + dx, self.start.y + dy, wrap_angle(h))
    }

    /// Samples a trajectory that stays `margin` clear of every wall for
    /// `duration` seconds. Falls back to a motionless pose at the origin
    /// region if no candidate fits.
    pub fn sample<R: Rng>(kind: TrajectoryKind, layout: &Layout, duration: f64, rng: &mut R) -> Self {
        let margin = 0.35;
        let ((v0, v1), (w0, w1)) = kind.motion_ranges();
        for _ in 0..200 {
            let start = sample_start(layout, rng);
            let speed = if v1 > v0 { rng.random_range(v0..v1) } else { v0 };
            let mut yaw_rate = if w1 > w0 { rng.random_range(w0..w1) } else { w0 };
            if rng.random_bool(0.5) {
                yaw_rate = -yaw_rate;
            }
            let traj = Self { kind, start, speed, yaw_rate };
            let fits = (0..=20).all(|i| {
                let p = traj.pose_at(duration * i as f64 / 20.0).position();
                layout.inside(p, margin) && layout.clearance(p) > margin
            });
            if fits {
                return traj;
            }
        }
        Self { kind, start: Pose::new(0.0, 0.0, 0.0), speed: 0.0, yaw_rate: 0.0 }
    }
}

fn sample_start<R: Rng>(layout: &Layout, rng: &mut R) -> Pose {
    let (x0, y0, x1, y1) = layout.free;
    match layout.recipe {
        Recipe::Corridor => {
            let x = rng.random_range(x0 + 0.4..x1 - 0.4);
            let y = if y1 < 29.0 { rng.random_range((y1 - 7.0).max(-5.0)..y1 - 1.0) } else { 0.0 };
            // Mostly along the corridor, either direction.
            let mut h = rng.random_range(-0.6..0.6);
            if rng.random_bool(0.2) {
                h += PI;
            }
            Pose::new(x, y, wrap_angle(h))
        }
        Recipe::Room => {
            Pose::new(rng.random_range(x0 + 0.4..x1 - 0.4), rng.random_range(y0 + 0.4..y1 - 0.4), rng.random_range(-PI..PI))
        }
        Recipe::Corner => {
            let (cx, cy) = if x1 < 29.0 { (x1, y1) } else { (x0, y1) };
            let x = cx - cx.signum() * rng.random_range(0.6..4.0);
            let y = cy - rng.random_range(1.0..6.0);
            // Roughly facing the corner.
            let toward = (cx - x).atan2(cy - y);
            Pose::new(x, y, wrap_angle(toward + rng.random_range(-0.8..0.8)))
        }
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Radar-side rendering knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarRender {
    pub noise_std: f64,
    /// Scatterers beyond this range are left out (keep below `d_max`).
    pub max_range: f64,
}

/// Scatterers seen from `pose`: same-frame coordinates, amplitude shaped by
/// a cosine element pattern and the incidence angle, occluded ones removed.
pub fn radar_scene(layout: &Layout, scatterers: &[WallScatterer], pose: &Pose, render: &RadarRender) -> Scene {
    let origin = pose.position();
    let mut out = Vec::new();
    for s in scatterers {
        let local = pose.to_local(s.p);
        let range = local.range();
        if local.y <= 0.0 || range >= render.max_range || range < 0.05 {
            continue;
        }
        if !layout.visible(origin, s.p, s.wall) {
            continue;
        }
        let theta = local.azimuth();
        let pattern = theta.cos();
        let (nx, ny) = layout.walls[s.wall].normal();
        let incidence = ((s.p.x - origin.x) * nx + (s.p.y - origin.y) * ny).abs() / range;
        let amp = s.amplitude * pattern * (0.35 + 0.65 * incidence);
        out.push(PointScatterer::new(local.x, local.y, amp));
    }
    Scene::new(out, render.noise_std)
}

/// Lidar-side rendering knobs; defaults resemble a 16-beam spinning unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarRender {
    /// Horizontal angular step (rad).
    pub angular_step: f64,
    /// Half-width of the scanned sector (rad).
    pub half_fov: f64,
    pub max_range: f64,
    /// Returns per ray inside the kept height band, at `z` in `[-0.2, 0.1]`.
    pub in_band: usize,
    /// Returns per ray from beams above or below the band.
    pub out_of_band: usize,
}

impl Default for LidarRender {
    fn default() -> Self {
        Self { angular_step: 0.2f64.to_radians(), half_fov: FRAC_PI_2, max_range: 100.0, in_band: 2, out_of_band: 2 }
    }
}

/// Ray-cast lidar returns in the sensor frame.
pub fn lidar_scan<R: Rng>(layout: &Layout, pose: &Pose, render: &LidarRender, rng: &mut R) -> Vec<LidarPoint> {
    let n = (2.0 * render.half_fov / render.angular_step).round() as usize;
    let mut out = Vec::with_capacity(n * (render.in_band + render.out_of_band));
    for i in 0..=n {
        let theta = -render.half_fov + i as f64 * render.angular_step;
        let Some((d, _)) = layout.raycast(pose.position(), pose.heading + theta) else {
            continue;
        };
        if d > render.max_range {
            continue;
        }
        let p = Point2::from_polar(d, theta);
        for _ in 0..render.in_band {
            out.push(LidarPoint::new(p.x, p.y, rng.random_range(-0.2..=0.1)));
        }
        for k in 0..render.out_of_band {
            let z = if k % 2 == 0 { rng.random_range(-1.0..-0.25) } else { rng.random_range(0.15..1.5) };
            out.push(LidarPoint::new(p.x, p.y, z));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pose_transforms_are_inverse() {
        let pose = Pose::new(1.0, -2.0, 0.7);
        let p = Point2::new(3.0, 4.0);
        let back = pose.to_world(pose.to_local(p));
        assert!((back.x - p.x).abs() < 1e-12 && (back.y - p.y).abs() < 1e-12);
        // Turning toward +x puts a point on world +x straight ahead.
        let q = Pose::new(0.0, 0.0, FRAC_PI_2).to_local(Point2::new(2.0, 0.0));
        assert!(q.x.abs() < 1e-12 && (q.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn raycast_hits_nearest_wall() {
        let layout = Layout {
            recipe: Recipe::Room,
            walls: vec![Segment::new(-5.0, 3.0, 5.0, 3.0), Segment::new(-5.0, 6.0, 5.0, 6.0)],
            free: (-5.0, -5.0, 5.0, 3.0),
        };
        let (d, w) = layout.raycast(Point2::new(0.0, 0.0), 0.0).unwrap();
        assert!((d - 3.0).abs() < 1e-12 && w == 0);
        let (d, _) = layout.raycast(Point2::new(0.0, 0.0), PI / 4.0).unwrap();
        assert!((d - 3.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!(layout.raycast(Point2::new(0.0, 0.0), PI).is_none());
        assert!(!layout.visible(Point2::new(0.0, 0.0), Point2::new(0.0, 6.0), 1));
        assert!(layout.visible(Point2::new(0.0, 0.0), Point2::new(0.0, 3.0), 0));
    }

    #[test]
    fn trajectories_follow_their_rates() {
        let t = Trajectory { kind: TrajectoryKind::Turn, start: Pose::new(0.0, 0.0, 0.0), speed: 1.0, yaw_rate: FRAC_PI_2 };
        // Quarter circle of radius 2/pi turning toward +x.
        let p = t.pose_at(1.0);
        let r = 2.0 / PI;
        assert!((p.x - r).abs() < 1e-12 && (p.y - r).abs() < 1e-12);
        assert!((p.heading - FRAC_PI_2).abs() < 1e-12);
        let s = Trajectory { yaw_rate: 0.0, ..t };
        assert!((s.pose_at(2.0).y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_trajectories_stay_clear_of_walls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for recipe in Recipe::ALL {
            for kind in TrajectoryKind::ALL {
                for _ in 0..10 {
                    let layout = Layout::sample(recipe, &mut rng);
                    let traj = Trajectory::sample(kind, &layout, 1.0, &mut rng);
                    for i in 0..=10 {
                        let p = traj.pose_at(i as f64 / 10.0).position();
                        assert!(layout.clearance(p) > 0.3, "{recipe} {kind}");
                    }
                    let (_, (w0, _)) = kind.motion_ranges();
                    assert!(traj.yaw_rate.abs() >= w0 || traj.yaw_rate == 0.0);
                    if kind == TrajectoryKind::Rapid {
                        assert!(traj.yaw_rate.abs() >= RAPID_MIN_RATE);
                    }
                }
            }
        }
    }

    #[test]
    fn lidar_scan_lies_on_walls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layout = Layout::sample(Recipe::Room, &mut rng);
        let pose = Pose::new(0.0, 0.0, 0.3);
        let pts = lidar_scan(&layout, &pose, &LidarRender::default(), &mut rng);
        assert!(!pts.is_empty());
        for p in &pts {
            let w = pose.to_world(p.planar());
            assert!(layout.clearance(w) < 1e-6);
        }
        assert!(pts.iter().any(|p| p.z < -0.2) && pts.iter().any(|p| p.z > 0.1));
    }

    #[test]
    fn radar_scene_keeps_front_and_visible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layout = Layout::sample(Recipe::Corridor, &mut rng);
        let sc = layout.scatterers(0.05, &mut rng);
        let pose = Pose::new(0.0, 0.0, 0.0);
        let scene = radar_scene(&layout, &sc, &pose, &RadarRender { noise_std: 0.1, max_range: 8.0 });
        assert!(!scene.scatterers.is_empty());
        for s in &scene.scatterers {
            assert!(s.y > 0.0 && s.range() < 8.0 && s.amplitude > 0.0);
        }
    }
}
