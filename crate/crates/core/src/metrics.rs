//! Chamfer and modified Hausdorff distances between planar point sets, and
//! the mean / median / 90th-percentile summaries used to report them.

use std::io::{self, Write};

use thiserror::Error;

use crate::pointcloud::Point2;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined for an empty point set")]
    EmptySet,
    #[error("cannot summarize an empty list")]
    EmptyList,
    #[error("non-finite value in summary input")]
    NonFinite,
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static 2-D k-d tree answering nearest-neighbor distance queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point2>,
    nodes: Vec<Node>,
}

fn coord(p: &Point2, axis: usize) -> f64 {
    if axis == 0 {
        p.x
    } else {
        p.y
    }
}

impl KdTree {
    pub fn new(points: &[Point2]) -> Self {
        let mut tree = Self { points: points.to_vec(), nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1) };
        if !points.is_empty() {
            tree.build(0, points.len(), 0);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = depth % 2;
        let mid = start + (end - start) / 2;
        self.points[start..end].select_nth_unstable_by(mid - start, |a, b| coord(a, axis).total_cmp(&coord(b, axis)));
        let value = coord(&self.points[mid], axis);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid, depth + 1);
        let right = self.build(mid, end, depth + 1);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Squared distance from `q` to its nearest point; `None` for an empty tree.
    pub fn nearest_dist2(&self, q: &Point2) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &Point2, best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in &self.points[start..end] {
                    let d = q.dist2(p);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = coord(q, axis) - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricOptions {
    /// Use squared Euclidean distance as the point-to-point cost.
    pub squared: bool,
    /// Modified Hausdorff with the mean of nearest distances instead of the median.
    pub mhd_mean: bool,
}

/// Nearest-neighbor cost of every point of `from` against `to`.
pub fn nearest_costs(from: &[Point2], to: &KdTree, squared: bool) -> Vec<f64> {
    from.iter()
        .map(|p| {
            let d2 = to.nearest_dist2(p).unwrap_or(f64::INFINITY);
            if squared {
                d2
            } else {
                d2.sqrt()
            }
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median with the midpoint rule for even counts. `values` must be non-empty.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub chamfer: f64,
    pub mhd: f64,
    /// Directed terms, `a -> b` then `b -> a`: mean nearest cost.
    pub mean_ab: f64,
    pub mean_ba: f64,
    /// Directed terms used by the modified Hausdorff distance.
    pub mhd_ab: f64,
    pub mhd_ba: f64,
    pub n_a: usize,
    pub n_b: usize,
}

pub fn evaluate(a: &[Point2], b: &[Point2], options: MetricOptions) -> Result<MetricReport, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let ab = nearest_costs(a, &KdTree::new(b), options.squared);
    let ba = nearest_costs(b, &KdTree::new(a), options.squared);
    let (mean_ab, mean_ba) = (mean(&ab), mean(&ba));
    let (mhd_ab, mhd_ba) = if options.mhd_mean { (mean_ab, mean_ba) } else { (median(&ab), median(&ba)) };
    Ok(MetricReport {
        chamfer: mean_ab / 2.0 + mean_ba / 2.0,
        mhd: mhd_ab.max(mhd_ba),
        mean_ab,
        mean_ba,
        mhd_ab,
        mhd_ba,
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Symmetric average nearest-neighbor distance in meters.
pub fn chamfer(a: &[Point2], b: &[Point2]) -> Result<f64, MetricError> {
    Ok(evaluate(a, b, MetricOptions::default())?.chamfer)
}

/// Larger of the two directed median nearest-neighbor distances.
pub fn modified_hausdorff(a: &[Point2], b: &[Point2]) -> Result<f64, MetricError> {
    Ok(evaluate(a, b, MetricOptions::default())?.mhd)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSummary {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub n: usize,
}

/// Nearest-rank percentile `q` in (0, 1]: the `ceil(q n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(values: &[f64]) -> Result<DistributionSummary, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyList);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(DistributionSummary { mean: mean(values), median: median(&sorted), p90: nearest_rank(&sorted, 0.9), n: values.len() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub frame_index: u64,
    pub chamfer: f64,
    pub mhd: f64,
}

pub const EVAL_CSV_HEADER: &str = "frame_index,chamfer_m,mhd_m";

/// Per-frame rows followed by `mean`, `median` and `p90` footer rows in
/// place of the frame index.
pub fn write_eval_csv<W: Write>(mut w: W, scores: &[FrameScore]) -> io::Result<()> {
    writeln!(w, "{EVAL_CSV_HEADER}")?;
    for s in scores {
        writeln!(w, "{},{},{}", s.frame_index, s.chamfer, s.mhd)?;
    }
    if !scores.is_empty() {
        let cd = summarize(&scores.iter().map(|s| s.chamfer).collect::<Vec<_>>());
        let mhd = summarize(&scores.iter().map(|s| s.mhd).collect::<Vec<_>>());
        if let (Ok(cd), Ok(mhd)) = (cd, mhd) {
            writeln!(w, "mean,{},{}", cd.mean, mhd.mean)?;
            writeln!(w, "median,{},{}", cd.median, mhd.median)?;
            writeln!(w, "p90,{},{}", cd.p90, mhd.p90)?;
        }
    }
    w.flush()
}

/// Parses the per-frame rows back, skipping the footer.
pub fn read_eval_csv(text: &str) -> Result<Vec<FrameScore>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(EVAL_CSV_HEADER) {
        return Err("missing eval header".into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(format!("line {}: expected 3 fields", i + 2));
        }
        if matches!(f[0], "mean" | "median" | "p90") {
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
        out.push(FrameScore {
            frame_index: f[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
            chamfer: num(f[1])?,
            mhd: num(f[2])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(from: &[Point2], to: &[Point2]) -> Vec<f64> {
        from.iter().map(|p| to.iter().map(|q| p.dist2(q)).fold(f64::INFINITY, f64::min).sqrt()).collect()
    }

    fn brute_chamfer(a: &[Point2], b: &[Point2]) -> f64 {
        let ab: f64 = brute_nearest(a, b).iter().sum();
        let ba: f64 = brute_nearest(b, a).iter().sum();
        ab / a.len() as f64 / 2.0 + ba / b.len() as f64 / 2.0
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point2> {
        (0..n).map(|_| Point2::new(rng.random_range(-5.0..5.0), rng.random_range(0.0..8.0))).collect()
    }

    #[test]
    fn hand_cases() {
        let a = [Point2::new(0.0, 0.0)];
        let b = [Point2::new(0.0, 0.3)];
        assert_eq!(chamfer(&a, &b).unwrap(), 0.3);
        let a = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)];
        let b = [Point2::new(0.0, 0.0)];
        assert_eq!(modified_hausdorff(&a, &b).unwrap(), 0.5);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(modified_hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &[]), Err(MetricError::EmptySet));
        assert_eq!(modified_hausdorff(&[], &b), Err(MetricError::EmptySet));
    }

    #[test]
    fn squared_and_mean_variants() {
        let a = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)];
        let b = [Point2::new(0.0, 0.0)];
        let sq = evaluate(&a, &b, MetricOptions { squared: true, mhd_mean: false }).unwrap();
        assert_eq!(sq.chamfer, 0.25);
        let r = evaluate(
            &[Point2::new(0.0, 0.0), Point2::new(0.0, 1.0), Point2::new(0.0, 5.0)],
            &b,
            MetricOptions { squared: false, mhd_mean: true },
        )
        .unwrap();
        assert_eq!(r.mhd, 2.0);
    }

    #[test]
    fn kd_tree_matches_brute_force_random_50() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let a = random_cloud(&mut rng, 50);
            let b = random_cloud(&mut rng, 50);
            assert_eq!(chamfer(&a, &b).unwrap(), brute_chamfer(&a, &b));
            assert_eq!(nearest_costs(&a, &KdTree::new(&b), false), brute_nearest(&a, &b));
        }
    }

    #[test]
    fn duplicate_and_collinear_points() {
        let a: Vec<Point2> = (0..100).map(|i| Point2::new(1.0, (i / 10) as f64)).collect();
        let b: Vec<Point2> = (0..37).map(|i| Point2::new(1.0 + 0.01 * i as f64, 3.0)).collect();
        assert_eq!(nearest_costs(&a, &KdTree::new(&b), false), brute_nearest(&a, &b));
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.median, s.p90), (1.0, 1.0, 1.0));
        let s = summarize(&[2.5]).unwrap();
        assert_eq!((s.mean, s.median, s.p90, s.n), (2.5, 2.5, 2.5, 1));
        let one_to_hundred: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(summarize(&one_to_hundred).unwrap().p90, 90.0);
        // Nearest rank over 0..=99 is the 90th smallest value, which is 89.
        let zero_based: Vec<f64> = (0..100).map(|v| v as f64).collect();
        let s = summarize(&zero_based).unwrap();
        assert_eq!(s.p90, 89.0);
        assert_eq!(s.median, 49.5);
        assert_eq!(summarize(&[]), Err(MetricError::EmptyList));
    }

    #[test]
    fn eval_csv_schema() {
        let scores =
            vec![FrameScore { frame_index: 0, chamfer: 0.1, mhd: 0.2 }, FrameScore { frame_index: 1, chamfer: 0.3, mhd: 0.0 }];
        let mut buf = Vec::new();
        write_eval_csv(&mut buf, &scores).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "frame_index,chamfer_m,mhd_m");
        assert_eq!(lines[3], "mean,0.2,0.1");
        assert_eq!(lines[4], "median,0.2,0.1");
        assert_eq!(lines[5], "p90,0.3,0.2");
        assert_eq!(read_eval_csv(&text).unwrap(), scores);
    }

    fn cloud() -> impl Strategy<Value = Vec<Point2>> {
        proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| Point2::new(x, y)), 1..120)
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(a in cloud(), b in cloud()) {
            let ab = evaluate(&a, &b, MetricOptions::default()).unwrap();
            let ba = evaluate(&b, &a, MetricOptions::default()).unwrap();
            prop_assert_eq!(ab.chamfer, ba.chamfer);
            prop_assert_eq!(ab.mhd, ba.mhd);
            prop_assert!(ab.chamfer >= 0.0 && ab.mhd >= 0.0);
        }

        #[test]
        fn zero_iff_every_point_matched(a in cloud(), extra in cloud()) {
            let mut b = a.clone();
            b.reverse();
            prop_assert_eq!(chamfer(&a, &b).unwrap(), 0.0);
            let mut c = a.clone();
            c.extend(extra.iter().map(|p| Point2::new(p.x + 100.0, p.y)));
            prop_assert!(chamfer(&a, &c).unwrap() > 0.0);
        }

        #[test]
        fn translation_by_exact_offsets(a in cloud(), b in cloud(), tx in -64i32..64, ty in -64i32..64) {
            // Dyadic coordinates keep the shifted differences exact.
            let snap = |p: &Point2| Point2::new((p.x * 256.0).round() / 256.0, (p.y * 256.0).round() / 256.0);
            let a: Vec<Point2> = a.iter().map(snap).collect();
            let b: Vec<Point2> = b.iter().map(snap).collect();
            let t = |p: &Point2| Point2::new(p.x + tx as f64, p.y + ty as f64);
            let at: Vec<Point2> = a.iter().map(t).collect();
            let bt: Vec<Point2> = b.iter().map(t).collect();
            prop_assert_eq!(evaluate(&a, &b, MetricOptions::default()), evaluate(&at, &bt, MetricOptions::default()));
        }

        #[test]
        fn summary_ordering(values in proptest::collection::vec(0.0f64..10.0, 1..200)) {
            let s = summarize(&values).unwrap();
            prop_assert!(s.median <= s.p90);
        }
    }
}
