//! Scan-matching odometry.
//!
//! Consecutive scans are registered by point-to-line ICP and the relative
//! transforms are chained into a pose estimate. Edge features (high local
//! curvature) give the lateral centroid of texture the policy steers toward.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lidar::{filter_dynamic, LidarScan};
use crate::scene::{Point, Pose2D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdometryError {
    #[error("degenerate scan pair: {prev} previous / {cur} current usable points (need {min})")]
    DegenerateScan { prev: usize, cur: usize, min: usize },
    #[error("no edge features to take a centroid of")]
    EmptyFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    /// Ring neighbours considered on each side of a point.
    pub k: usize,
    pub curvature_threshold: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams {
            k: 5,
            curvature_threshold: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeFeatureSet {
    /// Sensor-frame positions.
    pub points: Vec<Point>,
    /// Mean y in the RL frame, filled in once a pose estimate is applied.
    pub centroid_y_world: Option<f64>,
}

/// Local smoothness score of every ray, `None` for misses.
///
/// For a hit `p_i` with present ring neighbours `p_j` (up to `k` on each
/// side, misses omitted) the score is `|Σ (p_j − p_i)| / Σ |p_j − p_i|`.
/// It lies in [0, 1]: near 0 inside a straight run, 1 at the end of one, and
/// a hit with no neighbours at all scores 1.
pub fn smoothness_scores(scan: &LidarScan, k: usize) -> Vec<Option<f64>> {
    let n = scan.points.len();
    let pos: Vec<Option<Point>> = scan.points.iter().map(|p| p.position()).collect();
    (0..n)
        .map(|i| {
            let pi = pos[i]?;
            let mut sum = nalgebra::Vector2::zeros();
            let mut total = 0.0;
            let mut count = 0;
            for off in 1..=k.min(n / 2) {
                for j in [(i + off) % n, (i + n - off) % n] {
                    if let Some(pj) = pos[j] {
                        let d = pj - pi;
                        sum += d;
                        total += d.norm();
                        count += 1;
                    }
                }
            }
            Some(if count == 0 || total == 0.0 {
                1.0
            } else {
                sum.norm() / total
            })
        })
        .collect()
}

pub fn extract_edge_features(scan: &LidarScan, params: &EdgeParams) -> EdgeFeatureSet {
    let points = smoothness_scores(scan, params.k)
        .into_iter()
        .zip(&scan.points)
        .filter_map(|(score, p)| match score {
            Some(s) if s > params.curvature_threshold => p.position(),
            _ => None,
        })
        .collect();
    EdgeFeatureSet {
        points,
        centroid_y_world: None,
    }
}

/// Mean RL-frame y of the edge features under `pose_est`.
pub fn compute_feature_centroid_y(features: &EdgeFeatureSet, pose_est: &Pose2D) -> Result<f64, OdometryError> {
    if features.points.is_empty() {
        return Err(OdometryError::EmptyFeatures);
    }
    let sum: f64 = features.points.iter().map(|p| pose_est.transform_point(p).y).sum();
    Ok(sum / features.points.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once an accepted update is smaller than this (m and rad combined).
    pub tolerance: f64,
    /// Initial robust scale and the nearest-line search radius. Residuals
    /// well beyond the scale contribute a near-constant cost.
    pub gate: f64,
    /// The scale is halved after each converged stage down to this value.
    pub min_gate: f64,
    pub min_points: usize,
    /// Half-width of the coarse yaw search around the initial guess, rad.
    /// Zero disables it.
    pub yaw_search: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            tolerance: 1e-6,
            gate: 2.0,
            min_gate: 0.03,
            min_points: 10,
            yaw_search: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Pose of the current sensor frame expressed in the previous one.
    pub transform: Pose2D,
    pub iterations: usize,
    /// Registration cost after each accepted step or gate tightening,
    /// starting with the seeded guess. Strictly decreasing.
    pub errors: Vec<f64>,
}

/// Uniform grid over line anchors for nearest-point queries.
struct Grid<'a> {
    pts: &'a [Point],
    x0: f64,
    y0: f64,
    cell: f64,
    nx: i64,
    ny: i64,
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> Grid<'a> {
    fn new(pts: &'a [Point], cell: f64) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in pts {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let nx = ((x1 - x0) / cell).floor() as i64 + 1;
        let ny = ((y1 - y0) / cell).floor() as i64 + 1;
        let idx = |p: &Point| {
            let cx = ((p.x - x0) / cell).floor() as i64;
            let cy = ((p.y - y0) / cell).floor() as i64;
            (cy * nx + cx) as usize
        };
        let ncell = (nx * ny) as usize;
        let mut counts = vec![0usize; ncell + 1];
        for p in pts {
            counts[idx(p) + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; pts.len()];
        for (k, p) in pts.iter().enumerate() {
            let c = idx(p);
            items[fill[c]] = k;
            fill[c] += 1;
        }
        Grid {
            pts,
            x0,
            y0,
            cell,
            nx,
            ny,
            starts: counts,
            items,
        }
    }

    /// Index of the nearest point within `radius` of `q`.
    fn nearest(&self, q: &Point, radius: f64) -> Option<usize> {
        let cx = ((q.x - self.x0) / self.cell).floor() as i64;
        let cy = ((q.y - self.y0) / self.cell).floor() as i64;
        let max_ring = (radius / self.cell).ceil() as i64 + 1;
        let mut best = (radius * radius, usize::MAX);
        for ring in 0..=max_ring {
            let mut visit = |gx: i64, gy: i64| {
                if gx < 0 || gy < 0 || gx >= self.nx || gy >= self.ny {
                    return;
                }
                let c = (gy * self.nx + gx) as usize;
                for &k in &self.items[self.starts[c]..self.starts[c + 1]] {
                    let d2 = (self.pts[k] - q).norm_squared();
                    if d2 <= best.0 {
                        best = (d2, k);
                    }
                }
            };
            if ring == 0 {
                visit(cx, cy);
            } else {
                for d in -ring..=ring {
                    visit(cx + d, cy - ring);
                    visit(cx + d, cy + ring);
                }
                for d in (-ring + 1)..ring {
                    visit(cx - ring, cy + d);
                    visit(cx + ring, cy + d);
                }
            }
            let reach = ring as f64 * self.cell;
            if (best.1 != usize::MAX && best.0 <= reach * reach) || reach > radius {
                break;
            }
        }
        (best.1 != usize::MAX).then_some(best.1)
    }
}

struct Correspondence {
    /// Unit normal of the matched line.
    n: nalgebra::Vector2<f64>,
    /// Point on the line.
    a: Point,
    src: Point,
    /// Robust weight at the evaluated transform.
    w: f64,
}

struct Evaluation {
    cost: f64,
    matches: Vec<Correspondence>,
}

/// Geman-McClure loss with scale `c`; tends to `c²` for large residuals.
fn robust(r2: f64, c2: f64) -> f64 {
    r2 * c2 / (r2 + c2)
}

fn apply(t: &Vector3<f64>, p: &Point) -> Point {
    let (s, c) = t[2].sin_cos();
    Point::new(c * p.x - s * p.y + t[0], s * p.x + c * p.y + t[1])
}

/// Local lines of the previous scan, one per hit whose neighbourhood is
/// straight, indexed by the hit position.
struct Reference<'a> {
    grid: Grid<'a>,
    lines: Vec<(Point, nalgebra::Vector2<f64>)>,
    search: f64,
}

impl<'a> Reference<'a> {
    /// Line of the nearest anchor to `q`.
    fn line(&self, q: &Point) -> Option<(Point, nalgebra::Vector2<f64>)> {
        self.grid.nearest(q, self.search).map(|k| self.lines[k])
    }
}

/// Least-squares line through hit `ia` and up to `LINE_HALF_WINDOW`
/// contiguous ring neighbours on each side, as a point on the line and its
/// unit normal. Curved or cornered neighbourhoods give no line.
fn fit_local_line(
    pts: &[Point],
    ring_of: &[usize],
    at_ring: &[Option<usize>],
    range: &[f64],
    ia: usize,
) -> Option<(Point, nalgebra::Vector2<f64>)> {
    let n_ring = at_ring.len() as isize;
    let neighbour = |i: usize, step: isize| -> Option<usize> {
        let rr = (ring_of[i] as isize + step).rem_euclid(n_ring) as usize;
        let j = at_ring[rr]?;
        let max_gap = 0.1 + 0.03 * range[i];
        ((pts[j] - pts[i]).norm() <= max_gap).then_some(j)
    };
    let mut members = vec![ia];
    for step in [-1isize, 1] {
        let mut cur = ia;
        for _ in 0..LINE_HALF_WINDOW {
            match neighbour(cur, step) {
                Some(next) if next != ia => {
                    members.push(next);
                    cur = next;
                }
                _ => break,
            }
        }
    }
    if members.len() < 3 {
        return None;
    }
    let n = members.len() as f64;
    let c = members
        .iter()
        .fold(nalgebra::Vector2::zeros(), |acc, &i| acc + pts[i].coords)
        / n;
    let mut cov = nalgebra::Matrix2::zeros();
    for &i in &members {
        let d = pts[i].coords - c;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let (imin, imax) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    if eig.eigenvalues[imax] <= 0.0 || eig.eigenvalues[imin].max(0.0).sqrt() > MAX_LINE_SPREAD {
        return None;
    }
    let normal = eig.eigenvectors.column(imin).into_owned().normalize();
    Some((Point::from(c), normal))
}

const LINE_HALF_WINDOW: usize = 3;
const YAW_SEARCH_STEP: f64 = 0.05;
/// Largest RMS distance of the fitted points from their line, metres.
const MAX_LINE_SPREAD: f64 = 0.05;

fn evaluate(reference: &Reference<'_>, cur: &[Point], t: &Vector3<f64>, scale: f64) -> Evaluation {
    let c2 = scale * scale;
    let mut cost = 0.0;
    let mut matches = Vec::with_capacity(cur.len());
    for src in cur {
        let q = apply(t, src);
        let Some((a, n)) = reference.line(&q) else {
            cost += c2;
            continue;
        };
        let r = n.dot(&(q - a));
        let r2 = r * r;
        cost += robust(r2, c2);
        let w = c2 * c2 / ((r2 + c2) * (r2 + c2));
        matches.push(Correspondence { n, a, src: *src, w });
    }
    Evaluation {
        cost: cost / cur.len() as f64,
        matches,
    }
}

/// Damped, reweighted Gauss-Newton step for the current correspondences.
fn gauss_newton_step(eval: &Evaluation, t: &Vector3<f64>) -> Option<Vector3<f64>> {
    if eval.matches.len() < 3 {
        return None;
    }
    let (s, c) = t[2].sin_cos();
    let mut h = Matrix3::zeros();
    let mut g = Vector3::zeros();
    for m in &eval.matches {
        let q = apply(t, &m.src);
        let r = m.n.dot(&(q - m.a));
        let dq_dth = nalgebra::Vector2::new(-s * m.src.x - c * m.src.y, c * m.src.x - s * m.src.y);
        let j = Vector3::new(m.n.x, m.n.y, m.n.dot(&dq_dth));
        h += m.w * j * j.transpose();
        g += m.w * j * r;
    }
    let damp = 1e-9 * (h.trace() + 1e-12);
    (h + Matrix3::identity() * damp).lu().solve(&(-g))
}

/// Register `cur` against `prev` by point-to-line ICP.
///
/// Every previous hit with a straight ring neighbourhood carries a fitted
/// line; each current hit is matched to the line of its nearest such hit.
/// The cost is a Geman-McClure loss of the point-to-line distance. A
/// reweighted Gauss-Newton step on (dx, dy, dyaw) is accepted only if it
/// lowers the cost, halving it otherwise. Once a stage converges the scale is
/// halved, down to `min_gate`. The start is the cheapest of the initial guess
/// and its yaw offsets in steps of `YAW_SEARCH_STEP` within `yaw_search`.
pub fn match_scans(
    prev: &LidarScan,
    cur: &LidarScan,
    init_guess: Pose2D,
    params: &IcpParams,
) -> Result<IcpResult, OdometryError> {
    let prev_pts = prev.hit_points();
    let cur_pts = cur.hit_points();
    if prev_pts.len() < params.min_points || cur_pts.len() < params.min_points {
        return Err(OdometryError::DegenerateScan {
            prev: prev_pts.len(),
            cur: cur_pts.len(),
            min: params.min_points,
        });
    }
    let mut ring_of = Vec::with_capacity(prev_pts.len());
    let mut range = Vec::with_capacity(prev_pts.len());
    let mut at_ring = vec![None; prev.points.len()];
    for (i, sp) in prev.points.iter().enumerate() {
        if let Some(r) = sp.range() {
            at_ring[i] = Some(ring_of.len());
            ring_of.push(i);
            range.push(r);
        }
    }
    let (anchors, lines): (Vec<Point>, Vec<_>) = (0..prev_pts.len())
        .filter_map(|i| fit_local_line(&prev_pts, &ring_of, &at_ring, &range, i).map(|l| (prev_pts[i], l)))
        .unzip();
    if anchors.len() < params.min_points {
        return Err(OdometryError::DegenerateScan {
            prev: anchors.len(),
            cur: cur_pts.len(),
            min: params.min_points,
        });
    }
    let reference = Reference {
        grid: Grid::new(&anchors, 0.5),
        lines,
        search: params.gate,
    };
    let mut gate = params.gate;
    let base = Vector3::new(init_guess.x, init_guess.y, init_guess.yaw);
    let mut t = base;
    let mut eval = evaluate(&reference, &cur_pts, &t, gate);
    let k_max = (params.yaw_search / YAW_SEARCH_STEP).round() as i32;
    for k in (-k_max..=k_max).filter(|&k| k != 0) {
        let cand = base + Vector3::new(0.0, 0.0, k as f64 * YAW_SEARCH_STEP);
        let e = evaluate(&reference, &cur_pts, &cand, gate);
        if e.cost < eval.cost {
            eval = e;
            t = cand;
        }
    }
    let mut errors = vec![eval.cost];
    let mut iterations = 0;

    while iterations < params.max_iterations {
        iterations += 1;
        let step = gauss_newton_step(&eval, &t);
        let mut accepted = None;
        if let Some(step) = step {
            let mut scale = 1.0;
            for _ in 0..12 {
                let cand = t + step * scale;
                let e = evaluate(&reference, &cur_pts, &cand, gate);
                if e.cost < eval.cost {
                    accepted = Some((cand, e, (step * scale).norm()));
                    break;
                }
                scale *= 0.5;
            }
        }
        let converged = match accepted {
            Some((cand, e, norm)) => {
                t = cand;
                eval = e;
                errors.push(eval.cost);
                norm < params.tolerance.max(if gate > params.min_gate { 1e-4 } else { 0.0 })
            }
            None => true,
        };
        if converged {
            if gate <= params.min_gate {
                break;
            }
            gate = (gate * 0.5).max(params.min_gate);
            eval = evaluate(&reference, &cur_pts, &t, gate);
            if eval.cost < *errors.last().unwrap() {
                errors.push(eval.cost);
            }
        }
    }

    Ok(IcpResult {
        transform: Pose2D::new(t[0], t[1], t[2]),
        iterations,
        errors,
    })
}

/// Output of one odometry update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryEstimate {
    pub pose_est: Pose2D,
    /// Copied from the scan for evaluation; never read by estimation.
    pub pose_gt: Pose2D,
    pub step_index: usize,
    /// Set when scan matching failed and the constant-velocity prior was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OdometryConfig {
    pub icp: IcpParams,
    pub edges: EdgeParams,
}

/// Scan-to-scan odometry state for one run.
#[derive(Debug, Clone)]
pub struct Odometry {
    config: OdometryConfig,
    pose_est: Pose2D,
    velocity: Pose2D,
    prev: Option<LidarScan>,
    steps: usize,
}

impl Odometry {
    /// Start from a known pose (ground truth at step 0).
    pub fn new(start: Pose2D, config: OdometryConfig) -> Self {
        Odometry {
            config,
            pose_est: start,
            velocity: Pose2D::identity(),
            prev: None,
            steps: 0,
        }
    }

    pub fn pose(&self) -> Pose2D {
        self.pose_est
    }

    pub fn config(&self) -> &OdometryConfig {
        &self.config
    }

    /// Register a new scan. The first scan only seeds the reference.
    pub fn update(&mut self, scan: &LidarScan, filtering: bool) -> OdometryEstimate {
        let cur = if filtering { filter_dynamic(scan) } else { scan.clone() };
        let mut fallback = false;
        if let Some(prev) = &self.prev {
            let rel = match match_scans(prev, &cur, self.velocity, &self.config.icp) {
                Ok(r) => r.transform,
                Err(_) => {
                    fallback = true;
                    self.velocity
                }
            };
            self.pose_est = self.pose_est.compose(&rel);
            self.velocity = rel;
        }
        self.prev = Some(cur);
        let est = OdometryEstimate {
            pose_est: self.pose_est,
            pose_gt: scan.sensor_pose,
            step_index: self.steps,
            fallback,
        };
        self.steps += 1;
        est
    }

    /// Edge features of the most recent (possibly filtered) scan.
    pub fn edge_features(&self) -> EdgeFeatureSet {
        match &self.prev {
            Some(scan) => {
                let mut set = extract_edge_features(scan, &self.config.edges);
                set.centroid_y_world = compute_feature_centroid_y(&set, &self.pose_est).ok();
                set
            }
            None => EdgeFeatureSet::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lidar::{cast_scan, FeatureCloud, LidarConfig, Return, ScanPoint, WorldView};
    use crate::scene::{rasterize_regions, FeatureRegion};

    fn cfg0() -> LidarConfig {
        LidarConfig {
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    fn region(poly: &[[f64; 2]]) -> FeatureRegion {
        FeatureRegion {
            polyline: poly.to_vec(),
            point_density: 40.0,
        }
    }

    fn room() -> FeatureCloud {
        FeatureCloud::new(rasterize_regions(&[
            region(&[
                [-15.0, 8.0],
                [-5.0, 8.0],
                [-5.0, 11.0],
                [6.0, 11.0],
                [6.0, 9.0],
                [18.0, 9.0],
            ]),
            region(&[
                [-12.0, -9.0],
                [0.0, -9.0],
                [0.0, -13.0],
                [3.0, -13.0],
                [3.0, -7.0],
                [14.0, -7.0],
            ]),
            region(&[[20.0, -5.0], [20.0, 5.0]]),
            region(&[[-18.0, 4.0], [-18.0, -3.0], [-22.0, -3.0]]),
        ]))
    }

    fn scan_at(cloud: &FeatureCloud, pose: Pose2D) -> LidarScan {
        cast_scan(
            WorldView {
                features: cloud,
                traffic: &[],
            },
            pose,
            &cfg0(),
            1,
            0,
        )
    }

    #[test]
    fn straight_wall_interior_smooth_endpoints_edges() {
        let cloud = FeatureCloud::new(rasterize_regions(&[region(&[[-8.0, 5.0], [8.0, 5.0]])]));
        let scan = scan_at(&cloud, Pose2D::identity());
        let scores = smoothness_scores(&scan, 5);
        let hits: Vec<usize> = (0..scan.points.len()).filter(|&i| scores[i].is_some()).collect();
        assert!(hits.len() > 100);
        // Hits form one contiguous ring run; both ends and the interior.
        let first = *hits.first().unwrap();
        let last = *hits.last().unwrap();
        assert_eq!(last - first + 1, hits.len());
        let thr = EdgeParams::default().curvature_threshold;
        for &i in &hits[5..hits.len() - 5] {
            assert!(scores[i].unwrap() < thr, "interior ray {i} scored {:?}", scores[i]);
        }
        assert!(scores[first].unwrap() > thr);
        assert!(scores[last].unwrap() > thr);
    }

    #[test]
    fn all_miss_no_features() {
        let scan = scan_at(&FeatureCloud::default(), Pose2D::identity());
        assert!(extract_edge_features(&scan, &EdgeParams::default()).points.is_empty());
    }

    #[test]
    fn isolated_hit_is_edge() {
        let mut points: Vec<ScanPoint> = (0..64)
            .map(|i| ScanPoint {
                bearing: i as f64,
                ret: Return::Miss,
            })
            .collect();
        points[10].ret = Return::Hit {
            range: 4.0,
            label: crate::lidar::PointLabel::Static,
        };
        let scan = LidarScan {
            sensor_pose: Pose2D::identity(),
            points,
            step_index: 0,
        };
        assert_eq!(smoothness_scores(&scan, 5)[10], Some(1.0));
        assert_eq!(extract_edge_features(&scan, &EdgeParams::default()).points.len(), 1);
    }

    #[test]
    fn centroid_examples() {
        let set = |ys: &[f64]| EdgeFeatureSet {
            points: ys.iter().map(|&y| Point::new(1.0, y)).collect(),
            centroid_y_world: None,
        };
        let id = Pose2D::identity();
        assert_eq!(compute_feature_centroid_y(&set(&[3.0, 3.0, 3.0]), &id).unwrap(), 3.0);
        assert_eq!(compute_feature_centroid_y(&set(&[3.0, -3.0]), &id).unwrap(), 0.0);
        assert_eq!(compute_feature_centroid_y(&set(&[1.0, 5.0]), &id).unwrap(), 3.0);
        assert_eq!(
            compute_feature_centroid_y(&set(&[]), &id),
            Err(OdometryError::EmptyFeatures)
        );
        // Pose shifts the centroid into the RL frame.
        let shifted = Pose2D::new(0.0, 2.0, 0.0);
        assert_eq!(compute_feature_centroid_y(&set(&[1.0, 5.0]), &shifted).unwrap(), 5.0);
    }

    #[test]
    fn identical_scans_identity() {
        let cloud = room();
        let s = scan_at(&cloud, Pose2D::new(1.0, 0.5, 0.2));
        let r = match_scans(&s, &s, Pose2D::identity(), &IcpParams::default()).unwrap();
        // Fitted lines sit within the disc scallop depth of the hits.
        assert!(
            r.transform.x.abs() < 1e-4 && r.transform.y.abs() < 1e-4 && r.transform.yaw.abs() < 1e-4,
            "{r:?}"
        );
    }

    #[test]
    fn recovers_forward_half_meter() {
        let cloud = room();
        let prev = scan_at(&cloud, Pose2D::identity());
        let cur = scan_at(&cloud, Pose2D::new(0.5, 0.0, 0.0));
        let r = match_scans(&prev, &cur, Pose2D::identity(), &IcpParams::default()).unwrap();
        assert!((r.transform.x - 0.5).abs() < 1e-3, "{:?}", r.transform);
        assert!(r.transform.y.abs() < 1e-3, "{:?}", r);
        assert!(r.transform.yaw.abs() < 1e-3);
        for w in r.errors.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn too_few_points_is_degenerate() {
        let cloud = FeatureCloud::new(vec![Point::new(5.0, 0.0), Point::new(5.0, 3.0)]);
        let s = scan_at(&cloud, Pose2D::identity());
        assert!(matches!(
            match_scans(&s, &s, Pose2D::identity(), &IcpParams::default()),
            Err(OdometryError::DegenerateScan { .. })
        ));
    }

    #[test]
    fn odometry_first_step_is_start() {
        let cloud = room();
        let start = Pose2D::new(0.0, 1.0, 0.1);
        let mut odo = Odometry::new(start, OdometryConfig::default());
        let est = odo.update(&scan_at(&cloud, start), false);
        assert_eq!(est.pose_est, start);
        assert_eq!(est.pose_gt, start);
        assert_eq!(est.step_index, 0);
    }

    #[test]
    fn degenerate_scan_falls_back_to_velocity() {
        let cloud = room();
        let mut odo = Odometry::new(Pose2D::identity(), OdometryConfig::default());
        odo.update(&scan_at(&cloud, Pose2D::identity()), false);
        odo.update(&scan_at(&cloud, Pose2D::new(0.5, 0.0, 0.0)), false);
        let empty = scan_at(&FeatureCloud::default(), Pose2D::new(1.0, 0.0, 0.0));
        let est = odo.update(&empty, false);
        assert!(est.fallback);
        assert!((est.pose_est.x - 1.0).abs() < 2e-3);
    }
}
