//! Planar 360° LIDAR.
//!
//! Feature points are discs of radius [`FEATURE_RADIUS`]; traffic vehicles are
//! axis-aligned square boxes. Every ray reports its nearest hit within range,
//! so traffic occludes whatever sits behind it.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{wrap_angle, Point, Pose2D, TrafficState};

/// Radius given to each rasterised feature point.
pub const FEATURE_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub n_rays: usize,
    pub max_range: f64,
    /// Std of additive Gaussian range noise, meters.
    pub noise_sigma: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            n_rays: 720,
            max_range: 50.0,
            noise_sigma: 0.02,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LidarError {
    #[error("invalid lidar config: {0}")]
    Config(&'static str),
    #[error("scan log line {line}: {message}")]
    Log { line: usize, message: String },
}

impl LidarConfig {
    pub fn with_range(max_range: f64) -> Self {
        LidarConfig {
            max_range,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), LidarError> {
        if self.n_rays < 8 {
            return Err(LidarError::Config("n_rays must be >= 8"));
        }
        if !(self.max_range > 0.0) {
            return Err(LidarError::Config("max_range must be > 0"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(LidarError::Config("noise_sigma must be >= 0"));
        }
        Ok(())
    }

    pub fn resolution(&self) -> f64 {
        TAU / self.n_rays as f64
    }

    /// Sensor-frame bearing of ray `i`, wrapped into (−π, π].
    pub fn bearing(&self, i: usize) -> f64 {
        wrap_angle(i as f64 * self.resolution())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointLabel {
    Static,
    Traffic(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Return {
    Miss,
    Hit { range: f64, label: PointLabel },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub bearing: f64,
    pub ret: Return,
}

impl ScanPoint {
    pub fn range(&self) -> Option<f64> {
        match self.ret {
            Return::Hit { range, .. } => Some(range),
            Return::Miss => None,
        }
    }

    pub fn label(&self) -> Option<PointLabel> {
        match self.ret {
            Return::Hit { label, .. } => Some(label),
            Return::Miss => None,
        }
    }

    /// Cartesian position in the sensor frame.
    pub fn position(&self) -> Option<Point> {
        self.range()
            .map(|r| Point::new(r * self.bearing.cos(), r * self.bearing.sin()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    /// Ground-truth sensor pose. Only the simulator and evaluation read it.
    pub sensor_pose: Pose2D,
    pub points: Vec<ScanPoint>,
    pub step_index: usize,
}

impl LidarScan {
    pub fn hit_count(&self) -> usize {
        self.points.iter().filter(|p| p.range().is_some()).count()
    }

    pub fn count_label(&self, pred: impl Fn(PointLabel) -> bool) -> usize {
        self.points.iter().filter(|p| p.label().is_some_and(&pred)).count()
    }

    /// Hit positions in the sensor frame, in ring order.
    pub fn hit_points(&self) -> Vec<Point> {
        self.points.iter().filter_map(ScanPoint::position).collect()
    }
}

/// Feature points sorted by x for fast range culling along the corridor.
#[derive(Debug, Clone, Default)]
pub struct FeatureCloud {
    points: Vec<Point>,
}

impl FeatureCloud {
    pub fn new(mut points: Vec<Point>) -> Self {
        points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        FeatureCloud { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn x_window(&self, lo: f64, hi: f64) -> &[Point] {
        let a = self.points.partition_point(|p| p.x < lo);
        let b = self.points.partition_point(|p| p.x <= hi);
        &self.points[a..b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficBox {
    pub id: u32,
    pub center: Point,
    pub half_extent: f64,
}

impl TrafficBox {
    pub fn from_state(state: &TrafficState) -> Vec<TrafficBox> {
        state
            .present()
            .map(|t| {
                let p = t.pose();
                TrafficBox {
                    id: t.id,
                    center: Point::new(p.x, p.y),
                    half_extent: t.half_extent,
                }
            })
            .collect()
    }

    /// Entry distance of the ray `origin + t·dir` into the box, if any.
    fn ray_entry(&self, origin: &Point, dir: (f64, f64)) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for (o, d, c) in [(origin.x, dir.0, self.center.x), (origin.y, dir.1, self.center.y)] {
            let lo = c - self.half_extent;
            let hi = c + self.half_extent;
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let mut t1 = (lo - o) / d;
                let mut t2 = (hi - o) / d;
                if t1 > t2 {
                    std::mem::swap(&mut t1, &mut t2);
                }
                t_near = t_near.max(t1);
                t_far = t_far.min(t2);
            }
        }
        if t_near <= t_far && t_near > 0.0 {
            Some(t_near)
        } else {
            None
        }
    }
}

/// What a scan can see.
#[derive(Debug, Clone, Copy)]
pub struct WorldView<'a> {
    pub features: &'a FeatureCloud,
    pub traffic: &'a [TrafficBox],
}

/// Cast one revolution from `sensor_pose`.
///
/// Ray `i` has bearing `i·2π/n_rays` in the sensor frame. Noise is drawn once
/// per ray in ring order, so two scans with the same seed share their noise
/// sequence regardless of what they hit.
pub fn cast_scan(
    world: WorldView<'_>,
    sensor_pose: Pose2D,
    config: &LidarConfig,
    seed: u64,
    step_index: usize,
) -> LidarScan {
    let n = config.n_rays;
    let res = config.resolution();
    let mut best = vec![f64::INFINITY; n];
    let mut label = vec![PointLabel::Static; n];
    let origin = sensor_pose.position();
    let r = FEATURE_RADIUS;
    let reach = config.max_range + r;

    for p in world.features.x_window(origin.x - reach, origin.x + reach) {
        let dx = p.x - origin.x;
        let dy = p.y - origin.y;
        let dist2 = dx * dx + dy * dy;
        if dist2 > reach * reach || dist2 <= r * r {
            continue;
        }
        let dist = dist2.sqrt();
        let rel = wrap_angle(dy.atan2(dx) - sensor_pose.yaw);
        let half = (r / dist).asin();
        let lo = ((rel - half) / res).ceil() as i64;
        let hi = ((rel + half) / res).floor() as i64;
        for k in lo..=hi {
            let i = k.rem_euclid(n as i64) as usize;
            let (s, c) = (sensor_pose.yaw + i as f64 * res).sin_cos();
            let t = c * dx + s * dy;
            let perp2 = dist2 - t * t;
            if t <= 0.0 || perp2 > r * r {
                continue;
            }
            let hit = t - (r * r - perp2).sqrt();
            if hit <= config.max_range && hit < best[i] {
                best[i] = hit;
                label[i] = PointLabel::Static;
            }
        }
    }

    for b in world.traffic {
        let reach_box = config.max_range + b.half_extent * std::f64::consts::SQRT_2;
        if (b.center - origin).norm() > reach_box {
            continue;
        }
        for (i, slot) in best.iter_mut().enumerate() {
            let (s, c) = (sensor_pose.yaw + i as f64 * res).sin_cos();
            if let Some(t) = b.ray_entry(&origin, (c, s)) {
                if t <= config.max_range && t < *slot {
                    *slot = t;
                    label[i] = PointLabel::Traffic(b.id);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if config.noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.noise_sigma).expect("sigma checked non-negative"))
    } else {
        None
    };
    let points = (0..n)
        .map(|i| {
            let eps = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            let ret = if best[i].is_finite() {
                Return::Hit {
                    range: (best[i] + eps).clamp(0.0, config.max_range),
                    label: label[i],
                }
            } else {
                Return::Miss
            };
            ScanPoint {
                bearing: config.bearing(i),
                ret,
            }
        })
        .collect();

    LidarScan {
        sensor_pose,
        points,
        step_index,
    }
}

/// Drop every point that came from a traffic vehicle.
pub fn filter_dynamic(scan: &LidarScan) -> LidarScan {
    let points = scan
        .points
        .iter()
        .map(|p| match p.ret {
            Return::Hit {
                label: PointLabel::Traffic(_),
                ..
            } => ScanPoint {
                bearing: p.bearing,
                ret: Return::Miss,
            },
            _ => *p,
        })
        .collect();
    LidarScan {
        sensor_pose: scan.sensor_pose,
        points,
        step_index: scan.step_index,
    }
}

/// Row-per-point scan log: `step,ray,bearing,range,label`.
///
/// `label` is `static`, `traffic:<id>` or `miss`; `range` is empty on a miss.
pub fn write_scan_csv<W: Write>(out: W, scans: &[LidarScan]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "ray", "bearing", "range", "label"])?;
    for scan in scans {
        for (i, p) in scan.points.iter().enumerate() {
            let (range, label) = match p.ret {
                Return::Miss => (String::new(), "miss".to_string()),
                Return::Hit { range, label } => (
                    range.to_string(),
                    match label {
                        PointLabel::Static => "static".to_string(),
                        PointLabel::Traffic(id) => format!("traffic:{id}"),
                    },
                ),
            };
            w.write_record([
                scan.step_index.to_string(),
                i.to_string(),
                p.bearing.to_string(),
                range,
                label,
            ])?;
        }
    }
    w.flush()
}

/// Parse a scan log back into scans. Sensor poses are not logged and come
/// back as identity.
pub fn read_scan_csv<R: Read>(input: R) -> Result<Vec<LidarScan>, LidarError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut scans: Vec<LidarScan> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let err = |message: String| LidarError::Log { line, message };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", rec.len())));
        }
        let step: usize = rec[0].parse().map_err(|_| err("bad step".into()))?;
        let bearing: f64 = rec[2].parse().map_err(|_| err("bad bearing".into()))?;
        let ret = match &rec[4] {
            "miss" => Return::Miss,
            lbl => {
                let range: f64 = rec[3].parse().map_err(|_| err("bad range".into()))?;
                let label = if lbl == "static" {
                    PointLabel::Static
                } else if let Some(id) = lbl.strip_prefix("traffic:") {
                    PointLabel::Traffic(id.parse().map_err(|_| err("bad traffic id".into()))?)
                } else {
                    return Err(err(format!("unknown label {lbl:?}")));
                };
                Return::Hit { range, label }
            }
        };
        if scans.last().is_none_or(|s| s.step_index != step) {
            scans.push(LidarScan {
                sensor_pose: Pose2D::identity(),
                points: Vec::new(),
                step_index: step,
            });
        }
        scans.last_mut().unwrap().points.push(ScanPoint { bearing, ret });
    }
    Ok(scans)
}
