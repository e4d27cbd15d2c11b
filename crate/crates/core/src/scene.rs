//! World model: a straight road corridor in the RL frame (X along the road,
//! Y across it), feature-rich polylines beside it, and constant-velocity
//! traffic.
//!
//! Scenarios are TOML files; see `scenarios/README.md` for the schema.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Point2<f64>;

/// Current scenario schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Default number of traffic slots exposed in the state vector.
pub const DEFAULT_MAX_TRAFFIC: usize = 2;

/// Wrap an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawPose")]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Deserialize)]
struct RawPose {
    x: f64,
    y: f64,
    #[serde(default)]
    yaw: f64,
}

impl From<RawPose> for Pose2D {
    fn from(r: RawPose) -> Self {
        Pose2D::new(r.x, r.y, r.yaw)
    }
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2D {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Pose2D::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Map a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, p: &Point) -> Point {
        let (s, c) = self.yaw.sin_cos();
        Point::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Map a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: &Point) -> Point {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Point::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// `self ⊕ rel`: apply a transform expressed in this pose's frame.
    pub fn compose(&self, rel: &Pose2D) -> Pose2D {
        let p = self.transform_point(&Point::new(rel.x, rel.y));
        Pose2D::new(p.x, p.y, self.yaw + rel.yaw)
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.yaw.sin_cos();
        Pose2D::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.yaw)
    }

    /// Relative transform taking `self` to `other`, in `self`'s frame.
    pub fn between(&self, other: &Pose2D) -> Pose2D {
        self.inverse().compose(other)
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for Pose2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}, {:.4} rad)", self.x, self.y, self.yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    /// Goal line sits at x = length.
    pub length: f64,
    pub edge_l: f64,
    pub edge_r: f64,
}

impl RoadGeometry {
    pub fn width(&self) -> f64 {
        self.edge_r - self.edge_l
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.edge_l + self.edge_r)
    }

    pub fn contains_y(&self, y: f64) -> bool {
        self.edge_l <= y && y <= self.edge_r
    }

    /// Map y into [−1, 1] with the road edges as endpoints (not clipped).
    pub fn normalize_y(&self, y: f64) -> f64 {
        2.0 * (y - self.edge_l) / (self.edge_r - self.edge_l) - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRegion {
    pub polyline: Vec<[f64; 2]>,
    /// Points per meter of polyline.
    pub point_density: f64,
}

impl FeatureRegion {
    pub fn arc_length(&self) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    /// Number of points [`rasterize_features`] emits for this region.
    pub fn point_count(&self) -> usize {
        let raw = self.arc_length() * self.point_density;
        // Absorb rounding in the arc length so that 10 m at 2/m is 20, not 21.
        (raw - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficVehicle {
    pub id: u32,
    pub pose: Pose2D,
    /// Speed along +X, m/s.
    pub speed: f64,
    /// Half-size of the axis-aligned square footprint.
    pub footprint_half_extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub road: RoadGeometry,
    #[serde(default)]
    pub features: Vec<FeatureRegion>,
    #[serde(default)]
    pub traffic: Vec<TrafficVehicle>,
    pub ego_start: Pose2D,
    pub lidar_range: f64,
    pub seed: u64,
    #[serde(default = "default_max_traffic")]
    pub max_traffic_slots: usize,
}

fn default_max_traffic() -> usize {
    DEFAULT_MAX_TRAFFIC
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario field `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl SceneError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Name of the offending field for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            SceneError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}

impl Scenario {
    pub fn is_static(&self) -> bool {
        self.traffic.is_empty()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SceneError::invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        let road = &self.road;
        if !(road.length > 0.0) {
            return Err(SceneError::invalid("road.length", "must be > 0"));
        }
        if !(road.edge_l < road.edge_r) {
            return Err(SceneError::invalid(
                "road.edge_l",
                format!("edge_l ({}) must be < edge_r ({})", road.edge_l, road.edge_r),
            ));
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.polyline.len() < 2 {
                return Err(SceneError::invalid(
                    format!("features[{i}].polyline"),
                    "needs at least 2 points",
                ));
            }
            if !(f.point_density > 0.0) {
                return Err(SceneError::invalid(
                    format!("features[{i}].point_density"),
                    "must be > 0",
                ));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, v) in self.traffic.iter().enumerate() {
            if !(v.speed >= 0.0) {
                return Err(SceneError::invalid(format!("traffic[{i}].speed"), "must be >= 0"));
            }
            if !(v.footprint_half_extent > 0.0) {
                return Err(SceneError::invalid(
                    format!("traffic[{i}].footprint_half_extent"),
                    "must be > 0",
                ));
            }
            if !road.contains_y(v.pose.y) {
                return Err(SceneError::invalid(
                    format!("traffic[{i}].pose"),
                    "vehicle starts outside the road limits",
                ));
            }
            if !ids.insert(v.id) {
                return Err(SceneError::invalid(format!("traffic[{i}].id"), "duplicate id"));
            }
        }
        if self.ego_start.x != 0.0 {
            return Err(SceneError::invalid("ego_start.x", "ego must start at x = 0"));
        }
        if !road.contains_y(self.ego_start.y) {
            return Err(SceneError::invalid("ego_start.y", "ego starts outside the road limits"));
        }
        if !(self.lidar_range > 0.0) {
            return Err(SceneError::invalid("lidar_range", "must be > 0"));
        }
        if self.max_traffic_slots == 0 {
            return Err(SceneError::invalid("max_traffic_slots", "must be >= 1"));
        }
        Ok(())
    }
}

pub fn parse_scenario(text: &str, origin: &Path) -> Result<Scenario, SceneError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| SceneError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

/// Load every `*.toml` scenario in a directory, sorted by file name.
pub fn load_scenario_dir(dir: impl AsRef<Path>) -> Result<Vec<Scenario>, SceneError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| SceneError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(load_scenario).collect()
}

/// One traffic vehicle as it evolves through an episode.
///
/// Position is kept as start + speed·elapsed so that splitting an advance
/// into pieces does not accumulate rounding from a fresh start.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTrack {
    pub id: u32,
    pub start: Pose2D,
    pub speed: f64,
    pub half_extent: f64,
    pub elapsed: f64,
    pub present: bool,
}

impl TrafficTrack {
    pub fn pose(&self) -> Pose2D {
        Pose2D {
            x: self.start.x + self.speed * self.elapsed,
            ..self.start
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    pub road_length: f64,
    pub tracks: Vec<TrafficTrack>,
}

impl TrafficState {
    pub fn from_scenario(s: &Scenario) -> Self {
        TrafficState {
            road_length: s.road.length,
            tracks: s
                .traffic
                .iter()
                .map(|v| TrafficTrack {
                    id: v.id,
                    start: v.pose,
                    speed: v.speed,
                    half_extent: v.footprint_half_extent,
                    elapsed: 0.0,
                    present: v.pose.x <= s.road.length,
                })
                .collect(),
        }
    }

    pub fn present(&self) -> impl Iterator<Item = &TrafficTrack> {
        self.tracks.iter().filter(|t| t.present)
    }
}

/// Move every vehicle forward by speed·dt. Vehicles past the goal line drop
/// out of the scene for good.
pub fn advance_traffic(state: &TrafficState, dt: f64) -> TrafficState {
    assert!(dt > 0.0, "advance_traffic needs dt > 0, got {dt}");
    let mut next = state.clone();
    for t in &mut next.tracks {
        t.elapsed += dt;
        if t.present && t.pose().x > state.road_length {
            t.present = false;
        }
    }
    next
}

/// Sample every feature polyline at its point density. Samples sit at the
/// midpoints of `count` equal arc-length cells, so reversing a polyline only
/// reorders the output.
pub fn rasterize_features(scenario: &Scenario) -> Vec<Point> {
    rasterize_regions(&scenario.features)
}

pub fn rasterize_regions(regions: &[FeatureRegion]) -> Vec<Point> {
    let mut out = Vec::new();
    for region in regions {
        let total = region.arc_length();
        let count = region.point_count();
        if count == 0 {
            continue;
        }
        let step = total / count as f64;
        let pts: Vec<Point> = region.polyline.iter().map(|p| Point::new(p[0], p[1])).collect();
        let mut seg = 0;
        let mut seg_start = 0.0;
        for i in 0..count {
            let s = (i as f64 + 0.5) * step;
            loop {
                let len = (pts[seg + 1] - pts[seg]).norm();
                if s <= seg_start + len || seg + 2 >= pts.len() {
                    let t = if len > 0.0 {
                        ((s - seg_start) / len).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let d: Vector2<f64> = pts[seg + 1] - pts[seg];
                    out.push(pts[seg] + d * t);
                    break;
                }
                seg_start += len;
                seg += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(polyline: Vec<[f64; 2]>, density: f64) -> FeatureRegion {
        FeatureRegion {
            polyline,
            point_density: density,
        }
    }

    fn track(x: f64, speed: f64) -> TrafficState {
        TrafficState {
            road_length: 100.0,
            tracks: vec![TrafficTrack {
                id: 1,
                start: Pose2D::new(x, 2.0, 0.0),
                speed,
                half_extent: 1.5,
                elapsed: 0.0,
                present: true,
            }],
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(2.0 * PI)).abs() < 1e-15);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn pose_compose_between_roundtrip() {
        let a = Pose2D::new(1.0, -2.0, 0.7);
        let b = Pose2D::new(-3.0, 4.0, -2.9);
        let rel = a.between(&b);
        let back = a.compose(&rel);
        assert!((back.x - b.x).abs() < 1e-12);
        assert!((back.y - b.y).abs() < 1e-12);
        assert!(wrap_angle(back.yaw - b.yaw).abs() < 1e-12);
        let p = Point::new(0.3, 8.0);
        let q = a.inverse_transform_point(&a.transform_point(&p));
        assert!((p - q).norm() < 1e-12);
    }

    #[test]
    fn advance_moves_along_x() {
        let s = advance_traffic(&track(10.0, 5.0), 1.0);
        let p = s.tracks[0].pose();
        assert_eq!(p.x, 15.0);
        assert_eq!(p.y, 2.0);
        assert_eq!(p.yaw, 0.0);
    }

    #[test]
    fn advance_zero_speed_is_identity_pose() {
        let s0 = track(10.0, 0.0);
        let s = advance_traffic(&s0, 3.0);
        assert_eq!(s.tracks[0].pose(), s0.tracks[0].pose());
        assert!(s.tracks[0].present);
    }

    #[test]
    fn advance_past_goal_marks_absent() {
        let s = advance_traffic(&track(99.0, 5.0), 1.0);
        assert!(!s.tracks[0].present);
        // Stays absent.
        let s = advance_traffic(&s, 1.0);
        assert!(!s.tracks[0].present);
    }

    #[test]
    fn rasterize_counts() {
        assert_eq!(
            rasterize_regions(&[region(vec![[0.0, 0.0], [10.0, 0.0]], 2.0)]).len(),
            20
        );
        assert_eq!(rasterize_regions(&[region(vec![[0.0, 0.0], [1.0, 0.0]], 1.0)]).len(), 1);
        assert!(rasterize_regions(&[]).is_empty());
        // Multi-segment: 3 + 4 = 7 m at 3/m.
        let pts = rasterize_regions(&[region(vec![[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]], 3.0)]);
        assert_eq!(pts.len(), 21);
        for p in &pts {
            let on_first = p.y.abs() < 1e-12 && (0.0..=3.0).contains(&p.x);
            let on_second = (p.x - 3.0).abs() < 1e-12 && (0.0..=4.0).contains(&p.y);
            assert!(on_first || on_second, "{p:?} off polyline");
        }
    }

    const SCENE: &str = r#"
schema_version = 1
name = "t"
lidar_range = 50.0
seed = 3

[road]
length = 100.0
edge_l = -7.5
edge_r = 7.5

[ego_start]
x = 0.0
y = 0.0

[[features]]
point_density = 2.0
polyline = [[0.0, 9.0], [10.0, 9.0]]

[[traffic]]
id = 1
speed = 4.0
footprint_half_extent = 1.5
pose = { x = 10.0, y = -4.0 }
"#;

    #[test]
    fn parse_and_validate() {
        let s = parse_scenario(SCENE, Path::new("inline")).unwrap();
        assert_eq!(s.max_traffic_slots, 2);
        assert_eq!(s.traffic.len(), 1);
        assert_eq!(rasterize_features(&s).len(), 20);
    }

    #[test]
    fn edge_order_violation_names_edge_l() {
        let bad = SCENE.replace("edge_l = -7.5", "edge_l = 8.0");
        let err = parse_scenario(&bad, Path::new("inline")).unwrap_err();
        assert_eq!(err.field(), Some("road.edge_l"));
        assert!(err.to_string().contains("edge_l"));
    }

    #[test]
    fn missing_field_is_parse_error_naming_it() {
        let bad = SCENE.replace("lidar_range = 50.0\n", "");
        let err = parse_scenario(&bad, Path::new("inline")).unwrap_err();
        assert!(matches!(err, SceneError::Parse { .. }));
        assert!(err.to_string().contains("lidar_range"), "{err}");
    }

    #[test]
    fn traffic_off_road_rejected() {
        let bad = SCENE.replace("y = -4.0", "y = -9.0");
        let err = parse_scenario(&bad, Path::new("inline")).unwrap_err();
        assert_eq!(err.field(), Some("traffic[0].pose"));
    }

    #[test]
    fn ego_must_start_at_zero() {
        let bad = SCENE.replace("[ego_start]\nx = 0.0", "[ego_start]\nx = 1.0");
        let err = parse_scenario(&bad, Path::new("inline")).unwrap_err();
        assert_eq!(err.field(), Some("ego_start.x"));
    }
}
