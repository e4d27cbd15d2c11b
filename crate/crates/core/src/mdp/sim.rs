//! Full evaluation simulator: ground-truth vehicle, traffic, LIDAR and
//! odometry, driven by the tracking loop through [`TrackHooks`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{build_state, RewardConfig, Snapshot, StateVector, TrafficObs};
use crate::control::stanley::bicycle_step;
use crate::control::{
    track_path, ControlError, HookFlow, SplinePath, StepCommand, TrackConfig, TrackEnd, TrackHooks, VehicleState,
};
use crate::lidar::{cast_scan, FeatureCloud, LidarConfig, TrafficBox, WorldView};
use crate::odometry::{Odometry, OdometryConfig};
use crate::scene::{advance_traffic, Pose2D, Scenario, TrafficState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub lidar: LidarConfig,
    pub odometry: OdometryConfig,
    /// Drop traffic returns before scan matching.
    pub filtering: bool,
    pub track: TrackConfig,
    pub reward: RewardConfig,
    /// Whole-run time budget, seconds.
    pub max_time: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            lidar: LidarConfig::default(),
            odometry: OdometryConfig::default(),
            filtering: false,
            track: TrackConfig::default(),
            reward: RewardConfig::default(),
            max_time: 400.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalStatus {
    Running,
    Goal,
    Collision,
    Breach,
    Diverged,
    Timeout,
}

/// Estimated and true pose at one perception tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseLogEntry {
    pub step: usize,
    pub t: f64,
    pub est: Pose2D,
    pub gt: Pose2D,
    /// Odometry fell back to the motion prior on this tick.
    pub fallback: bool,
}

/// One control step of the executed trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub gt: Pose2D,
    /// Pose the controller used: the odometry estimate on scan rows, dead
    /// reckoning in between.
    pub est: Pose2D,
    pub steer: f64,
    pub speed: f64,
    /// A scan was matched at the end of this step.
    pub scan: bool,
}

#[derive(Debug, Clone)]
pub struct EvalEnv {
    scenario: Arc<Scenario>,
    cloud: Arc<FeatureCloud>,
    config: EvalConfig,
    seed: u64,
    traffic: TrafficState,
    truth: VehicleState,
    odometry: Odometry,
    control_pose: Pose2D,
    centroid_y: f64,
    ticks: u64,
    scans: usize,
    status: EvalStatus,
    pose_log: Vec<PoseLogEntry>,
    trajectory: Vec<TrajectoryRow>,
}

impl EvalEnv {
    /// Place the ego at the scenario start and take the first scan.
    pub fn new(scenario: Arc<Scenario>, cloud: Arc<FeatureCloud>, mut config: EvalConfig, seed: u64) -> Self {
        config.lidar.max_range = scenario.lidar_range;
        let start = scenario.ego_start;
        let mut env = EvalEnv {
            traffic: TrafficState::from_scenario(&scenario),
            truth: VehicleState::new(start, 0.0),
            odometry: Odometry::new(start, config.odometry),
            control_pose: start,
            centroid_y: scenario.road.center(),
            ticks: 0,
            scans: 0,
            status: EvalStatus::Running,
            pose_log: Vec::new(),
            trajectory: Vec::new(),
            scenario,
            cloud,
            config,
            seed,
        };
        env.perceive();
        env
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn status(&self) -> EvalStatus {
        self.status
    }

    pub fn is_done(&self) -> bool {
        self.status != EvalStatus::Running
    }

    /// End the run from outside the tracking loop.
    pub fn abort(&mut self, status: EvalStatus) {
        if self.status == EvalStatus::Running {
            self.status = status;
        }
    }

    pub fn truth(&self) -> &VehicleState {
        &self.truth
    }

    /// Pose the controller works from: last odometry estimate advanced by
    /// the commanded motion since.
    pub fn estimated_pose(&self) -> Pose2D {
        self.control_pose
    }

    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.config.track.dt()
    }

    pub fn pose_log(&self) -> &[PoseLogEntry] {
        &self.pose_log
    }

    /// Every control step, starting with the initial scan at t = 0.
    pub fn trajectory(&self) -> &[TrajectoryRow] {
        &self.trajectory
    }

    pub fn traffic(&self) -> &TrafficState {
        &self.traffic
    }

    /// Latest feature centroid y; held over frames without edge features.
    pub fn centroid_y(&self) -> f64 {
        self.centroid_y
    }

    /// Vehicles within LIDAR range of the ego.
    pub fn visible_traffic(&self) -> Vec<TrafficObs> {
        let ego = self.truth.pose;
        self.traffic
            .present()
            .filter_map(|t| {
                let p = t.pose();
                (p.distance(&ego) <= self.scenario.lidar_range).then_some(TrafficObs {
                    x: p.x,
                    y: p.y,
                    speed: t.speed,
                })
            })
            .collect()
    }

    /// RL-frame state at the estimated pose.
    pub fn build_state(&self) -> StateVector {
        let traffic = self.visible_traffic();
        build_state(&Snapshot {
            ego: self.control_pose,
            centroid_y: self.centroid_y,
            road: &self.scenario.road,
            traffic: &traffic,
            n_slots: self.scenario.max_traffic_slots,
        })
    }

    /// Track `path` through the simulator. Divergence ends the run.
    pub fn follow(&mut self, path: &SplinePath, speed: f64) -> TrackEnd {
        if self.is_done() {
            return TrackEnd::Stopped;
        }
        let mut vehicle = self.truth;
        let track = self.config.track;
        let result = track_path(&mut vehicle, path, speed, &track, self);
        self.truth = vehicle;
        match result {
            Ok(out) => {
                if out.end == TrackEnd::Timeout && self.status == EvalStatus::Running {
                    self.status = EvalStatus::Timeout;
                }
                out.end
            }
            Err(ControlError::TrackingDiverged { .. }) | Err(ControlError::Spline(_)) => {
                self.status = EvalStatus::Diverged;
                TrackEnd::Stopped
            }
        }
    }

    fn perceive(&mut self) {
        let boxes = TrafficBox::from_state(&self.traffic);
        let world = WorldView {
            features: &self.cloud,
            traffic: &boxes,
        };
        let scan = cast_scan(world, self.truth.pose, &self.config.lidar, self.seed, self.scans);
        let est = self.odometry.update(&scan, self.config.filtering);
        if let Some(y) = self.odometry.edge_features().centroid_y_world {
            self.centroid_y = y;
        }
        self.control_pose = est.pose_est;
        self.pose_log.push(PoseLogEntry {
            step: self.scans,
            t: self.time(),
            est: est.pose_est,
            gt: est.pose_gt,
            fallback: est.fallback,
        });
        self.scans += 1;
        let now = self.time();
        match self.trajectory.last_mut() {
            Some(row) if row.t == now => {
                row.est = est.pose_est;
                row.scan = true;
            }
            _ => self.trajectory.push(TrajectoryRow {
                t: now,
                gt: self.truth.pose,
                est: est.pose_est,
                steer: 0.0,
                speed: self.truth.speed,
                scan: true,
            }),
        }
        if est.pose_est.x >= self.scenario.road.length {
            self.status = EvalStatus::Goal;
        }
    }
}

impl TrackHooks for EvalEnv {
    fn control_pose(&mut self, _truth: &Pose2D) -> Pose2D {
        self.control_pose
    }

    fn ticks_elapsed(&self) -> u64 {
        self.ticks
    }

    fn on_control_step(&mut self, vehicle: &VehicleState, cmd: &StepCommand) -> HookFlow {
        self.truth = *vehicle;
        self.ticks += 1;
        self.control_pose = bicycle_step(&self.control_pose, cmd.speed, cmd.steer, vehicle.wheelbase, cmd.dt);
        self.trajectory.push(TrajectoryRow {
            t: self.time(),
            gt: vehicle.pose,
            est: self.control_pose,
            steer: cmd.steer,
            speed: cmd.speed,
            scan: false,
        });
        self.traffic = advance_traffic(&self.traffic, cmd.dt);
        let ego = vehicle.pose;
        let radius = self.config.reward.collision_radius;
        let road = &self.scenario.road;
        if self.traffic.present().any(|t| t.pose().distance(&ego) < radius) {
            self.status = EvalStatus::Collision;
        } else if !road.contains_y(ego.y) {
            self.status = EvalStatus::Breach;
        } else if self.time() >= self.config.max_time {
            self.status = EvalStatus::Timeout;
        }
        if self.is_done() {
            HookFlow::Stop
        } else {
            HookFlow::Continue
        }
    }

    fn on_perception(&mut self, vehicle: &VehicleState) -> HookFlow {
        self.truth = *vehicle;
        self.perceive();
        if self.is_done() {
            HookFlow::Stop
        } else {
            HookFlow::Continue
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{fit_spline, WaypointPath};
    use crate::scene::{parse_scenario, rasterize_features, Point};

    const SCENE: &str = r#"
schema_version = 1
name = "strip"
lidar_range = 50.0
seed = 3

[road]
length = 60.0
edge_l = -7.5
edge_r = 7.5

[ego_start]
x = 0.0
y = 0.0

[[features]]
polyline = [[-20.0, 10.0], [0.0, 10.0], [0.0, 12.0], [20.0, 12.0], [20.0, 10.0], [80.0, 10.0]]
point_density = 20.0

[[features]]
polyline = [[-20.0, -10.0], [80.0, -10.0]]
point_density = 20.0
"#;

    fn env(filtering: bool) -> EvalEnv {
        let s = parse_scenario(SCENE, std::path::Path::new("strip.toml")).unwrap();
        let cloud = Arc::new(FeatureCloud::new(rasterize_features(&s)));
        let cfg = EvalConfig {
            filtering,
            ..Default::default()
        };
        EvalEnv::new(Arc::new(s), cloud, cfg, 11)
    }

    #[test]
    fn first_scan_is_ground_truth() {
        let e = env(false);
        assert_eq!(e.pose_log().len(), 1);
        assert_eq!(e.pose_log()[0].est, e.pose_log()[0].gt);
        assert_eq!(e.build_state().x_e, 0.0);
    }

    #[test]
    fn drives_to_goal() {
        let mut e = env(false);
        let path = fit_spline(&WaypointPath::new(vec![Point::new(0.0, 0.0), Point::new(80.0, 0.0)])).unwrap();
        e.follow(&path, 5.0);
        assert_eq!(e.status(), EvalStatus::Goal);
        let last = e.pose_log().last().unwrap();
        assert!(last.est.x >= 60.0);
        assert!(last.est.distance(&last.gt) < 0.5, "{last:?}");
        // 2 Hz perception.
        let dt: Vec<f64> = e.pose_log().windows(2).map(|w| w[1].t - w[0].t).collect();
        assert!(dt.iter().all(|d| (d - 0.5).abs() < 1e-9));
    }

    #[test]
    fn filtering_is_noop_without_traffic() {
        let path = fit_spline(&WaypointPath::new(vec![Point::new(0.0, 0.0), Point::new(80.0, 2.0)])).unwrap();
        let mut a = env(false);
        let mut b = env(true);
        a.follow(&path, 4.0);
        b.follow(&path, 4.0);
        assert_eq!(a.pose_log(), b.pose_log());
    }
}
