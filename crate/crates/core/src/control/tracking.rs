//! Closed-loop path following at 20 Hz with perception hooks at 2 Hz.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::spline::SplinePath;
use super::stanley::{stanley_steer_from, VehicleState};
use super::ControlError;
use crate::scene::Pose2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub control_hz: f64,
    /// Control steps per perception tick.
    pub perception_every: u64,
    pub gain: f64,
    /// Proportional speed gain, 1/s.
    pub speed_gain: f64,
    /// Acceleration clamp, m/s².
    pub max_accel: f64,
    pub diverge_limit: f64,
    /// Give up after this many seconds of tracking a single path.
    pub max_time: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            control_hz: 20.0,
            perception_every: 10,
            gain: 0.5,
            speed_gain: 1.0,
            max_accel: 2.0,
            diverge_limit: 5.0,
            max_time: 600.0,
        }
    }
}

impl TrackConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookFlow {
    Continue,
    Stop,
}

/// Callbacks from the tracking loop into a surrounding simulation.
pub trait TrackHooks {
    /// Pose the controller believes the vehicle has.
    fn control_pose(&mut self, truth: &Pose2D) -> Pose2D {
        *truth
    }

    /// Control steps already executed before this call to `track_path`.
    /// Keeps the perception clock continuous across replans.
    fn ticks_elapsed(&self) -> u64 {
        0
    }

    /// After every control step; `vehicle` is the post-step state.
    fn on_control_step(&mut self, _vehicle: &VehicleState, _command: &StepCommand) -> HookFlow {
        HookFlow::Continue
    }

    /// Every `perception_every` control steps.
    fn on_perception(&mut self, _vehicle: &VehicleState) -> HookFlow {
        HookFlow::Continue
    }
}

pub struct NoHooks;

impl TrackHooks for NoHooks {}

/// What was applied over one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCommand {
    pub steer: f64,
    /// Speed the pose was advanced with.
    pub speed: f64,
    pub accel: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub t: f64,
    pub truth: Pose2D,
    pub control: Pose2D,
    pub steer: f64,
    pub speed: f64,
    pub cross_track: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackEnd {
    PathEnd,
    Stopped,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub end: TrackEnd,
    pub steps: u64,
    pub log: Vec<TrackSample>,
}

fn past_end(path: &SplinePath, pose: &Pose2D) -> bool {
    let end = path.query(path.length());
    let tangent = Vector2::new(end.heading.cos(), end.heading.sin());
    (pose.position() - nalgebra::Point2::new(end.x, end.y)).dot(&tangent) >= 0.0
}

/// Follow `path` until the controlled rear axle passes the path end, a hook
/// stops the loop, or the time budget runs out. Speed approaches
/// `target_speed` through a clamped proportional loop.
pub fn track_path(
    vehicle: &mut VehicleState,
    path: &SplinePath,
    target_speed: f64,
    config: &TrackConfig,
    hooks: &mut dyn TrackHooks,
) -> Result<TrackOutcome, ControlError> {
    let dt = config.dt();
    let max_steps = (config.max_time / dt).ceil() as u64;
    let tick0 = hooks.ticks_elapsed();
    let mut log = Vec::new();
    let mut hint = None;
    let mut steps = 0u64;
    let end = loop {
        let control = hooks.control_pose(&vehicle.pose);
        if past_end(path, &control) {
            break TrackEnd::PathEnd;
        }
        if steps >= max_steps {
            break TrackEnd::Timeout;
        }
        let believed = VehicleState {
            pose: control,
            ..*vehicle
        };
        let cmd = stanley_steer_from(&believed, path, config.gain, hint);
        hint = Some(cmd.index);
        if cmd.cross_track.abs() > config.diverge_limit {
            return Err(ControlError::TrackingDiverged {
                cross_track: cmd.cross_track,
                step: tick0 + steps,
            });
        }
        let accel = (config.speed_gain * (target_speed - vehicle.speed)).clamp(-config.max_accel, config.max_accel);
        let applied = StepCommand {
            steer: cmd.steer,
            speed: vehicle.speed,
            accel,
            dt,
        };
        vehicle.step(cmd.steer, accel, dt);
        steps += 1;
        log.push(TrackSample {
            t: (tick0 + steps) as f64 * dt,
            truth: vehicle.pose,
            control,
            steer: cmd.steer,
            speed: applied.speed,
            cross_track: cmd.cross_track,
        });
        if hooks.on_control_step(vehicle, &applied) == HookFlow::Stop {
            break TrackEnd::Stopped;
        }
        if (tick0 + steps).is_multiple_of(config.perception_every) && hooks.on_perception(vehicle) == HookFlow::Stop {
            break TrackEnd::Stopped;
        }
    };
    Ok(TrackOutcome { end, steps, log })
}

#[cfg(test)]
mod tests {
    use super::super::spline::{fit_spline, WaypointPath};
    use super::*;
    use crate::scene::Point;

    fn line(len: f64) -> SplinePath {
        fit_spline(&WaypointPath::new(vec![Point::new(0.0, 0.0), Point::new(len, 0.0)])).unwrap()
    }

    #[test]
    fn already_past_end_returns_immediately() {
        let mut v = VehicleState::new(Pose2D::new(12.0, 0.0, 0.0), 3.0);
        let out = track_path(&mut v, &line(10.0), 3.0, &TrackConfig::default(), &mut NoHooks).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(out.end, TrackEnd::PathEnd);
    }

    #[test]
    fn reaches_end_of_straight() {
        let mut v = VehicleState::new(Pose2D::new(0.0, 0.3, 0.0), 5.0);
        let out = track_path(&mut v, &line(60.0), 5.0, &TrackConfig::default(), &mut NoHooks).unwrap();
        assert_eq!(out.end, TrackEnd::PathEnd);
        assert!(v.pose.x >= 60.0);
        assert!(v.pose.y.abs() < 0.05);
    }

    #[test]
    fn diverges_when_far_off() {
        let mut v = VehicleState::new(Pose2D::new(0.0, -8.0, 0.0), 5.0);
        let err = track_path(&mut v, &line(60.0), 5.0, &TrackConfig::default(), &mut NoHooks);
        assert!(matches!(err, Err(ControlError::TrackingDiverged { .. })));
    }

    struct Counter {
        perceptions: u32,
        stop_after: u32,
    }

    impl TrackHooks for Counter {
        fn on_perception(&mut self, _v: &VehicleState) -> HookFlow {
            self.perceptions += 1;
            if self.perceptions >= self.stop_after {
                HookFlow::Stop
            } else {
                HookFlow::Continue
            }
        }
    }

    #[test]
    fn perception_runs_at_two_hertz() {
        let mut v = VehicleState::new(Pose2D::identity(), 5.0);
        let mut hooks = Counter {
            perceptions: 0,
            stop_after: 3,
        };
        let out = track_path(&mut v, &line(100.0), 5.0, &TrackConfig::default(), &mut hooks).unwrap();
        assert_eq!(out.end, TrackEnd::Stopped);
        assert_eq!(out.steps, 30);
    }
}
