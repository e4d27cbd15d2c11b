//! Stanley front-axle steering law on a kinematic bicycle.

use serde::{Deserialize, Serialize};

use super::spline::SplinePath;
use crate::scene::{wrap_angle, Point, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Rear-axle pose.
    pub pose: Pose2D,
    pub speed: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
}

impl VehicleState {
    pub fn new(pose: Pose2D, speed: f64) -> Self {
        VehicleState {
            pose,
            speed,
            wheelbase: 2.5,
            max_steer: 0.6,
        }
    }

    pub fn front_axle(&self) -> Point {
        front_axle(&self.pose, self.wheelbase)
    }

    /// One explicit Euler step of the kinematic bicycle: pose from the
    /// current speed, then the speed update.
    pub fn step(&mut self, steer: f64, accel: f64, dt: f64) {
        self.pose = bicycle_step(&self.pose, self.speed, steer, self.wheelbase, dt);
        self.speed += accel * dt;
    }
}

pub fn front_axle(pose: &Pose2D, wheelbase: f64) -> Point {
    Point::new(pose.x + wheelbase * pose.yaw.cos(), pose.y + wheelbase * pose.yaw.sin())
}

pub fn bicycle_step(pose: &Pose2D, speed: f64, steer: f64, wheelbase: f64, dt: f64) -> Pose2D {
    Pose2D::new(
        pose.x + speed * pose.yaw.cos() * dt,
        pose.y + speed * pose.yaw.sin() * dt,
        pose.yaw + speed / wheelbase * steer.tan() * dt,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerCommand {
    /// Clamped steering angle.
    pub steer: f64,
    pub heading_error: f64,
    /// Signed front-axle cross-track error, positive when the axle is right
    /// of the path.
    pub cross_track: f64,
    /// Arc length of the nearest path point.
    pub s: f64,
    pub(crate) index: usize,
}

/// δ = θ_e + atan(k·e / v), clamped to ±max_steer.
pub fn stanley_steer(vehicle: &VehicleState, path: &SplinePath, gain: f64) -> SteerCommand {
    stanley_steer_from(vehicle, path, gain, None)
}

pub(crate) fn stanley_steer_from(
    vehicle: &VehicleState,
    path: &SplinePath,
    gain: f64,
    hint: Option<usize>,
) -> SteerCommand {
    let fa = vehicle.front_axle();
    let (index, s, q, heading) = path.project(&fa, hint);
    let left = nalgebra::Vector2::new(-heading.sin(), heading.cos());
    let cross_track = -(fa - q).dot(&left);
    let heading_error = wrap_angle(heading - vehicle.pose.yaw);
    let v = vehicle.speed.max(0.1);
    let raw = heading_error + (gain * cross_track / v).atan();
    SteerCommand {
        steer: raw.clamp(-vehicle.max_steer, vehicle.max_steer),
        heading_error,
        cross_track,
        s,
        index,
    }
}
