//! Waypoint smoothing and path tracking.

pub mod planner;
pub mod spline;
pub mod stanley;
pub mod tracking;

pub use planner::{plan_and_track, run_vanilla, PlannerConfig};
pub use spline::{fit_spline, PathSample, SplineError, SplinePath, WaypointPath};
pub use stanley::{stanley_steer, SteerCommand, VehicleState};
pub use tracking::{
    track_path, HookFlow, NoHooks, StepCommand, TrackConfig, TrackEnd, TrackHooks, TrackOutcome, TrackSample,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("cross-track error {cross_track:.3} m exceeded the limit at control step {step}")]
    TrackingDiverged { cross_track: f64, step: u64 },
}
