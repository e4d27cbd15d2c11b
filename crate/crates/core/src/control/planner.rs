//! Replanning loop for the learned arm and the centreline baseline.

use serde::{Deserialize, Serialize};

use super::spline::{fit_spline, WaypointPath};
use crate::mdp::training::teleport;
use crate::mdp::{collided, EvalEnv, EvalStatus, Policy, STEP_DT};
use crate::scene::{Point, Scenario};

/// Baseline cruise speed when a scene has no traffic to match.
pub const DEFAULT_CRUISE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Policy steps per tracked segment.
    pub unroll: usize,
    /// Waypoints are kept this far inside the road edges.
    pub edge_margin: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            unroll: 5,
            edge_margin: 1.5,
        }
    }
}

/// Drive `env` to completion with `policy`.
///
/// Each round rebuilds the state at the estimated pose, shifts the RL frame
/// so the ego sits at x = 0, unrolls the policy greedily for `unroll` steps in
/// the teleport model, fits a spline through the waypoints and tracks it at
/// the mean step length per second. Unrolling stops early at a predicted
/// collision. With `unroll = 1` the segment is a straight line to the next
/// waypoint.
pub fn plan_and_track(policy: &dyn Policy, env: &mut EvalEnv, config: &PlannerConfig) -> EvalStatus {
    let reward = env.config().reward;
    let (lo, hi) = {
        let road = &env.scenario().road;
        (road.edge_l + config.edge_margin, road.edge_r - config.edge_margin)
    };
    let mut stalls = 0;
    while !env.is_done() {
        let mut state = env.build_state();
        let origin = state.x_e;
        state.x_e = 0.0;
        for s in state.traffic.iter_mut().filter(|s| s.present) {
            s.x -= origin;
        }
        let ego = env.estimated_pose();
        let mut points = vec![Point::new(ego.x, ego.y)];
        let mut advance = 0.0;
        for _ in 0..config.unroll.max(1) {
            let action = policy.greedy(&state);
            let mut next = teleport(&state, action);
            if collided(&next, &reward) {
                break;
            }
            next.y_e = next.y_e.clamp(lo, hi);
            points.push(Point::new(origin + next.x_e, next.y_e));
            advance += action.a_x();
            state = next;
        }
        let steps = points.len() - 1;
        if steps == 0 {
            // Every option collides: creep forward and look again.
            points.push(Point::new(ego.x + 1.0, ego.y.clamp(lo, hi)));
            advance = 1.0;
        }
        let speed = advance / steps.max(1) as f64 / STEP_DT;
        let Ok(path) = fit_spline(&WaypointPath::new(points)) else {
            env.abort(EvalStatus::Diverged);
            break;
        };
        let before = env.time();
        env.follow(&path, speed);
        if env.time() == before {
            stalls += 1;
            if stalls >= 3 {
                env.abort(EvalStatus::Timeout);
            }
        } else {
            stalls = 0;
        }
    }
    env.status()
}

/// Mean traffic speed, or [`DEFAULT_CRUISE`] with no traffic.
pub fn vanilla_speed(scenario: &Scenario) -> f64 {
    if scenario.traffic.is_empty() {
        DEFAULT_CRUISE
    } else {
        scenario.traffic.iter().map(|t| t.speed).sum::<f64>() / scenario.traffic.len() as f64
    }
}

/// Perception-unaware baseline: follow the road centreline at traffic speed.
pub fn run_vanilla(env: &mut EvalEnv) -> EvalStatus {
    let (center, end, speed) = {
        let s = env.scenario();
        (s.road.center(), s.road.length + 50.0, vanilla_speed(s))
    };
    let start = env.estimated_pose();
    let path = fit_spline(&WaypointPath::new(vec![
        Point::new(start.x, center),
        Point::new(end, center),
    ]))
    .expect("centreline has two distinct points");
    while !env.is_done() {
        let before = env.time();
        env.follow(&path, speed);
        if env.time() == before {
            env.abort(EvalStatus::Timeout);
        }
    }
    env.status()
}
