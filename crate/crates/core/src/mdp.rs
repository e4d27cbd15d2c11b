//! RL-frame state, waypoint actions and the three-part reward.
//!
//! The RL frame has X along the road and Y across it. A step moves the ego by
//! one waypoint `(a_x, a_y)` and scores the move as
//!
//! ```text
//! R = G + (1 − P)·F + T
//! ```
//!
//! where `G` rewards forward progress (or is the terminal penalty), `F` pulls
//! the ego toward the side of the road with edge features, `T` pushes it away
//! from nearby traffic and `P` is set when any vehicle is within the proximity
//! radius.

pub mod log;
pub mod sim;
pub mod training;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Pose2D, RoadGeometry};

pub use log::{read_transitions, write_transitions, Transition};
pub use sim::{EvalConfig, EvalEnv, EvalStatus, PoseLogEntry, TrajectoryRow};
pub use training::{sample_initial_state, SamplerBounds, StepResult, TrainingEnv};

pub const A_X: [f64; 4] = [1.0, 2.0, 3.0, 5.0];
pub const A_Y: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
pub const N_ACTIONS: usize = 20;
/// Wall-clock length of one RL step.
pub const STEP_DT: f64 = 1.0;
pub const EPISODE_STEPS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("step called on a finished episode")]
    StepAfterDone,
    #[error("action index {0} out of range")]
    BadAction(usize),
    #[error("invalid reward config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrafficSlot {
    pub present: bool,
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

impl TrafficSlot {
    pub fn vehicle(x: f64, y: f64, v: f64) -> Self {
        TrafficSlot { present: true, x, y, v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub x_e: f64,
    pub y_e: f64,
    pub y_c_norm: f64,
    pub edge_l: f64,
    pub edge_r: f64,
    /// Present slots first, nearest first; absent slots are all zero.
    pub traffic: Vec<TrafficSlot>,
}

impl StateVector {
    pub fn width(n_slots: usize) -> usize {
        5 + 4 * n_slots
    }

    /// Lateral ego position scaled to [−1, 1] across the road.
    pub fn y_e_norm(&self) -> f64 {
        2.0 * (self.y_e - self.edge_l) / (self.edge_r - self.edge_l) - 1.0
    }

    /// Feature centroid in metres.
    pub fn y_c(&self) -> f64 {
        self.edge_l + (self.y_c_norm + 1.0) * 0.5 * (self.edge_r - self.edge_l)
    }

    /// Network input. Lengths are divided by 10; traffic positions are given
    /// relative to the ego.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(Self::width(self.traffic.len()));
        f.extend([
            self.x_e / 10.0,
            self.y_e / 10.0,
            self.y_c_norm,
            self.edge_l / 10.0,
            self.edge_r / 10.0,
        ]);
        for s in &self.traffic {
            if s.present {
                f.extend([1.0, (s.x - self.x_e) / 10.0, (s.y - self.y_e) / 10.0, s.v / 10.0]);
            } else {
                f.extend([0.0; 4]);
            }
        }
        f
    }

    pub fn distance_to(&self, slot: &TrafficSlot) -> f64 {
        (self.x_e - slot.x).hypot(self.y_e - slot.y)
    }
}

/// Clip and scale a centroid y into [−1, 1] across the road.
pub fn normalize_centroid(y_c: f64, road: &RoadGeometry) -> f64 {
    (2.0 * (y_c - road.edge_l) / (road.edge_r - road.edge_l) - 1.0).clamp(-1.0, 1.0)
}

/// A traffic vehicle as seen by the state builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficObs {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// What the state builder needs from a running simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<'a> {
    pub ego: Pose2D,
    pub centroid_y: f64,
    pub road: &'a RoadGeometry,
    pub traffic: &'a [TrafficObs],
    pub n_slots: usize,
}

pub fn build_state(snap: &Snapshot<'_>) -> StateVector {
    let mut near: Vec<&TrafficObs> = snap.traffic.iter().collect();
    near.sort_by(|a, b| {
        let da = (a.x - snap.ego.x).hypot(a.y - snap.ego.y);
        let db = (b.x - snap.ego.x).hypot(b.y - snap.ego.y);
        da.total_cmp(&db)
    });
    let mut traffic: Vec<TrafficSlot> = near
        .into_iter()
        .take(snap.n_slots)
        .map(|t| TrafficSlot::vehicle(t.x, t.y, t.speed))
        .collect();
    traffic.resize(snap.n_slots, TrafficSlot::default());
    StateVector {
        x_e: snap.ego.x,
        y_e: snap.ego.y,
        y_c_norm: normalize_centroid(snap.centroid_y, snap.road),
        edge_l: snap.road.edge_l,
        edge_r: snap.road.edge_r,
        traffic,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    index: usize,
}

impl Action {
    pub fn from_index(index: usize) -> Result<Self, MdpError> {
        if index < N_ACTIONS {
            Ok(Action { index })
        } else {
            Err(MdpError::BadAction(index))
        }
    }

    /// Look up the action with the given displacement, if it is in the set.
    pub fn from_parts(a_x: f64, a_y: f64) -> Option<Self> {
        let ix = A_X.iter().position(|&v| v == a_x)?;
        let iy = A_Y.iter().position(|&v| v == a_y)?;
        Some(Action { index: 5 * ix + iy })
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..N_ACTIONS).map(|index| Action { index })
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn a_x(self) -> f64 {
        A_X[self.index / 5]
    }

    pub fn a_y(self) -> f64 {
        A_Y[self.index % 5]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    /// Odd exponent applied to the normalised centroid.
    pub o: u32,
    pub w_fwd: f64,
    pub terminal_penalty: f64,
    pub collision_radius: f64,
    pub proximity_radius: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            k1: 1.0,
            k2: 0.5,
            k3: 1.0,
            k4: 0.5,
            o: 3,
            w_fwd: 0.2,
            terminal_penalty: 10.0,
            collision_radius: 3.0,
            proximity_radius: 10.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.o == 0 || self.o.is_multiple_of(2) {
            return Err(MdpError::Config(format!(
                "exponent O must be odd and positive, got {}",
                self.o
            )));
        }
        if !(self.collision_radius > 0.0 && self.collision_radius < self.proximity_radius) {
            return Err(MdpError::Config("need 0 < collision_radius < proximity_radius".into()));
        }
        let all = [self.k1, self.k2, self.k3, self.k4, self.w_fwd, self.terminal_penalty];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(MdpError::Config("weights must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub g: f64,
    pub f: f64,
    pub t: f64,
    pub p: bool,
    pub p_i: Vec<bool>,
    pub total: f64,
    pub collided: bool,
    pub breached: bool,
}

impl RewardBreakdown {
    pub fn terminal(&self) -> bool {
        self.collided || self.breached
    }
}

/// `K1·y_c^O·ŷ_e − K2·(1 − |y_c^O|)·|a_y|` with `ŷ_e` the normalised lateral
/// position.
pub fn feature_reward(state: &StateVector, action: Action, cfg: &RewardConfig) -> f64 {
    let yc_o = state.y_c_norm.powi(cfg.o as i32);
    cfg.k1 * yc_o * state.y_e_norm() - cfg.k2 * (1.0 - yc_o.abs()) * action.a_y().abs()
}

/// Proximity flags are taken on `state`; the reward is the change in
/// longitudinal and lateral separation to each flagged vehicle.
pub fn traffic_reward(
    state: &StateVector,
    _action: Action,
    next: &StateVector,
    cfg: &RewardConfig,
) -> (f64, Vec<bool>) {
    let mut t = 0.0;
    let mut flags = Vec::with_capacity(state.traffic.len());
    for (i, s) in state.traffic.iter().enumerate() {
        let p = s.present && state.distance_to(s) <= cfg.proximity_radius;
        flags.push(p);
        if !p {
            continue;
        }
        let n = &next.traffic[i];
        let dx = (next.x_e - n.x).abs() - (state.x_e - s.x).abs();
        let dy = (next.y_e - n.y).abs() - (state.y_e - s.y).abs();
        t += cfg.k3 * dx + cfg.k4 * dy;
    }
    (t, flags)
}

pub fn collided(state: &StateVector, cfg: &RewardConfig) -> bool {
    state
        .traffic
        .iter()
        .any(|s| s.present && state.distance_to(s) < cfg.collision_radius)
}

pub fn breached(state: &StateVector) -> bool {
    state.y_e < state.edge_l || state.y_e > state.edge_r
}

/// Full reward for the transition `state → next` under `action`.
///
/// On collision or lane breach `G` is the terminal penalty and `F = T = 0`.
/// `F` is scored at the post-step position.
pub fn reward(state: &StateVector, action: Action, next: &StateVector, cfg: &RewardConfig) -> RewardBreakdown {
    let (t, p_i) = traffic_reward(state, action, next, cfg);
    let p = p_i.iter().any(|&b| b);
    let collided = collided(next, cfg);
    let breached = breached(next);
    if collided || breached {
        return RewardBreakdown {
            g: -cfg.terminal_penalty,
            f: 0.0,
            t: 0.0,
            p,
            p_i,
            total: -cfg.terminal_penalty,
            collided,
            breached,
        };
    }
    let g = cfg.w_fwd * action.a_x();
    let f = feature_reward(next, action, cfg);
    let gate = if p { 0.0 } else { 1.0 };
    RewardBreakdown {
        g,
        f,
        t,
        p,
        p_i,
        total: g + gate * f + t,
        collided,
        breached,
    }
}

/// Anything that can pick an action for a state.
pub trait Policy {
    /// Deterministic (argmax) choice.
    fn greedy(&self, state: &StateVector) -> Action;
}

/// Uniform-random baseline.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: std::cell::RefCell<rand_chacha::ChaCha8Rng>,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: std::cell::RefCell::new(crate::seed::rng(seed, 0)),
        }
    }
}

impl Policy for RandomPolicy {
    fn greedy(&self, _state: &StateVector) -> Action {
        use rand::Rng;
        Action {
            index: self.rng.borrow_mut().random_range(0..N_ACTIONS),
        }
    }
}
