//! Teleport dynamics used for training and for planning rollouts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    reward, Action, MdpError, RewardBreakdown, RewardConfig, StateVector, TrafficSlot, EPISODE_STEPS, STEP_DT,
};

/// Ego jumps by the waypoint, traffic drives straight on at its speed, the
/// feature centroid stays where it was.
pub fn teleport(state: &StateVector, action: Action) -> StateVector {
    StateVector {
        x_e: state.x_e + action.a_x(),
        y_e: state.y_e + action.a_y(),
        traffic: state
            .traffic
            .iter()
            .map(|s| {
                if s.present {
                    TrafficSlot {
                        x: s.x + s.v * STEP_DT,
                        ..*s
                    }
                } else {
                    *s
                }
            })
            .collect(),
        ..state.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: StateVector,
    pub reward: RewardBreakdown,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct TrainingEnv {
    state: StateVector,
    config: RewardConfig,
    steps: usize,
    done: bool,
}

impl TrainingEnv {
    pub fn new(initial: StateVector, config: RewardConfig) -> Self {
        TrainingEnv {
            state: initial,
            config,
            steps: 0,
            done: false,
        }
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, MdpError> {
        if self.done {
            return Err(MdpError::StepAfterDone);
        }
        let next = teleport(&self.state, action);
        let r = reward(&self.state, action, &next, &self.config);
        self.steps += 1;
        self.done = r.terminal() || self.steps >= EPISODE_STEPS;
        self.state = next;
        Ok(StepResult {
            state: self.state.clone(),
            reward: r,
            done: self.done,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerBounds {
    pub edge_l: f64,
    pub edge_r: f64,
    /// Ego and traffic start at least this far inside the road edges.
    pub edge_margin: f64,
    /// Traffic x relative to the ego.
    pub traffic_x: (f64, f64),
    pub traffic_speed: (f64, f64),
    /// Probability that each slot holds a vehicle.
    pub presence: f64,
    pub n_slots: usize,
    /// Minimum start distance between any two vehicles.
    pub clearance: f64,
    /// Fixed normalised centroid (curriculum); uniform on [−1, 1] if `None`.
    pub y_c_norm: Option<f64>,
}

impl Default for SamplerBounds {
    fn default() -> Self {
        SamplerBounds {
            edge_l: -7.5,
            edge_r: 7.5,
            edge_margin: 1.0,
            traffic_x: (-20.0, 40.0),
            traffic_speed: (0.0, 8.0),
            presence: 0.5,
            n_slots: 2,
            clearance: 3.0,
            y_c_norm: None,
        }
    }
}

impl SamplerBounds {
    /// One-sided features: centroid pinned at the right edge.
    pub fn one_sided() -> Self {
        SamplerBounds {
            y_c_norm: Some(1.0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        let bad = |m: &str| Err(MdpError::Config(m.to_string()));
        if self.edge_r - self.edge_l <= 2.0 * self.edge_margin {
            return bad("road narrower than twice the margin");
        }
        if self.traffic_x.0 > self.traffic_x.1 || self.traffic_speed.0 > self.traffic_speed.1 {
            return bad("empty sampling interval");
        }
        if !(0.0..=1.0).contains(&self.presence) {
            return bad("presence must be a probability");
        }
        if let Some(y) = self.y_c_norm {
            if !(-1.0..=1.0).contains(&y) {
                return bad("fixed y_c_norm outside [-1, 1]");
            }
        }
        Ok(())
    }
}

const MAX_TRIES: usize = 64;

/// Uniform initial state. Vehicles that cannot be placed clear of the ego
/// and of each other are left out.
pub fn sample_initial_state<R: Rng + ?Sized>(rng: &mut R, b: &SamplerBounds) -> StateVector {
    let lo = b.edge_l + b.edge_margin;
    let hi = b.edge_r - b.edge_margin;
    let y_e = rng.random_range(lo..=hi);
    let y_c_norm = b.y_c_norm.unwrap_or_else(|| rng.random_range(-1.0..=1.0));
    let mut traffic: Vec<TrafficSlot> = Vec::with_capacity(b.n_slots);
    for _ in 0..b.n_slots {
        if !rng.random_bool(b.presence) {
            continue;
        }
        for _ in 0..MAX_TRIES {
            let x = rng.random_range(b.traffic_x.0..=b.traffic_x.1);
            let y = rng.random_range(lo..=hi);
            let clear_ego = x.hypot(y - y_e) >= b.clearance;
            let clear_rest = traffic.iter().all(|t| (t.x - x).hypot(t.y - y) >= b.clearance);
            if clear_ego && clear_rest {
                let v = rng.random_range(b.traffic_speed.0..=b.traffic_speed.1);
                traffic.push(TrafficSlot::vehicle(x, y, v));
                break;
            }
        }
    }
    traffic.sort_by(|a, b| a.x.hypot(a.y - y_e).total_cmp(&b.x.hypot(b.y - y_e)));
    traffic.resize(b.n_slots, TrafficSlot::default());
    StateVector {
        x_e: 0.0,
        y_e,
        y_c_norm,
        edge_l: b.edge_l,
        edge_r: b.edge_r,
        traffic,
    }
}
