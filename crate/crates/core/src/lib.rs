//! Drift-aware active navigation in a planar driving world.
//!
//! The pipeline has four stages:
//!
//! 1. [`lidar`] casts a planar scan against the scene and [`odometry`] turns
//!    consecutive scans into a pose estimate by point-to-line ICP, optionally
//!    discarding points that came from traffic.
//! 2. [`mdp`] assembles the RL-frame state and reward; a [`ppo`] policy picks
//!    discrete waypoints from it.
//! 3. [`control`] fits a cubic spline through the unrolled waypoints.
//! 4. [`control`] tracks the spline with a Stanley controller on a kinematic
//!    bicycle.
//!
//! [`eval`] runs the learned policy and the perception-unaware baselines over
//! bundled scenarios and reports average drift, final drift and rotational
//! offset.
//!
//! Data-parallel loops (rollout collection, benchmark sweeps, seed batches) go
//! through [`exec::Execution`], which uses rayon when the `parallel` feature is
//! enabled and runs sequentially otherwise. Results are identical either way.

pub mod control;
pub mod eval;
pub mod exec;
pub mod lidar;
pub mod mdp;
pub mod odometry;
pub mod ppo;
pub mod scene;
pub mod seed;

pub use scene::{Pose2D, Scenario};
