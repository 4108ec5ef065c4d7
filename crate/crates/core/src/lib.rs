//! Bipedal navigation over uncertain rough terrain.
//!
//! The crate is organised bottom-up:
//!
//! * [`terrain`] synthetic ground-truth heightfields and the range sensor,
//! * [`gp`] Gaussian-process regression (RBF, neural-network and attentive
//!   kernels, exact/sparse posteriors, KD-tree + k-means local approximation),
//! * [`locomotion`] prismatic inverted pendulum step planning,
//! * [`model_error`] the learned lateral-deviation model and the synthetic
//!   perturbation oracle used during simulated execution,
//! * [`planner`] the locomotion-aware local and global RRT* planners,
//! * [`framework`] the mission loop, metrics and exports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod error;
pub mod framework;
pub mod geometry;
pub mod gp;
pub mod locomotion;
pub mod model_error;
pub mod planner;
pub mod rng;
pub mod terrain;

pub use belief::ElevationBelief;
pub use error::{Error, Result};
pub use geometry::{Point2, Vector2};
