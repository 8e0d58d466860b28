//! Constrained minimum-jerk trajectories on a sphere, a synthetic haptic
//! sphere experiment and the movement smoothness analysis that goes with it.
//!
//! The numerical core ([`geometry`], [`reference`], [`bvp`], [`metrics`] and
//! the contact force law in [`haptic`]) is generic over the [`Real`] scalar
//! trait and works in `f32` or `f64`. The aliases at the crate root fix the
//! scalar to `f64`, which is what the simulator, log format and statistics use.
//!
//! All quantities are SI: meters, seconds, newtons.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bvp;
pub mod error;
pub mod geometry;
pub mod haptic;
pub mod metrics;
pub mod reference;
pub mod scalar;
pub mod stats;
pub mod triallog;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3 = geometry::Vec3<f64>;
pub type SphereSurface = geometry::SphereSurface<f64>;
pub type GeodesicArc = geometry::GeodesicArc<f64>;
pub type QuinticProfile = reference::QuinticProfile<f64>;
pub type ReferenceTrajectory = reference::ReferenceTrajectory<f64>;
pub type BvpProblem = bvp::BvpProblem<f64>;
pub type BvpSolution = bvp::BvpSolution<f64>;
pub type SolverOptions = bvp::SolverOptions<f64>;
pub type Movement = metrics::Movement<f64>;
pub type PolyFit = metrics::PolyFit<f64>;
pub type MetricRecord = metrics::MetricRecord<f64>;

pub use haptic::{Experiment, Protocol, ServoConfig, SubjectModel};
pub use triallog::{Direction, Phase, TrialLog};

pub type Vec3f = geometry::Vec3<f32>;
pub type SphereSurfacef = geometry::SphereSurface<f32>;
