//! Virtual inertial sensor synthesis from human motion sequences.
//!
//! Given a motion-capture skeleton (BVH) or tracked body-mesh vertices, this
//! crate produces 3-axis accelerometer and gyroscope readings at arbitrary
//! on-body positions. Two simulation paths are provided:
//!
//! - an analytic path ([`kinematics`]): finite-difference second derivatives
//!   for acceleration and triangle-triad tracking for angular velocity, with
//!   exact global-to-sensor frame transforms, and
//! - a learned path ([`simnet`]): a conv + bidirectional-LSTM sequence
//!   regressor trained on real IMU data, mapping noisy mesh-triangle
//!   trajectories to global-frame readings.
//!
//! Supporting modules handle trajectory conditioning ([`trajectory`]),
//! domain-gap reduction and HAR dataset export ([`postprocess`]), and
//! fidelity / downstream-task metrics ([`evalkit`]).

pub mod evalkit;
pub mod kinematics;
pub mod motion;
pub mod postprocess;
pub mod simnet;
pub mod trajectory;

pub use motion::{ImuSeries, MotionTrackSet, SensorSpec, SkeletonAnimation};
