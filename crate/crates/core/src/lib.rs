//! Rule-based accident detection over 3D-tracked highway traffic.
//!
//! The crate is organised as a pipeline:
//!
//! * [`openlabel`] reads and writes annotation files,
//! * [`digital_twin`] turns frame snapshots into tracks with kinematics,
//! * [`lane_model`] maps positions to lanes and finds lead vehicles,
//! * [`rule_engine`] evaluates the car-following accident rules and maneuver flags,
//! * [`event_pipeline`] confirms, validates and fuses events across cameras,
//! * [`scenario_gen`] produces synthetic scenes with ground truth,
//! * [`reporting`] computes dataset statistics, event scores and timings.

pub mod category;
pub mod digital_twin;
pub mod event_pipeline;
pub mod geometry;
pub mod lane_model;
pub mod openlabel;
pub mod reporting;
pub mod rule_engine;
pub mod scenario_gen;

pub use category::Category;
