//! Adaptive bearing-angle visual servo tracking of a spherical target by a
//! multirotor, with the rigid-body simulation needed to exercise it.
//!
//! Frames: inertial frame is z-down (NED-like); gravity is `+g·e3`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod controller;
pub mod dynamics;
pub mod log;
pub mod scenario;
pub mod sensing;
pub mod sim;
pub mod so3;

pub use allocation::{allocate, AttitudeCommand, VisibilityConfig, YawReference};
pub use controller::{ControllerMemory, GainConfig, GroundTruth, ReferenceSpec};
pub use dynamics::{RigidBodyState, TargetState, VehicleParams, World};
pub use log::{read_csv, write_csv, LogError, LogRecord};
pub use scenario::{paper_scenario, ConfigError, Scenario, ScenarioConfig};
pub use sensing::{BearingAngleObservation, NoiseConfig};
pub use sim::{run, run_batch, RunOutcome, RunOutput, RunSummary, Simulation};
pub use so3::{Rotation3, UnitVector3};
