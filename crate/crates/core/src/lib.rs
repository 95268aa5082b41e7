//! Trajectory-replay highway driving simulator.
//!
//! Recorded traffic is replayed around a single controlled ego vehicle.
//! Observations are context-aware occupancy grids built from past
//! positions and predicted futures of the surrounding vehicles; rewards
//! combine distance regions, imitation of the recorded driver and an
//! off-road penalty.
//!
//! Numeric building blocks (`dynamics`, `reward`, `grid::occupancy_probability`,
//! `predictor`) are generic over [`Scalar`]; the aliases below fix them to
//! `f64`, which is what the simulator itself runs on.

pub mod action;
pub mod checkpoint;
pub mod data;
pub mod dynamics;
pub mod env;
pub mod eval;
pub mod grid;
pub mod optim;
pub mod policy;
pub mod predictor;
pub mod reward;
pub mod scalar;

pub use action::{Lateral, Longitudinal, ManeuverLabel, MetaAction};
pub use data::{FrameIndex, LaneConfig, TrajectoryPoint, VehicleTrack};
pub use env::{DrivingEnv, EnvConfig, StepResult};
pub use grid::{ContextGrid, GridSpec};
pub use policy::{DecisionContext, Policy};
pub use scalar::Scalar;

pub type EgoState = dynamics::EgoState<f64>;
pub type ControlDelta = dynamics::ControlDelta<f64>;
pub type ControlTable = dynamics::ControlTable<f64>;
pub type RewardConfig = reward::RewardConfig<f64>;
pub type RewardBreakdown = reward::RewardBreakdown<f64>;
pub type MnnParams = predictor::MnnParams<f64>;
pub type PredictionResult = predictor::PredictionResult<f64>;
