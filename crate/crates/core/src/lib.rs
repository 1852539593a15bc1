//! UAV motion planning in cluttered environments: simulated range sensing
//! into voxel occupancy maps, jump point search for global paths, a
//! receding-horizon MPC trajectory optimizer, an artificial-potential-field
//! baseline, and a closed-loop simulator with benchmarking metrics.
//!
//! All numeric modules are generic over the scalar type via [`num::Real`];
//! the aliases at the crate root fix `f64`, which is what the simulator and
//! CLI use.

pub mod apf;
pub mod dynamics;
pub mod error;
pub mod jps;
pub mod mapping;
pub mod mpc;
pub mod num;
pub mod reference;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use num::Real;

/// Double-precision 3-vector used throughout the concrete pipeline.
pub type Vec3 = nalgebra::Vector3<f64>;

pub type UavState = dynamics::UavState<f64>;
pub type DynamicsParams = dynamics::DynamicsParams<f64>;
pub type StateMatrices = dynamics::StateMatrices<f64>;
pub type ObstacleWorld = mapping::ObstacleWorld<f64>;
pub type PointCloud = mapping::PointCloud<f64>;
pub type VoxelGrid = mapping::VoxelGrid<f64>;
pub type SensorRays = mapping::SensorRays<f64>;
pub type CellPath = jps::CellPath<f64>;
pub type ReferenceTrajectory = reference::ReferenceTrajectory<f64>;
pub type CostWeights = mpc::CostWeights<f64>;
pub type SolverConfig = mpc::SolverConfig<f64>;
pub type CostBreakdown = mpc::CostBreakdown<f64>;
pub type PlanResult = mpc::PlanResult<f64>;
pub type ApfParams = apf::ApfParams<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type MappingConfig = scenario::MappingConfig<f64>;
pub type ReferenceConfig = scenario::ReferenceConfig<f64>;
pub type EpisodeConfig = scenario::EpisodeConfig<f64>;
pub use scenario::PlannerKind;
pub type EpisodeLog = sim::EpisodeLog<f64>;
pub type Metrics = sim::Metrics<f64>;
pub type Sample = sim::Sample<f64>;
pub use sim::Outcome;
pub use mapping::Cell;
pub use mpc::SolveStatus;
