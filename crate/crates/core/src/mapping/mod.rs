//! World model, simulated range sensing, and voxel occupancy mapping.
//!
//! [`world`] holds the synthetic obstacle world (cylinders + boxes inside an
//! axis-aligned boundary) and casts deterministic spherical ray fans against
//! it. [`grid`] turns the resulting point clouds into dense voxel occupancy
//! grids, inflates them by the vehicle half-size, and extracts the nearest
//! occupied-cell centers used as collision points by the local optimizer.

pub mod grid;
pub mod world;

pub use grid::{inflate, obstacle_set, voxelize, Cell, VoxelGrid};
pub use world::{sense, Aabb, BoxObstacle, Cylinder, ObstacleWorld, PointCloud, SensorRays};
