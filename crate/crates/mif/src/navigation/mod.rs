//! Navigation: occupancy-grid planning and stability-aware pure-pursuit
//! tracking with adaptive lookahead and velocity scaling.

mod grid;
mod pursuit;

pub use grid::{grid_path, plan_path, OccupancyGrid};
pub use pursuit::{
    adaptive_velocity, pure_pursuit_step, step_unicycle, Pose2, PursuitCommand, TrackingParams,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("no collision-free path between start and goal")]
    NoPath,
    #[error("reference path is empty")]
    EmptyPath,
}
