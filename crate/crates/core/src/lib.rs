//! Two-phase oil-water flow in porous media: case description, finite-volume
//! residual, fully-implicit Newton simulator and accuracy metrics.

pub mod error;
pub mod fvm;
pub mod jacobian;
pub mod metrics;
pub mod model;
pub mod presets;
pub mod sim;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use fvm::{assemble_residual, Discretization, ResidualBundle};
pub use model::{
    corey_relperm, fluid_props_at, ControlSchedule, CoreyRelPerm, FluidModel, GridSpec, PermAveraging, Phase,
    ReservoirCase, RockModel, State, UnitConstants, WellKind, WellSpec,
};
pub use sim::{simulate, NewtonConfig, Trajectory};
