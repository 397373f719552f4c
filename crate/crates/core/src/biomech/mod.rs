//! Planar musculoskeletal walker: model description, terrain, dynamics and
//! the control-rate environment.

pub mod dynamics;
pub mod env;
pub mod model;
pub mod terrain;

pub use dynamics::{dynamics_step, joint_torques, muscle_length, SimState};
pub use env::{reset, reward, StepOutcome, WalkerEnv};
pub use model::{MuscleDescriptor, Side, WalkerModel};
pub use terrain::{terrain_height, TerrainKind, TerrainProfile};
