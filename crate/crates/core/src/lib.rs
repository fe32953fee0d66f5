//! Plant skeleton reconstruction, main-stem grasp planning and
//! discrete-elastic-rod vibration simulation.

pub mod bench;
pub mod config;
pub mod dersim;
pub mod files;
pub mod fusion;
pub mod geometry;
pub mod graspplan;
pub mod pipeline;
pub mod registry;
pub mod skeleton;
pub mod synthetic;
pub mod validate;
