//! Hybrid domain decomposition for the 2D convection-diffusion-reaction
//! equation: finite element and Operator Inference subdomain models coupled
//! by the overlapping multiplicative Schwarz alternating method.

pub mod driver;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod rom;
pub mod schwarz;
pub mod sparse;
pub mod timestep;

pub use error::{Error, Result};
