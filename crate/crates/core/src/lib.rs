//! Estimation of per-object RF conductivities in a known indoor room from
//! received-signal-strength measurements, using a differentiable specular
//! ray tracer, Adam refinement, prior-based initialization and
//! information-driven measurement placement.

pub mod error;
pub mod forward_rt;
pub mod geometry;
pub mod harness;
pub mod inverse;
pub mod materials;
pub mod placement;
pub mod priors;

pub use error::{Error, Result};
