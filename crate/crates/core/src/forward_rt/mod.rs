//! Desk-scale differentiable forward ray tracer.
//!
//! Path geometry is computed once per trial ([`trace_paths`]) and never sees
//! a conductivity; received strengths and their exact conductivity
//! sensitivities are then cheap functions of the cached paths.

mod cache;
mod config;
mod eval;
mod fresnel;
mod oracle;
mod trace;

pub use cache::{read_trace_cache, write_trace_cache, CACHE_FORMAT, CACHE_VERSION};
pub use config::{dbm_to_watts, watts_to_dbm, Aggregation, PolarizationModel, RtConfig, SPEED_OF_LIGHT, VACUUM_PERMITTIVITY};
pub use eval::{received_strength, received_strength_with_grad, GradEval};
pub use fresnel::{
    complex_permittivity, fresnel_reflection, fresnel_with_derivative, power_reflectance, FresnelEval, Polarization,
};
pub use oracle::two_ray_oracle;
pub use trace::{line_of_sight, specular_path, trace_paths, Interaction, PathRecord, TraceResult};
