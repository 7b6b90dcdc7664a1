//! Gradient-based recovery of slot conductivities from measured strengths.

mod adam;
mod estimate;
mod loss;
mod record;
mod stop;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

pub use adam::{adam_step, AdamState};
pub use estimate::{estimate, InverseProblem};
pub use loss::{loss_and_grad, mre, nae_loss, Measurement, MEASUREMENT_FLOOR};
pub use record::{EstimationTrace, IterRecord, StopReason};
pub use stop::{check_stop, loss_window_stable, window_converged, StopCriteria};

/// One transmitter and its N receivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub tx: Vec3,
    pub rx: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            sigma_min: crate::materials::SIGMA_MIN,
            sigma_max: crate::materials::SIGMA_MAX,
        }
    }
}

impl EstimateOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.sigma_min > 0.0
            && self.sigma_max > self.sigma_min;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid optimizer options {self:?}")))
        }
    }
}
