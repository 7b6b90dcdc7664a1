use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_8128e-12;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum of per-path powers.
    #[default]
    Incoherent,
    /// Squared magnitude of the phased complex amplitude sum.
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizationModel {
    /// Mean of the TE and TM power reflectances.
    #[default]
    UnpolarizedAverage,
    TeOnly,
    TmOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtConfig {
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Transmit power, W.
    pub p_tx: f64,
    pub g_tx: f64,
    pub g_rx: f64,
    pub u_ray: usize,
    pub depth: usize,
    /// Reception sphere radius, m.
    pub rx_radius: f64,
    pub aggregation: Aggregation,
    pub polarization_model: PolarizationModel,
}

impl Default for RtConfig {
    fn default() -> Self {
        RtConfig {
            f_c: 3.5e9,
            p_tx: dbm_to_watts(44.0),
            g_tx: 1.0,
            g_rx: 1.0,
            u_ray: 5000,
            depth: 4,
            rx_radius: 0.15,
            aggregation: Aggregation::Incoherent,
            polarization_model: PolarizationModel::UnpolarizedAverage,
        }
    }
}

impl RtConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.f_c > 0.0
            && self.p_tx > 0.0
            && self.g_tx > 0.0
            && self.g_rx > 0.0
            && self.u_ray >= 1
            && self.rx_radius > 0.0
            && self.f_c.is_finite()
            && self.p_tx.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid RT configuration {self:?}")))
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    pub fn f_ghz(&self) -> f64 {
        self.f_c * 1e-9
    }

    /// Free-space received power at distance `d` (Friis).
    pub fn friis(&self, d: f64) -> f64 {
        let a = self.wavelength() / (4.0 * std::f64::consts::PI * d);
        self.p_tx * self.g_tx * self.g_rx * a * a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RtConfig::default();
        assert!((c.p_tx - 25.118_864_315_095_8).abs() < 1e-9);
        assert_eq!((c.u_ray, c.depth), (5000, 4));
        assert!((watts_to_dbm(c.p_tx) - 44.0).abs() < 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_config() {
        let c = RtConfig { rx_radius: 0.0, ..RtConfig::default() };
        assert!(c.validate().is_err());
    }
}
