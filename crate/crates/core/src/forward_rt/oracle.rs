use super::config::RtConfig;
use super::fresnel::power_reflectance;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::materials::ItuEntry;

/// Line-of-sight plus a single specular bounce off an infinite floor at `z = 0`,
/// built from the mirrored transmitter, summed incoherently.
pub fn two_ray_oracle(tx: Vec3, rx: Vec3, floor_entry: &ItuEntry, sigma_floor: f64, config: &RtConfig) -> Result<f64> {
    if !(tx.z > 0.0 && rx.z > 0.0) {
        return Err(Error::InvalidInput("two-ray oracle needs both points above the floor".into()));
    }
    let direct = config.friis(tx.distance(rx));
    let image = Vec3::new(tx.x, tx.y, -tx.z);
    let refl_len = image.distance(rx);
    let cos = (tx.z + rx.z) / refl_len;
    let w = power_reflectance(floor_entry.eps_real, sigma_floor, config.f_c, cos, config.polarization_model)?;
    Ok(direct + config.friis(refl_len) * w)
}
