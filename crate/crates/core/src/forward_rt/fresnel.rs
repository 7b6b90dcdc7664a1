//! Fresnel reflection at a lossy dielectric half-space.
//!
//! The complex relative permittivity is `eta = eps' - j sigma / (2 pi f eps0)`.
//! With `c = cos(theta)` and `s = sqrt(eta - sin^2 theta)` on the principal
//! branch (`Re s >= 0`):
//!
//! ```text
//! Gamma_TE = (c - s) / (c + s)
//! Gamma_TM = (eta c - s) / (eta c + s)
//! ```
//!
//! Derivatives with respect to conductivity go through `d eta / d sigma`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{PolarizationModel, VACUUM_PERMITTIVITY};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    /// Perpendicular (s).
    TE,
    /// Parallel (p).
    TM,
}

fn loss_scale(f_c: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * f_c * VACUUM_PERMITTIVITY)
}

pub fn complex_permittivity(eps_real: f64, sigma: f64, f_c: f64) -> Complex64 {
    Complex64::new(eps_real, -sigma * loss_scale(f_c))
}

fn check_domain(eps_real: f64, sigma: f64, incidence_cos: f64) -> Result<()> {
    if !(eps_real >= 1.0) || !(sigma >= 0.0) || !(incidence_cos > 0.0 && incidence_cos <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fresnel domain: eps_real={eps_real}, sigma={sigma}, cos={incidence_cos}"
        )));
    }
    Ok(())
}

/// Reflection coefficient and its derivative with respect to `sigma`.
#[derive(Debug, Clone, Copy)]
pub struct FresnelEval {
    pub gamma: Complex64,
    pub dgamma_dsigma: Complex64,
}

fn eval_unchecked(eps_real: f64, sigma: f64, f_c: f64, c: f64, pol: Polarization) -> FresnelEval {
    let eta = complex_permittivity(eps_real, sigma, f_c);
    // eta - sin^2 = (eta - 1) + cos^2 keeps the vacuum case exact.
    let s = ((eta - 1.0) + c * c).sqrt();
    let deta = Complex64::new(0.0, -loss_scale(f_c));
    match pol {
        Polarization::TE => {
            let den = c + s;
            let gamma = (c - s) / den;
            let dgamma_deta = -c / (s * den * den);
            FresnelEval { gamma, dgamma_dsigma: dgamma_deta * deta }
        }
        Polarization::TM => {
            let ec = eta * c;
            let den = ec + s;
            let gamma = (ec - s) / den;
            let dgamma_deta = c * (s * s * 2.0 - eta) / (s * den * den);
            FresnelEval { gamma, dgamma_dsigma: dgamma_deta * deta }
        }
    }
}

/// Complex reflection coefficient for one polarization.
pub fn fresnel_reflection(eps_real: f64, sigma: f64, f_c: f64, incidence_cos: f64, pol: Polarization) -> Result<Complex64> {
    check_domain(eps_real, sigma, incidence_cos)?;
    Ok(eval_unchecked(eps_real, sigma, f_c, incidence_cos, pol).gamma)
}

pub fn fresnel_with_derivative(
    eps_real: f64,
    sigma: f64,
    f_c: f64,
    incidence_cos: f64,
    pol: Polarization,
) -> Result<FresnelEval> {
    check_domain(eps_real, sigma, incidence_cos)?;
    Ok(eval_unchecked(eps_real, sigma, f_c, incidence_cos, pol))
}

pub(crate) fn polarizations(model: PolarizationModel) -> &'static [Polarization] {
    match model {
        PolarizationModel::UnpolarizedAverage => &[Polarization::TE, Polarization::TM],
        PolarizationModel::TeOnly => &[Polarization::TE],
        PolarizationModel::TmOnly => &[Polarization::TM],
    }
}

/// Power reflectance of one bounce and its derivative with respect to `sigma`.
pub(crate) fn bounce_weight(eps_real: f64, sigma: f64, f_c: f64, c: f64, model: PolarizationModel) -> (f64, f64) {
    let pols = polarizations(model);
    let (mut w, mut dw) = (0.0, 0.0);
    for &p in pols {
        let e = eval_unchecked(eps_real, sigma, f_c, c, p);
        w += e.gamma.norm_sqr();
        dw += 2.0 * (e.gamma.conj() * e.dgamma_dsigma).re;
    }
    let n = pols.len() as f64;
    (w / n, dw / n)
}

/// Power reflectance of one bounce under the given polarization model.
pub fn power_reflectance(eps_real: f64, sigma: f64, f_c: f64, incidence_cos: f64, model: PolarizationModel) -> Result<f64> {
    check_domain(eps_real, sigma, incidence_cos)?;
    Ok(bounce_weight(eps_real, sigma, f_c, incidence_cos, model).0)
}

pub(crate) fn gamma_pair(eps_real: f64, sigma: f64, f_c: f64, c: f64, pol: Polarization) -> (Complex64, Complex64) {
    let e = eval_unchecked(eps_real, sigma, f_c, c, pol);
    (e.gamma, e.dgamma_dsigma)
}
