use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{Aggregation, RtConfig};
use super::fresnel::{bounce_weight, gamma_pair, polarizations};
use super::trace::{PathRecord, TraceResult};
use crate::error::{Error, Result};
use crate::materials::SigmaVector;

/// Received strengths and their sensitivities to every slot conductivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradEval {
    /// Watts per receiver.
    pub strengths: Vec<f64>,
    /// `jacobian[n][k]` = d strength_n / d sigma_k, W per S/m.
    pub jacobian: Vec<Vec<f64>>,
}

fn check_dims(trace: &TraceResult, sigma: &SigmaVector, eps: &[f64]) -> Result<()> {
    if sigma.len() != trace.num_slots {
        return Err(Error::Dimension { expected: trace.num_slots, got: sigma.len() });
    }
    if eps.len() != trace.num_slots {
        return Err(Error::Dimension { expected: trace.num_slots, got: eps.len() });
    }
    Ok(())
}

/// Spreading loss of the path without any reflection factor.
fn free_space_power(path: &PathRecord, config: &RtConfig) -> f64 {
    config.friis(path.total_length)
}

pub fn received_strength(trace: &TraceResult, sigma: &SigmaVector, eps: &[f64], config: &RtConfig) -> Result<Vec<f64>> {
    check_dims(trace, sigma, eps)?;
    let s = sigma.values();
    match config.aggregation {
        Aggregation::Incoherent => {
            let mut out = vec![0.0; trace.num_receivers];
            for p in &trace.paths {
                let w: f64 = p
                    .interactions
                    .iter()
                    .map(|i| {
                        bounce_weight(eps[i.material_slot], s[i.material_slot], config.f_c, i.incidence_cos, config.polarization_model).0
                    })
                    .product();
                out[p.receiver_index] += free_space_power(p, config) * w;
            }
            Ok(out)
        }
        Aggregation::Coherent => Ok(coherent(trace, s, eps, config, false).strengths),
    }
}

pub fn received_strength_with_grad(trace: &TraceResult, sigma: &SigmaVector, eps: &[f64], config: &RtConfig) -> Result<GradEval> {
    check_dims(trace, sigma, eps)?;
    let s = sigma.values();
    Ok(match config.aggregation {
        Aggregation::Incoherent => incoherent_with_grad(trace, s, eps, config),
        Aggregation::Coherent => coherent(trace, s, eps, config, true),
    })
}

fn incoherent_with_grad(trace: &TraceResult, s: &[f64], eps: &[f64], config: &RtConfig) -> GradEval {
    let k_slots = trace.num_slots;
    let mut strengths = vec![0.0; trace.num_receivers];
    let mut jacobian = vec![vec![0.0; k_slots]; trace.num_receivers];
    let mut w = Vec::new();
    let mut dw = Vec::new();
    let mut suffix = Vec::new();
    for p in &trace.paths {
        let base = free_space_power(p, config);
        w.clear();
        dw.clear();
        for i in &p.interactions {
            let (a, b) = bounce_weight(eps[i.material_slot], s[i.material_slot], config.f_c, i.incidence_cos, config.polarization_model);
            w.push(a);
            dw.push(b);
        }
        // Product rule via prefix/suffix products; no division by a weight that may vanish.
        let m = w.len();
        suffix.clear();
        suffix.resize(m + 1, 1.0);
        for j in (0..m).rev() {
            suffix[j] = suffix[j + 1] * w[j];
        }
        strengths[p.receiver_index] += base * suffix[0];
        let row = &mut jacobian[p.receiver_index];
        let mut prefix = 1.0;
        for (j, i) in p.interactions.iter().enumerate() {
            row[i.material_slot] += base * prefix * dw[j] * suffix[j + 1];
            prefix *= w[j];
        }
    }
    GradEval { strengths, jacobian }
}

fn coherent(trace: &TraceResult, s: &[f64], eps: &[f64], config: &RtConfig, with_grad: bool) -> GradEval {
    let k_slots = trace.num_slots;
    let n_rx = trace.num_receivers;
    let pols = polarizations(config.polarization_model);
    let lambda = config.wavelength();
    let mut strengths = vec![0.0; n_rx];
    let mut jacobian = vec![vec![0.0; k_slots]; n_rx];
    for &pol in pols {
        let mut amp = vec![Complex64::new(0.0, 0.0); n_rx];
        let mut damp = vec![vec![Complex64::new(0.0, 0.0); k_slots]; n_rx];
        for p in &trace.paths {
            let mag = free_space_power(p, config).sqrt();
            let phase = Complex64::from_polar(mag, -2.0 * std::f64::consts::PI * p.total_length / lambda);
            let (g, dg): (Vec<Complex64>, Vec<Complex64>) = p
                .interactions
                .iter()
                .map(|i| gamma_pair(eps[i.material_slot], s[i.material_slot], config.f_c, i.incidence_cos, pol))
                .unzip();
            let m = g.len();
            let mut suffix = vec![Complex64::new(1.0, 0.0); m + 1];
            for j in (0..m).rev() {
                suffix[j] = suffix[j + 1] * g[j];
            }
            amp[p.receiver_index] += phase * suffix[0];
            if with_grad {
                let mut prefix = Complex64::new(1.0, 0.0);
                for (j, i) in p.interactions.iter().enumerate() {
                    damp[p.receiver_index][i.material_slot] += phase * prefix * dg[j] * suffix[j + 1];
                    prefix *= g[j];
                }
            }
        }
        let scale = 1.0 / pols.len() as f64;
        for n in 0..n_rx {
            strengths[n] += scale * amp[n].norm_sqr();
            if with_grad {
                for k in 0..k_slots {
                    jacobian[n][k] += scale * 2.0 * (amp[n].conj() * damp[n][k]).re;
                }
            }
        }
    }
    GradEval { strengths, jacobian }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_rt::{trace_paths, Interaction};
    use crate::geometry::{canonical_scene, Vec3};
    use crate::inverse::TrialConfig;
    use crate::materials::{slot_permittivities, MaterialTable};

    fn synthetic(slots: &[usize]) -> TraceResult {
        let interactions =
            slots.iter().enumerate().map(|(j, &k)| Interaction { surface_id: j, material_slot: k, incidence_cos: 0.3 + 0.2 * j as f64 }).collect();
        TraceResult {
            num_slots: 5,
            num_receivers: 1,
            paths: vec![PathRecord {
                receiver_index: 0,
                interactions,
                total_length: 7.0,
                segment_count: slots.len() + 1,
                vertices: vec![],
            }],
        }
    }

    #[test]
    fn friis_line_of_sight() {
        let cfg = RtConfig::default();
        let t = synthetic(&[]);
        let t = TraceResult { paths: vec![PathRecord { total_length: 3.0, ..t.paths[0].clone() }], ..t };
        let r = received_strength(&t, &SigmaVector::clamped(vec![0.1; 5]), &[3.0; 5], &cfg).unwrap();
        let lambda = 299_792_458.0 / 3.5e9;
        let expect = cfg.p_tx * (lambda / (4.0 * std::f64::consts::PI * 3.0)).powi(2);
        assert!((r[0] - expect).abs() <= 1e-12 * expect);
        let g = received_strength_with_grad(&t, &SigmaVector::clamped(vec![0.1; 5]), &[3.0; 5], &cfg).unwrap();
        assert!(g.jacobian[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn untouched_slots_have_zero_sensitivity() {
        let t = synthetic(&[3, 3]);
        let g = received_strength_with_grad(&t, &SigmaVector::clamped(vec![0.05; 5]), &[4.0; 5], &RtConfig::default()).unwrap();
        for (k, &v) in g.jacobian[0].iter().enumerate() {
            if k == 3 {
                assert!(v != 0.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let t = synthetic(&[1]);
        assert!(received_strength(&t, &SigmaVector::clamped(vec![0.1; 4]), &[3.0; 5], &RtConfig::default()).is_err());
        assert!(received_strength(&t, &SigmaVector::clamped(vec![0.1; 5]), &[3.0; 4], &RtConfig::default()).is_err());
    }

    #[test]
    fn grad_and_plain_forward_agree() {
        let scene = canonical_scene();
        let table = MaterialTable::itu();
        let eps = slot_permittivities(&table, &scene.material_names).unwrap();
        let trial = TrialConfig { tx: Vec3::new(0.5, 0.5, 1.5), rx: vec![Vec3::new(-2.0, 1.0, 1.0), Vec3::new(2.0, -2.0, 2.0)] };
        let cfg = RtConfig::default();
        let t = trace_paths(&scene, &trial, &cfg).unwrap();
        let sigma = SigmaVector::clamped(vec![0.03, 0.02, 0.04, 0.05, 0.03, 0.02, 0.1, 0.02, 0.06]);
        for agg in [Aggregation::Incoherent, Aggregation::Coherent] {
            let cfg = RtConfig { aggregation: agg, ..cfg.clone() };
            let a = received_strength(&t, &sigma, &eps, &cfg).unwrap();
            let b = received_strength_with_grad(&t, &sigma, &eps, &cfg).unwrap();
            for (x, y) in a.iter().zip(&b.strengths) {
                assert!((x - y).abs() <= 1e-14 * x.abs());
            }
        }
    }

    #[test]
    fn coherent_gradient_matches_finite_difference() {
        let scene = canonical_scene();
        let table = MaterialTable::itu();
        let eps = slot_permittivities(&table, &scene.material_names).unwrap();
        let trial = TrialConfig { tx: Vec3::new(0.5, 0.5, 1.5), rx: vec![Vec3::new(-2.0, 1.0, 1.0)] };
        let cfg = RtConfig { aggregation: Aggregation::Coherent, ..RtConfig::default() };
        let t = trace_paths(&scene, &trial, &cfg).unwrap();
        let base = vec![0.5, 0.2, 0.4, 0.5, 0.3, 0.2, 1.0, 0.2, 0.6];
        let g = received_strength_with_grad(&t, &SigmaVector::clamped(base.clone()), &eps, &cfg).unwrap();
        for k in 0..9 {
            let h = base[k] * 1e-4;
            let mut up = base.clone();
            up[k] += h;
            let mut dn = base.clone();
            dn[k] -= h;
            let fu = received_strength(&t, &SigmaVector::clamped(up), &eps, &cfg).unwrap()[0];
            let fdn = received_strength(&t, &SigmaVector::clamped(dn), &eps, &cfg).unwrap()[0];
            let fd = (fu - fdn) / (2.0 * h);
            let a = g.jacobian[0][k];
            let scale = g.jacobian[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((fd - a).abs() <= 1e-4 * fd.abs().max(1e-6 * scale), "slot {k}: {a} vs {fd}");
        }
    }
}
