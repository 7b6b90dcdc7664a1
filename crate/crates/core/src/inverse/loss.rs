use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_rt::{received_strength, received_strength_with_grad, RtConfig, TraceResult};
use crate::materials::SigmaVector;

/// Smallest admissible measured strength, W; also the NAE denominator floor.
pub const MEASUREMENT_FLOOR: f64 = 1e-15;

/// Measured strengths of one trial, W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    strengths: Vec<f64>,
}

impl Measurement {
    /// Raises entries below [`MEASUREMENT_FLOOR`] to the floor.
    pub fn new(strengths: Vec<f64>) -> Result<Measurement> {
        if let Some(v) = strengths.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!("measured strength {v} is not a finite non-negative power")));
        }
        Ok(Measurement { strengths: strengths.into_iter().map(|v| v.max(MEASUREMENT_FLOOR)).collect() })
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }
}

fn check_shapes(measured: &[Measurement], simulated: &[Vec<f64>]) -> Result<()> {
    if measured.len() != simulated.len() {
        return Err(Error::Dimension { expected: measured.len(), got: simulated.len() });
    }
    for (m, s) in measured.iter().zip(simulated) {
        if m.len() != s.len() {
            return Err(Error::Dimension { expected: m.len(), got: s.len() });
        }
    }
    Ok(())
}

/// Sum over trials of the per-trial mean normalized absolute error.
pub fn nae_loss(measured: &[Measurement], simulated: &[Vec<f64>]) -> Result<f64> {
    check_shapes(measured, simulated)?;
    let mut total = 0.0;
    for (m, s) in measured.iter().zip(simulated) {
        if m.is_empty() {
            continue;
        }
        let trial: f64 = m.strengths.iter().zip(s).map(|(r, q)| (r - q).abs() / r.max(MEASUREMENT_FLOOR)).sum();
        total += trial / m.len() as f64;
    }
    Ok(total)
}

/// `sign` with `sign(0) = 0`.
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Simulated strengths per trial, without sensitivities.
pub(crate) fn simulate(traces: &[TraceResult], sigma: &SigmaVector, eps: &[f64], config: &RtConfig) -> Result<Vec<Vec<f64>>> {
    traces.iter().map(|t| received_strength(t, sigma, eps, config)).collect()
}

/// Loss gradient given already simulated strengths (chain rule through the NAE).
pub(crate) fn gradient(
    traces: &[TraceResult],
    sigma: &SigmaVector,
    eps: &[f64],
    config: &RtConfig,
    measured: &[Measurement],
) -> Result<Vec<f64>> {
    if traces.len() != measured.len() {
        return Err(Error::Dimension { expected: measured.len(), got: traces.len() });
    }
    let mut grad = vec![0.0; sigma.len()];
    for (t, m) in traces.iter().zip(measured) {
        let g = received_strength_with_grad(t, sigma, eps, config)?;
        if g.strengths.len() != m.len() {
            return Err(Error::Dimension { expected: m.len(), got: g.strengths.len() });
        }
        let n = m.len() as f64;
        for ((r, q), row) in m.strengths.iter().zip(&g.strengths).zip(&g.jacobian) {
            let r = r.max(MEASUREMENT_FLOOR);
            let w = -sign(r - q) / (n * r);
            if w != 0.0 {
                for (acc, d) in grad.iter_mut().zip(row) {
                    *acc += w * d;
                }
            }
        }
    }
    Ok(grad)
}

pub fn loss_and_grad(
    traces: &[TraceResult],
    sigma: &SigmaVector,
    eps: &[f64],
    config: &RtConfig,
    measured: &[Measurement],
) -> Result<(f64, Vec<f64>)> {
    let sim = simulate(traces, sigma, eps, config)?;
    let loss = nae_loss(measured, &sim)?;
    Ok((loss, gradient(traces, sigma, eps, config, measured)?))
}

/// Mean relative error against the true conductivities.
pub fn mre(sigma: &SigmaVector, truth: &SigmaVector) -> Result<f64> {
    if sigma.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), got: sigma.len() });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = sigma.values().iter().zip(truth.values()).map(|(a, b)| (a - b).abs() / b).sum();
    Ok(s / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(v: &[f64]) -> Measurement {
        Measurement::new(v.to_vec()).unwrap()
    }

    #[test]
    fn nae_examples() {
        assert_eq!(nae_loss(&[meas(&[1.0, 2.0])], &[vec![1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(nae_loss(&[meas(&[2.0])], &[vec![1.0]]).unwrap(), 0.5);
        // Trials are summed, not averaged.
        assert_eq!(nae_loss(&[meas(&[2.0]), meas(&[2.0])], &[vec![1.0], vec![1.0]]).unwrap(), 1.0);
        assert!(nae_loss(&[meas(&[2.0])], &[vec![1.0, 1.0]]).is_err());
        assert!(nae_loss(&[meas(&[2.0])], &[]).is_err());
    }

    #[test]
    fn floor_applies() {
        let m = meas(&[0.0]);
        assert_eq!(m.strengths(), &[MEASUREMENT_FLOOR]);
        assert!(Measurement::new(vec![-1.0]).is_err());
        assert!(Measurement::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn mre_examples() {
        let t = SigmaVector::clamped(vec![0.02, 0.5]);
        assert_eq!(mre(&t, &t).unwrap(), 0.0);
        let s = SigmaVector::clamped(vec![0.022, 0.55]);
        assert!((mre(&s, &t).unwrap() - 0.1).abs() < 1e-12);
        let s = SigmaVector::clamped(vec![0.024, 0.45]);
        assert!((mre(&s, &t).unwrap() - 0.15).abs() < 1e-12);
        assert!(mre(&s, &SigmaVector::clamped(vec![1.0])).is_err());
    }
}
