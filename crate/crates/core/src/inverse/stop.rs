use serde::{Deserialize, Serialize};

use super::record::EstimationTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCriteria {
    /// Loss-change tolerance.
    pub alpha: f64,
    /// Per-slot conductivity-change tolerance, S/m.
    pub beta: f64,
    pub patience_j: usize,
    pub max_iter: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria { alpha: 1e-5, beta: 1e-4, patience_j: 50, max_iter: 1000 }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.beta > 0.0 && self.patience_j > 0 && self.max_iter > 0 {
            Ok(())
        } else {
            Err(Error::Config(format!("stop criteria must be positive: {self:?}")))
        }
    }
}

/// Loss and every conductivity stayed within tolerance over the last `J`
/// consecutive pairs of records.
pub fn window_converged(trace: &EstimationTrace, criteria: &StopCriteria) -> bool {
    let j = criteria.patience_j;
    let recs = &trace.records;
    if recs.len() < j + 1 {
        return false;
    }
    recs[recs.len() - j - 1..].windows(2).all(|w| {
        (w[1].loss - w[0].loss).abs() <= criteria.alpha
            && w[0].sigma.iter().zip(&w[1].sigma).all(|(a, b)| (b - a).abs() <= criteria.beta)
    })
}

/// The loss half of [`window_converged`] alone: loss changes stayed within
/// `alpha` over the last `J` pairs, whatever the conductivities did.
pub fn loss_window_stable(trace: &EstimationTrace, criteria: &StopCriteria) -> bool {
    let j = criteria.patience_j;
    let recs = &trace.records;
    recs.len() > j && recs[recs.len() - j - 1..].windows(2).all(|w| (w[1].loss - w[0].loss).abs() <= criteria.alpha)
}

pub fn check_stop(trace: &EstimationTrace, criteria: &StopCriteria) -> bool {
    trace.records.len() >= criteria.max_iter || window_converged(trace, criteria)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::IterRecord;
    use proptest::prelude::*;

    fn trace(losses: &[f64], sigmas: &[f64]) -> EstimationTrace {
        let mut t = EstimationTrace::new(1);
        for (i, (&l, &s)) in losses.iter().zip(sigmas).enumerate() {
            t.records.push(IterRecord::new(i + 1, l, vec![s], None));
        }
        t
    }

    fn crit(j: usize) -> StopCriteria {
        StopCriteria { patience_j: j, ..StopCriteria::default() }
    }

    #[test]
    fn examples() {
        let c = crit(5);
        assert!(check_stop(&trace(&[1.0; 6], &[0.1; 6]), &c));
        assert!(!check_stop(&trace(&[1.0; 5], &[0.1; 5]), &c));
        let mut l = [1.0; 6];
        l[3] += 10.0 * c.alpha;
        assert!(!check_stop(&trace(&l, &[0.1; 6]), &c));
        let mut s = [0.1; 6];
        s[2] += 2.0 * c.beta;
        assert!(!check_stop(&trace(&[1.0; 6], &s), &c));
        assert!(loss_window_stable(&trace(&[1.0; 6], &s), &c));
        assert!(!loss_window_stable(&trace(&l, &[0.1; 6]), &c));
        // Only the last J+1 records matter.
        let mut l = [1.0; 8];
        l[0] = 5.0;
        assert!(check_stop(&trace(&l, &[0.1; 8]), &c));
    }

    #[test]
    fn max_iter_forces_stop() {
        let c = StopCriteria { max_iter: 3, ..crit(50) };
        assert!(check_stop(&trace(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.3]), &c));
    }

    proptest! {
        #[test]
        fn relaxing_tolerances_never_unstops(
            losses in prop::collection::vec(0.0f64..1e-3, 4..12),
            sigmas in prop::collection::vec(0.0f64..1e-3, 12),
            scale in 1.0f64..100.0,
        ) {
            let n = losses.len();
            let t = trace(&losses, &sigmas[..n]);
            let tight = StopCriteria { alpha: 1e-4, beta: 1e-4, patience_j: 3, max_iter: 1000 };
            let loose = StopCriteria { alpha: tight.alpha * scale, beta: tight.beta * scale, ..tight };
            if check_stop(&t, &tight) {
                prop_assert!(check_stop(&t, &loose));
            }
        }
    }
}
