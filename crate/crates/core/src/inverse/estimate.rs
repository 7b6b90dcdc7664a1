use std::time::Instant;

use super::adam::{adam_step, AdamState};
use super::loss::{gradient, mre, nae_loss, simulate, Measurement};
use super::record::{EstimationTrace, IterRecord, StopReason};
use super::stop::{window_converged, StopCriteria};
use super::{EstimateOptions, TrialConfig};
use crate::error::{Error, Result};
use crate::forward_rt::{trace_paths, RtConfig, TraceResult};
use crate::geometry::Scene;
use crate::materials::SigmaVector;

/// Traced geometry, permittivities and measurements for one estimation run.
///
/// Paths do not depend on conductivity, so they are traced once here and
/// reused by every iteration.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub traces: Vec<TraceResult>,
    pub eps: Vec<f64>,
    pub config: RtConfig,
    pub measured: Vec<Measurement>,
    /// Wall-clock seconds spent tracing.
    pub trace_s: f64,
    retrace: Option<Box<(Scene, Vec<TrialConfig>)>>,
}

impl InverseProblem {
    pub fn new(scene: &Scene, trials: &[TrialConfig], eps: Vec<f64>, config: RtConfig, measured: Vec<Measurement>) -> Result<Self> {
        let start = Instant::now();
        let traces = trials.iter().map(|t| trace_paths(scene, t, &config)).collect::<Result<Vec<_>>>()?;
        let trace_s = start.elapsed().as_secs_f64();
        Self::from_traces(traces, eps, config, measured).map(|p| InverseProblem { trace_s, ..p })
    }

    pub fn from_traces(traces: Vec<TraceResult>, eps: Vec<f64>, config: RtConfig, measured: Vec<Measurement>) -> Result<Self> {
        if traces.len() != measured.len() {
            return Err(Error::Dimension { expected: traces.len(), got: measured.len() });
        }
        for (t, m) in traces.iter().zip(&measured) {
            if t.num_receivers != m.len() {
                return Err(Error::Dimension { expected: t.num_receivers, got: m.len() });
            }
            if t.num_slots != eps.len() {
                return Err(Error::Dimension { expected: t.num_slots, got: eps.len() });
            }
        }
        Ok(InverseProblem { traces, eps, config, measured, trace_s: 0.0, retrace: None })
    }

    /// Makes [`estimate`] trace the scene again inside every forward pass.
    ///
    /// Results are unchanged because tracing is deterministic; only the
    /// timing reflects an engine that rebuilds paths each iteration.
    pub fn with_retrace(mut self, scene: &Scene, trials: &[TrialConfig]) -> Self {
        self.retrace = Some(Box::new((scene.clone(), trials.to_vec())));
        self
    }

    pub fn retraces(&self) -> bool {
        self.retrace.is_some()
    }

    pub fn num_slots(&self) -> usize {
        self.eps.len()
    }

    pub fn simulate(&self, sigma: &SigmaVector) -> Result<Vec<Vec<f64>>> {
        simulate(&self.traces, sigma, &self.eps, &self.config)
    }

    pub fn loss(&self, sigma: &SigmaVector) -> Result<f64> {
        nae_loss(&self.measured, &self.simulate(sigma)?)
    }

    pub fn loss_and_grad(&self, sigma: &SigmaVector) -> Result<(f64, Vec<f64>)> {
        super::loss_and_grad(&self.traces, sigma, &self.eps, &self.config, &self.measured)
    }
}

/// Runs Adam from `sigma_init` until the stop rule fires.
///
/// `truth` is only used to log MRE; it never influences an iterate.
pub fn estimate(
    problem: &InverseProblem,
    sigma_init: &SigmaVector,
    options: &EstimateOptions,
    criteria: &StopCriteria,
    truth: Option<&SigmaVector>,
) -> Result<(SigmaVector, EstimationTrace)> {
    options.validate()?;
    criteria.validate()?;
    let k = problem.num_slots();
    if sigma_init.len() != k {
        return Err(Error::Dimension { expected: k, got: sigma_init.len() });
    }
    let mut sigma = sigma_init.clone();
    let mut state = AdamState::new(k);
    let mut trace = EstimationTrace::new(k);

    for i in 1..=criteria.max_iter {
        let t0 = Instant::now();
        let fresh;
        let traces: &[TraceResult] = match &problem.retrace {
            Some(g) => {
                let (scene, trials) = &**g;
                fresh = trials.iter().map(|t| trace_paths(scene, t, &problem.config)).collect::<Result<Vec<_>>>()?;
                &fresh
            }
            None => &problem.traces,
        };
        let sim = simulate(traces, &sigma, &problem.eps, &problem.config)?;
        let loss = nae_loss(&problem.measured, &sim)?;
        let t_forward = t0.elapsed().as_secs_f64();
        if !loss.is_finite() {
            return Err(Error::NonFinite { iter: i, sigma: sigma.values().to_vec() });
        }
        let m = truth.map(|t| mre(&sigma, t)).transpose()?;
        let mut rec = IterRecord::new(i, loss, sigma.values().to_vec(), m);
        rec.t_forward_s = t_forward;
        trace.records.push(rec);

        if window_converged(&trace, criteria) {
            trace.stop_reason = Some(StopReason::Converged);
            break;
        }
        if i == criteria.max_iter {
            trace.stop_reason = Some(StopReason::MaxIter);
            break;
        }

        let t1 = Instant::now();
        let grad = gradient(traces, &sigma, &problem.eps, &problem.config, &problem.measured)?;
        let t_grad = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        sigma = adam_step(&sigma, &mut state, &grad, options)?;
        let t_update = t2.elapsed().as_secs_f64();
        let last = trace.records.last_mut().expect("record pushed above");
        last.t_grad_s = t_grad;
        last.t_update_s = t_update;
    }
    Ok((sigma, trace))
}
