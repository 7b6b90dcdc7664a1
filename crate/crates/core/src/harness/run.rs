use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Engine, ExperimentConfig, InitStrategy, PlacementStrategy};
use super::study::ITERATIONS_THRESHOLD;
use crate::error::{Error, Result};
use crate::forward_rt::{received_strength, trace_paths, RtConfig, TraceResult};
use crate::geometry::{scene_to_xml, Scene};
use crate::inverse::{estimate, loss_window_stable, mre, EstimationTrace, InverseProblem, Measurement, StopReason};
use crate::materials::{perturb_ground_truth, slot_permittivities, GroundTruth, MaterialTable, SigmaVector};
use crate::placement::{greedy_placement, random_placement, vlm_placement, CandidateGrid, PlacementPlan};
use crate::priors::{itu_init, random_init, uniform_init, vlm_init, PriorInit};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub scene_build_s: f64,
    /// One-off path tracing before the loop.
    pub trace_s: f64,
    pub forward_per_iter_s: f64,
    pub gradient_per_iter_s: f64,
    pub update_per_iter_s: f64,
}

impl TimingBreakdown {
    pub fn per_iter_s(&self) -> f64 {
        self.forward_per_iter_s + self.gradient_per_iter_s + self.update_per_iter_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub initial_mre: f64,
    pub final_mre: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Loss changes stayed within alpha over the final window.
    pub loss_stable: bool,
    /// Loss settled but the MRE is over 10x the configured reference.
    pub under_determined: bool,
    pub iterations_to_threshold: Option<usize>,
    /// Scene build, tracing, measurement synthesis and the loop; excludes planning.
    pub total_s: f64,
    pub plan_s: f64,
    pub num_paths: usize,
    pub trace_path: Option<PathBuf>,
    pub timing: TimingBreakdown,
    pub sigma_truth: Vec<f64>,
    pub sigma_init: Vec<f64>,
    pub sigma_final: Vec<f64>,
    pub init_sources: Vec<String>,
}

impl RunReport {
    /// `"loss converged, parameters not identified"` when flagged.
    pub fn notes(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.under_determined {
            v.push("loss converged, parameters not identified".to_string());
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub trace: EstimationTrace,
    pub plan: PlacementPlan,
}

/// Scene, table, truth, prior and permittivities for one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scene: Scene,
    pub scene_build_s: f64,
    pub table: MaterialTable,
    pub rt: RtConfig,
    pub eps: Vec<f64>,
    pub truth: GroundTruth,
    pub prior: PriorInit,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Prepared> {
        let (scene, scene_build_s) = config.scene.build()?;
        let table = config.table()?;
        let rt = config.rt_config();
        let f_ghz = rt.f_ghz();
        let eps = slot_permittivities(&table, &scene.material_names)?;
        let truth = perturb_ground_truth(&table, &scene.material_names, f_ghz, config.seeds.gt)?;
        let k = scene.num_slots();
        let prior = match config.init {
            InitStrategy::Itu => itu_init(&table, &scene.material_names, f_ghz)?,
            InitStrategy::Random => random_init(k, config.seeds.init)?,
            InitStrategy::Uniform => uniform_init(&table, k, f_ghz)?,
            InitStrategy::Vlm => {
                let mut client = config.vlm.client(config.seeds.init)?;
                vlm_init(config.vlm.image.as_deref(), &table, &mut client, &scene.material_names, f_ghz)?
            }
            InitStrategy::Truth => PriorInit {
                sigma_init: truth.sigma_hat.clone(),
                sources: vec!["truth".into(); k],
                provenance: "ground truth".into(),
            },
        };
        Ok(Prepared { scene, scene_build_s, table, rt, eps, truth, prior })
    }

    /// Measurement plan for this configuration.
    ///
    /// Greedy placement always scores designs at the table prior of the
    /// scene's labels, so arms that differ only in initialization share it.
    pub fn plan(&self, config: &ExperimentConfig) -> Result<PlacementPlan> {
        let (n, m) = (config.n, config.m);
        match config.placement {
            PlacementStrategy::Random => random_placement(&self.scene, n, m, config.seeds.place),
            PlacementStrategy::Greedy => {
                let prior = itu_init(&self.table, &self.scene.material_names, self.rt.f_ghz())?;
                let grid = CandidateGrid::default_for(&self.scene)?;
                greedy_placement(&self.scene, &prior.sigma_init, &self.eps, &self.rt, &grid, n, m)
            }
            PlacementStrategy::Vlm => {
                let mut client = config.vlm.client(config.seeds.place)?;
                vlm_placement(&scene_to_xml(&self.scene), config.vlm.image.as_deref(), n, m, &mut client)
            }
        }
    }
}

fn with_context<T>(config: &ExperimentConfig, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Run { context: config.label(), source: Box::new(e) })
}

/// Runs one experiment end to end and writes its files when an output directory is set.
pub fn run_estimation(config: &ExperimentConfig) -> Result<RunReport> {
    run_experiment(config, None).map(|o| o.report)
}

/// Like [`run_estimation`], optionally with a fixed plan instead of planning afresh.
pub fn run_experiment(config: &ExperimentConfig, plan: Option<&PlacementPlan>) -> Result<RunOutcome> {
    with_context(config, run_inner(config, plan))
}

fn run_inner(config: &ExperimentConfig, fixed_plan: Option<&PlacementPlan>) -> Result<RunOutcome> {
    config.validate()?;
    let prep = Prepared::new(config)?;
    let t_plan = Instant::now();
    let plan = match fixed_plan {
        Some(p) => p.clone(),
        None => prep.plan(config)?,
    };
    let plan_s = if fixed_plan.is_some() { 0.0 } else { t_plan.elapsed().as_secs_f64() };

    let t_setup = Instant::now();
    let traces = plan.trials.iter().map(|t| trace_paths(&prep.scene, t, &prep.rt)).collect::<Result<Vec<_>>>()?;
    let trace_s = t_setup.elapsed().as_secs_f64();
    let measured = synthesize(&traces, &prep.truth.sigma_hat, &prep.eps, &prep.rt, config.noise_rel, config.seeds.gt)?;
    let num_paths = traces.iter().map(|t| t.paths.len()).sum();
    let mut problem = InverseProblem::from_traces(traces, prep.eps.clone(), prep.rt.clone(), measured)?;
    if config.engine == Engine::Retrace {
        problem = problem.with_retrace(&prep.scene, &plan.trials);
    }
    let setup_s = t_setup.elapsed().as_secs_f64();

    let t_loop = Instant::now();
    let truth = &prep.truth.sigma_hat;
    let (sigma, trace) = estimate(&problem, &prep.prior.sigma_init, &config.options, &config.stop, Some(truth))?;
    let loop_s = t_loop.elapsed().as_secs_f64();

    let (f, g, u) = trace.mean_phase_times();
    let timing = TimingBreakdown {
        scene_build_s: prep.scene_build_s,
        trace_s,
        forward_per_iter_s: f,
        gradient_per_iter_s: g,
        update_per_iter_s: u,
    };
    let final_mre = mre(&sigma, truth)?;
    let loss_stable = loss_window_stable(&trace, &config.stop);
    let report = RunReport {
        config: config.clone(),
        initial_mre: mre(&prep.prior.sigma_init, truth)?,
        final_mre,
        final_loss: trace.final_loss().unwrap_or(f64::NAN),
        iterations: trace.iterations(),
        stop_reason: trace.stop_reason.unwrap_or(StopReason::MaxIter),
        loss_stable,
        under_determined: config.reference_mre.is_some_and(|r| loss_stable && final_mre > 10.0 * r),
        iterations_to_threshold: trace.iterations_to_mre(ITERATIONS_THRESHOLD),
        total_s: prep.scene_build_s + setup_s + loop_s,
        plan_s,
        num_paths,
        trace_path: None,
        timing,
        sigma_truth: truth.values().to_vec(),
        sigma_init: prep.prior.sigma_init.values().to_vec(),
        sigma_final: sigma.values().to_vec(),
        init_sources: prep.prior.sources.clone(),
    };
    let mut outcome = RunOutcome { report, trace, plan };
    if let Some(dir) = &config.output_dir {
        let path = write_outputs(dir, &outcome, &prep.prior)?;
        outcome.report.trace_path = Some(path);
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&outcome.report)?)?;
    }
    Ok(outcome)
}

/// Strengths at the ground truth, optionally with relative Gaussian noise.
fn synthesize(
    traces: &[TraceResult],
    truth: &SigmaVector,
    eps: &[f64],
    rt: &RtConfig,
    noise_rel: Option<f64>,
    gt_seed: u64,
) -> Result<Vec<Measurement>> {
    let mut rng = ChaCha8Rng::seed_from_u64(gt_seed);
    // A separate stream keeps noise draws apart from the truth perturbation.
    rng.set_stream(1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    traces
        .iter()
        .map(|t| {
            let mut r = received_strength(t, truth, eps, rt)?;
            if let Some(s) = noise_rel {
                for v in &mut r {
                    *v = (*v * (1.0 + s * normal.sample(&mut rng))).max(0.0);
                }
            }
            Measurement::new(r)
        })
        .collect()
}

fn write_outputs(dir: &Path, outcome: &RunOutcome, prior: &PriorInit) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let report = &outcome.report;
    fs::write(dir.join("config.json"), report.config.to_json()?)?;
    let trace_path = dir.join("trace.csv");
    outcome.trace.write_csv(fs::File::create(&trace_path)?)?;
    fs::write(dir.join("plan.json"), outcome.plan.to_json()?)?;
    fs::write(dir.join("prior.json"), prior.to_json()?)?;
    let mut loss = String::from("# iter loss mre\n");
    for r in &outcome.trace.records {
        loss.push_str(&format!("{} {:.12e} {:.12e}\n", r.iter, r.loss, r.mre.unwrap_or(f64::NAN)));
    }
    fs::write(dir.join("convergence.dat"), loss)?;
    let mut sig = String::from("# slot truth init final\n");
    for k in 0..report.sigma_truth.len() {
        sig.push_str(&format!(
            "{} {:.12e} {:.12e} {:.12e}\n",
            k + 1,
            report.sigma_truth[k],
            report.sigma_init[k],
            report.sigma_final[k]
        ));
    }
    fs::write(dir.join("sigma.dat"), sig)?;
    Ok(trace_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::StopCriteria;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            placement: PlacementStrategy::Random,
            n: 3,
            m: 1,
            stop: StopCriteria { max_iter: 120, ..StopCriteria::default() },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn truth_init_is_a_fixed_point() {
        let c = ExperimentConfig { init: InitStrategy::Truth, ..small() };
        let r = run_estimation(&c).unwrap();
        assert!(r.iterations <= c.stop.patience_j + 1, "{}", r.iterations);
        assert_eq!(r.final_mre, 0.0);
        assert_eq!(r.stop_reason, StopReason::Converged);
    }

    #[test]
    fn total_time_matches_phase_sum() {
        let out = run_experiment(&small(), None).unwrap();
        let r = &out.report;
        let loop_sum: f64 = out.trace.records.iter().map(|x| x.t_forward_s + x.t_grad_s + x.t_update_s).sum();
        let phases = r.timing.scene_build_s + r.timing.trace_s + loop_sum;
        assert!((r.total_s - phases).abs() <= 0.1 * r.total_s, "total {} vs phases {}", r.total_s, phases);
    }

    #[test]
    fn seeds_are_independent() {
        let base = Prepared::new(&small()).unwrap();
        let c = small();
        let plan = base.plan(&c).unwrap();
        let moved_place = ExperimentConfig { seeds: crate::harness::Seeds { place: 9, ..c.seeds }, ..c.clone() };
        let p = Prepared::new(&moved_place).unwrap();
        assert_eq!(p.truth.sigma_hat, base.truth.sigma_hat);
        assert_ne!(p.plan(&moved_place).unwrap().trials, plan.trials);

        let moved_init = ExperimentConfig { init: InitStrategy::Random, seeds: crate::harness::Seeds { init: 9, ..c.seeds }, ..c.clone() };
        let q = Prepared::new(&moved_init).unwrap();
        assert_eq!(q.truth.sigma_hat, base.truth.sigma_hat);
        assert_eq!(q.plan(&moved_init).unwrap().trials, plan.trials);

        let moved_gt = ExperimentConfig { seeds: crate::harness::Seeds { gt: 9, ..c.seeds }, ..c };
        let g = Prepared::new(&moved_gt).unwrap();
        assert_ne!(g.truth.sigma_hat, base.truth.sigma_hat);
        assert_eq!(g.plan(&moved_gt).unwrap().trials, plan.trials);
    }

    #[test]
    fn noise_stays_off_unless_asked() {
        let a = run_experiment(&small(), None).unwrap();
        let b = run_experiment(&ExperimentConfig { noise_rel: Some(0.05), ..small() }, None).unwrap();
        assert_ne!(a.trace.records[0].loss, b.trace.records[0].loss);
        let c = run_experiment(&small(), None).unwrap();
        assert_eq!(a.trace.records[0].loss, c.trace.records[0].loss);
    }

    #[test]
    fn retrace_engine_gives_identical_numbers() {
        let a = run_experiment(&small(), None).unwrap();
        let b = run_experiment(&ExperimentConfig { engine: Engine::Retrace, stop: StopCriteria { max_iter: 20, ..small().stop }, ..small() }, None)
            .unwrap();
        for (x, y) in a.trace.records.iter().zip(&b.trace.records) {
            assert_eq!((x.loss, &x.sigma), (y.loss, &y.sigma));
        }
    }

    #[test]
    fn errors_carry_config_context() {
        let c = ExperimentConfig { scene: crate::harness::SceneSource::Generated { k: 500, seed: 0 }, ..small() };
        let e = run_estimation(&c).unwrap_err().to_string();
        assert!(e.contains("Generated"), "{e}");
    }
}
