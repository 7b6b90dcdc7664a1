use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Engine, ExperimentConfig, InitStrategy, PlacementStrategy, SceneSource};
use super::run::{run_experiment, Prepared, RunReport};
use super::table::{fmt, median, parse_num};
use crate::error::{Error, Result};
use crate::inverse::mre;
use crate::placement::PlacementPlan;

/// MRE level used for iterations-to-threshold comparisons.
pub const ITERATIONS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    Depth,
    URay,
    K,
    M,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<SweepAxis> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "n" => SweepAxis::N,
            "depth" | "d" => SweepAxis::Depth,
            "rays" | "u_ray" => SweepAxis::URay,
            "k" => SweepAxis::K,
            "m" => SweepAxis::M,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::Depth => "depth",
            SweepAxis::URay => "rays",
            SweepAxis::K => "k",
            SweepAxis::M => "m",
        }
    }

    /// Copy of `config` with this axis set to `value`.
    pub fn apply(self, config: &ExperimentConfig, value: usize) -> ExperimentConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::N => c.n = value,
            SweepAxis::M => c.m = value,
            SweepAxis::Depth => c.rt.depth = Some(value),
            SweepAxis::URay => c.rt.u_ray = Some(value),
            SweepAxis::K => {
                let seed = match c.scene {
                    SceneSource::Generated { seed, .. } => seed,
                    _ => 0,
                };
                c.scene = SceneSource::Generated { k: value, seed };
            }
        }
        c
    }

    /// Axes that leave scene and plan shape alone reuse one plan for every cell.
    fn shares_plan(self) -> bool {
        matches!(self, SweepAxis::Depth | SweepAxis::URay)
    }
}

/// One row of a sweep table: medians over repetitions, mean timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub value: usize,
    pub mre_pct: f64,
    pub time_s: f64,
    pub iterations: f64,
    pub per_iter_s: f64,
    pub forward_per_iter_s: f64,
    pub gradient_per_iter_s: f64,
    pub scene_build_s: f64,
    /// `ok` or the error text of the failed repetition.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub summary: SweepSummary,
    pub reports: Vec<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

const SWEEP_HEADER: [&str; 9] =
    ["value", "mre_pct", "time_s", "iterations", "per_iter_s", "forward_per_iter_s", "gradient_per_iter_s", "scene_build_s", "status"];

impl SweepTable {
    pub fn summaries(&self) -> Vec<SweepSummary> {
        self.rows.iter().map(|r| r.summary.clone()).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        summaries_to_csv(&self.summaries())
    }

    /// Row for `value`, if it ran without error.
    pub fn ok_row(&self, value: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.summary.value == value && r.summary.status == "ok")
    }
}

pub fn summaries_to_csv(rows: &[SweepSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            fmt(r.mre_pct),
            fmt(r.time_s),
            fmt(r.iterations),
            fmt(r.per_iter_s),
            fmt(r.forward_per_iter_s),
            fmt(r.gradient_per_iter_s),
            fmt(r.scene_build_s),
            r.status.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn summaries_from_csv(text: &str) -> Result<Vec<SweepSummary>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    if rd.headers()?.iter().ne(SWEEP_HEADER) {
        return Err(Error::InvalidInput("unexpected sweep csv header".into()));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        out.push(SweepSummary {
            value: row[0].parse().map_err(|_| Error::InvalidInput(format!("bad sweep value `{}`", &row[0])))?,
            mre_pct: parse_num(&row[1])?,
            time_s: parse_num(&row[2])?,
            iterations: parse_num(&row[3])?,
            per_iter_s: parse_num(&row[4])?,
            forward_per_iter_s: parse_num(&row[5])?,
            gradient_per_iter_s: parse_num(&row[6])?,
            scene_build_s: parse_num(&row[7])?,
            status: row[8].to_string(),
        });
    }
    Ok(out)
}

fn summarize(value: usize, reports: &[RunReport], error: Option<String>) -> SweepSummary {
    let n = reports.len().max(1) as f64;
    let mean = |f: &dyn Fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let none = reports.is_empty();
    let pick = |v: f64| if none { f64::NAN } else { v };
    SweepSummary {
        value,
        mre_pct: pick(100.0 * median(&reports.iter().map(|r| r.final_mre).collect::<Vec<_>>())),
        time_s: pick(mean(&|r| r.total_s)),
        iterations: pick(median(&reports.iter().map(|r| r.iterations as f64).collect::<Vec<_>>())),
        per_iter_s: pick(mean(&|r| r.timing.per_iter_s())),
        forward_per_iter_s: pick(mean(&|r| r.timing.forward_per_iter_s)),
        gradient_per_iter_s: pick(mean(&|r| r.timing.gradient_per_iter_s)),
        scene_build_s: pick(mean(&|r| r.timing.scene_build_s)),
        status: error.unwrap_or_else(|| "ok".into()),
    }
}

/// Plans keyed by repetition; greedy plans do not depend on seeds, so one serves all.
struct PlanCache(BTreeMap<(PlacementStrategy, u64), PlacementPlan>);

impl PlanCache {
    fn new() -> Self {
        PlanCache(BTreeMap::new())
    }

    fn get(&mut self, config: &ExperimentConfig, rep: u64) -> Result<PlacementPlan> {
        let key = (config.placement, if config.placement == PlacementStrategy::Greedy { 0 } else { rep });
        if let Some(p) = self.0.get(&key) {
            return Ok(p.clone());
        }
        let plan = Prepared::new(config)?.plan(config)?;
        self.0.insert(key, plan.clone());
        Ok(plan)
    }
}

fn rep_config(config: &ExperimentConfig, rep: usize, dir: Option<&Path>) -> ExperimentConfig {
    let mut c = config.clone();
    c.seeds = config.seeds.offset(rep as u64);
    c.repetitions = 1;
    c.output_dir = dir.map(|d| d.join(format!("rep_{rep}")));
    c
}

/// One row per value; seeds are shared across rows, a failing cell is
/// recorded and the sweep moves on.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[usize]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    config.validate()?;
    let mut shared = PlanCache::new();
    let mut rows = Vec::new();
    for &value in values {
        let cell = axis.apply(config, value);
        let dir = config.output_dir.as_ref().map(|d| d.join(format!("{}_{value}", axis.as_str())));
        let mut reports = Vec::new();
        let mut error = None;
        for rep in 0..config.repetitions {
            let rc = rep_config(&cell, rep, dir.as_deref());
            let result = if axis.shares_plan() {
                shared
                    .get(&rep_config(config, rep, None), rep as u64)
                    .and_then(|plan| run_experiment(&rc, Some(&plan)))
            } else {
                run_experiment(&rc, None)
            };
            match result {
                Ok(o) => reports.push(o.report),
                Err(e) => {
                    log::warn!("sweep cell {}={value} failed: {e}", axis.as_str());
                    error = Some(format!("error: {e}"));
                    break;
                }
            }
        }
        let summary = summarize(value, &reports, error);
        rows.push(SweepRow { summary, reports });
    }
    let table = SweepTable { axis, rows };
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("sweep_{}.csv", axis.as_str())), table.to_csv()?)?;
        fs::write(dir.join(format!("sweep_{}.json", axis.as_str())), serde_json::to_string_pretty(&table)?)?;
    }
    Ok(table)
}

/// Sweep whose loop traces again every iteration, capped at `iterations`,
/// so the per-phase times reflect a full ray-tracing step.
pub fn complexity_study(config: &ExperimentConfig, axis: SweepAxis, values: &[usize], iterations: usize) -> Result<SweepTable> {
    let mut c = config.clone();
    c.engine = Engine::Retrace;
    c.stop.max_iter = iterations;
    c.repetitions = 1;
    sweep(&c, axis, values)
}

/// Sorted initial-MRE samples, one column per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub strategies: Vec<String>,
    pub samples: Vec<Vec<f64>>,
}

impl CdfTable {
    pub fn column(&self, strategy: &str) -> Option<&[f64]> {
        self.strategies.iter().position(|s| s == strategy).map(|i| self.samples[i].as_slice())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["rank".to_string()];
        header.extend(self.strategies.iter().cloned());
        w.write_record(&header)?;
        let rows = self.samples.first().map_or(0, Vec::len);
        for i in 0..rows {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(self.samples.iter().map(|c| fmt(c[i])));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<CdfTable> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers()?.clone();
        if header.get(0) != Some("rank") {
            return Err(Error::InvalidInput("cdf csv must start with a rank column".into()));
        }
        let strategies: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut samples = vec![Vec::new(); strategies.len()];
        for row in rd.records() {
            let row = row?;
            for (j, col) in samples.iter_mut().enumerate() {
                col.push(parse_num(&row[j + 1])?);
            }
        }
        Ok(CdfTable { strategies, samples })
    }

    fn to_dat(&self) -> String {
        let mut s = format!("# p {}\n", self.strategies.join(" "));
        let n = self.samples.first().map_or(0, Vec::len);
        for i in 0..n {
            s.push_str(&format!("{:.6}", (i + 1) as f64 / n as f64));
            for c in &self.samples {
                s.push_str(&format!(" {:.9e}", c[i]));
            }
            s.push('\n');
        }
        s
    }
}

/// Initial MRE of each strategy over `samples` ground truths.
///
/// Sample `i` uses ground-truth seed `gt + i` for every strategy, so the
/// columns are paired; random inits draw from `init + i`.
pub fn init_cdf_study(config: &ExperimentConfig, strategies: &[InitStrategy], samples: usize) -> Result<CdfTable> {
    if strategies.is_empty() || samples == 0 {
        return Err(Error::Config("cdf study needs a strategy and at least one sample".into()));
    }
    let mut columns = vec![Vec::with_capacity(samples); strategies.len()];
    for i in 0..samples {
        for (j, &s) in strategies.iter().enumerate() {
            let mut c = config.clone();
            c.init = s;
            c.seeds = config.seeds.offset(i as u64);
            let prep = Prepared::new(&c)?;
            columns[j].push(mre(&prep.prior.sigma_init, &prep.truth.sigma_hat)?);
        }
    }
    for c in &mut columns {
        c.sort_by(f64::total_cmp);
    }
    let table = CdfTable { strategies: strategies.iter().map(|s| s.as_str().to_string()).collect(), samples: columns };
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("cdf.csv"), table.to_csv()?)?;
        fs::write(dir.join("cdf.dat"), table.to_dat())?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub init: InitStrategy,
    pub placement: PlacementStrategy,
}

impl Arm {
    /// `init:placement`, e.g. `itu:greedy`.
    pub fn parse(s: &str) -> Option<Arm> {
        let (i, p) = s.split_once(':')?;
        Some(Arm { init: InitStrategy::parse(i)?, placement: PlacementStrategy::parse(p)? })
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.init.as_str(), self.placement.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub label: String,
    pub iterations_to_threshold: Vec<Option<usize>>,
    /// Runs that never reach the threshold count with their full length.
    pub mean_iterations_to_threshold: f64,
    pub all_reached: bool,
    pub final_mre: Vec<f64>,
    pub median_final_mre: f64,
    /// This arm over the first arm; absent for the first arm.
    pub iterations_ratio: Option<f64>,
    pub final_mre_ratio: Option<f64>,
}

/// Loss and MRE per iteration of the first repetition, padded with the last value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCurve {
    pub label: String,
    pub loss: Vec<f64>,
    pub mre: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub threshold: f64,
    pub arms: Vec<ArmSummary>,
    pub curves: Vec<ArmCurve>,
}

impl Comparison {
    pub fn arm(&self, label: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.label == label)
    }

    fn curves_dat(&self) -> String {
        let mut s = String::from("# iter");
        for c in &self.curves {
            s.push_str(&format!(" loss[{0}] mre[{0}]", c.label));
        }
        s.push('\n');
        let len = self.curves.first().map_or(0, |c| c.loss.len());
        for i in 0..len {
            s.push_str(&(i + 1).to_string());
            for c in &self.curves {
                s.push_str(&format!(" {:.9e} {:.9e}", c.loss[i], c.mre[i]));
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every arm over `config.repetitions` seeds; arms with the same
/// placement strategy share the plan of each repetition.
pub fn compare_convergence(config: &ExperimentConfig, arms: &[Arm]) -> Result<Comparison> {
    if arms.is_empty() {
        return Err(Error::Config("comparison needs at least one arm".into()));
    }
    config.validate()?;
    let mut plans = PlanCache::new();
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for arm in arms {
        let label = arm.label();
        let mut cfg = config.clone();
        cfg.init = arm.init;
        cfg.placement = arm.placement;
        let dir = config.output_dir.as_ref().map(|d| d.join(label.replace(':', "_")));
        let mut its = Vec::new();
        let mut counted = Vec::new();
        let mut finals = Vec::new();
        for rep in 0..config.repetitions {
            let rc = rep_config(&cfg, rep, dir.as_deref());
            let plan = plans.get(&rc, rep as u64)?;
            let out = run_experiment(&rc, Some(&plan))?;
            let hit = out.trace.iterations_to_mre(ITERATIONS_THRESHOLD);
            its.push(hit);
            counted.push(hit.unwrap_or(out.report.iterations) as f64);
            finals.push(out.report.final_mre);
            if rep == 0 {
                curves.push(ArmCurve {
                    label: label.clone(),
                    loss: out.trace.records.iter().map(|r| r.loss).collect(),
                    mre: out.trace.records.iter().map(|r| r.mre.unwrap_or(f64::NAN)).collect(),
                });
            }
        }
        summaries.push(ArmSummary {
            label,
            all_reached: its.iter().all(Option::is_some),
            iterations_to_threshold: its,
            mean_iterations_to_threshold: counted.iter().sum::<f64>() / counted.len() as f64,
            median_final_mre: median(&finals),
            final_mre: finals,
            iterations_ratio: None,
            final_mre_ratio: None,
        });
    }
    let (base_it, base_mre) = (summaries[0].mean_iterations_to_threshold, summaries[0].median_final_mre);
    for s in summaries.iter_mut().skip(1) {
        s.iterations_ratio = Some(s.mean_iterations_to_threshold / base_it);
        s.final_mre_ratio = Some(s.median_final_mre / base_mre);
    }
    let len = curves.iter().map(|c| c.loss.len()).max().unwrap_or(0);
    for c in &mut curves {
        for v in [&mut c.loss, &mut c.mre] {
            let last = v.last().copied().unwrap_or(f64::NAN);
            v.resize(len, last);
        }
    }
    let cmp = Comparison { threshold: ITERATIONS_THRESHOLD, arms: summaries, curves };
    if let Some(dir) = &config.output_dir {
        fs::create_dir_all(dir)?;
        let summary = serde_json::json!({ "threshold": cmp.threshold, "arms": cmp.arms });
        fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&summary)?)?;
        fs::write(dir.join("curves.dat"), cmp.curves_dat())?;
    }
    Ok(cmp)
}
