//! Browser bindings: a Fresnel curve, a top-down path trace and a small
//! in-page estimation. Every export returns a JSON string.
//!
//! The `*_json` functions and [`Estimator::create`] carry the logic with plain
//! string errors so they also run natively; the wasm exports wrap them.

use rfmat::forward_rt::{fresnel_reflection, received_strength, trace_paths, watts_to_dbm, Polarization, RtConfig, TraceResult};
use rfmat::geometry::{build_paper_scene, canonical_scene, Scene, Vec3};
use rfmat::inverse::{adam_step, mre, AdamState, EstimateOptions, InverseProblem, Measurement, TrialConfig};
use rfmat::materials::{perturb_ground_truth, slot_permittivities, MaterialTable, SigmaVector};
use rfmat::placement::random_placement;
use rfmat::priors::itu_init;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

fn err_text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn to_js(r: Res<String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

fn to_json<T: Serialize>(v: &T) -> Res<String> {
    serde_json::to_string(v).map_err(err_text)
}

fn scene_for(k: usize, seed: u64) -> Res<Scene> {
    if k == 0 {
        Ok(canonical_scene())
    } else {
        build_paper_scene(k, seed).map_err(err_text)
    }
}

#[derive(Serialize)]
struct Curve {
    theta_deg: Vec<f64>,
    te: Vec<f64>,
    tm: Vec<f64>,
}

/// |Gamma| for both polarizations from 0 to 90 degrees.
#[wasm_bindgen]
pub fn fresnel_curve(eps_real: f64, sigma: f64, f_ghz: f64, steps: usize) -> Result<String, JsValue> {
    to_js(fresnel_curve_json(eps_real, sigma, f_ghz, steps))
}

pub fn fresnel_curve_json(eps_real: f64, sigma: f64, f_ghz: f64, steps: usize) -> Res<String> {
    let steps = steps.max(2);
    let mut c = Curve { theta_deg: Vec::new(), te: Vec::new(), tm: Vec::new() };
    for i in 0..steps {
        let theta = 90.0 * i as f64 / (steps - 1) as f64;
        let cos = theta.to_radians().cos().max(0.0);
        c.theta_deg.push(theta);
        c.te.push(fresnel_reflection(eps_real, sigma, f_ghz * 1e9, cos, Polarization::TE).map_err(err_text)?.norm());
        c.tm.push(fresnel_reflection(eps_real, sigma, f_ghz * 1e9, cos, Polarization::TM).map_err(err_text)?.norm());
    }
    to_json(&c)
}

#[derive(Serialize)]
struct Rect {
    name: String,
    material: String,
    x: [f64; 2],
    y: [f64; 2],
    /// Horizontal slab (floor or ceiling); it covers the whole plan view.
    horizontal: bool,
}

#[derive(Serialize)]
struct TopDown {
    room: Rect,
    objects: Vec<Rect>,
    paths: Vec<Vec<[f64; 2]>>,
    bounces: Vec<usize>,
    strength_dbm: f64,
}

fn rect(name: &str, material: &str, center: Vec3, size: Vec3) -> Rect {
    Rect {
        name: name.into(),
        material: material.into(),
        x: [center.x - size.x / 2.0, center.x + size.x / 2.0],
        y: [center.y - size.y / 2.0, center.y + size.y / 2.0],
        horizontal: size.z == 0.0,
    }
}

/// Traces one transmitter/receiver pair at height 1.5 m. `k = 0` selects the
/// reference room; otherwise a generated room with `k` objects.
#[wasm_bindgen]
pub fn trace_top_down(k: usize, seed: u64, tx_x: f64, tx_y: f64, rx_x: f64, rx_y: f64, depth: usize) -> Result<String, JsValue> {
    to_js(trace_top_down_json(k, seed, tx_x, tx_y, rx_x, rx_y, depth))
}

pub fn trace_top_down_json(k: usize, seed: u64, tx_x: f64, tx_y: f64, rx_x: f64, rx_y: f64, depth: usize) -> Res<String> {
    let scene = scene_for(k, seed)?;
    let cfg = RtConfig { depth, u_ray: 3000, ..RtConfig::default() };
    let trial = TrialConfig { tx: Vec3::new(tx_x, tx_y, 1.5), rx: vec![Vec3::new(rx_x, rx_y, 1.5)] };
    let trace = trace_paths(&scene, &trial, &cfg).map_err(err_text)?;
    let table = MaterialTable::itu();
    let f_ghz = cfg.f_ghz();
    let eps = slot_permittivities(&table, &scene.material_names).map_err(err_text)?;
    let sigma = itu_init(&table, &scene.material_names, f_ghz).map_err(err_text)?.sigma_init;
    let p = received_strength(&trace, &sigma, &eps, &cfg).map_err(err_text)?[0];
    let room = rect("room", "", scene.room.center(), scene.room.max - scene.room.min);
    let view = TopDown {
        room,
        objects: scene.objects.iter().map(|o| rect(&o.name, &o.material, o.center, o.size)).collect(),
        paths: trace.paths.iter().map(|p| p.vertices.iter().map(|v| [v.x, v.y]).collect()).collect(),
        bounces: trace.paths.iter().map(|p| p.interactions.len()).collect(),
        strength_dbm: watts_to_dbm(p),
    };
    to_json(&view)
}

#[derive(Serialize)]
struct Step {
    iteration: usize,
    loss: f64,
    mre: f64,
    sigma: Vec<f64>,
    truth: Vec<f64>,
    labels: Vec<String>,
}

/// Recovers conductivities from synthesized measurements, a few Adam steps per call.
#[wasm_bindgen]
pub struct Estimator {
    problem: InverseProblem,
    sigma: SigmaVector,
    truth: SigmaVector,
    state: AdamState,
    options: EstimateOptions,
    labels: Vec<String>,
    iteration: usize,
}

#[wasm_bindgen]
impl Estimator {
    /// `k = 0` selects the reference room. `lr` is the Adam step in S/m.
    #[wasm_bindgen(constructor)]
    pub fn new(k: usize, seed: u64, n: usize, m: usize, lr: f64) -> Result<Estimator, JsValue> {
        Estimator::create(k, seed, n, m, lr).map_err(|e| JsValue::from_str(&e))
    }

    /// Runs `iters` Adam steps and reports the state after them.
    pub fn step(&mut self, iters: usize) -> Result<String, JsValue> {
        to_js(self.step_json(iters))
    }
}

impl Estimator {
    pub fn create(k: usize, seed: u64, n: usize, m: usize, lr: f64) -> Res<Estimator> {
        let scene = scene_for(k, seed)?;
        let cfg = RtConfig { u_ray: 2000, ..RtConfig::default() };
        let table = MaterialTable::itu();
        let f_ghz = cfg.f_ghz();
        let eps = slot_permittivities(&table, &scene.material_names).map_err(err_text)?;
        let truth = perturb_ground_truth(&table, &scene.material_names, f_ghz, seed).map_err(err_text)?.sigma_hat;
        let plan = random_placement(&scene, n, m, seed).map_err(err_text)?;
        let traces: Vec<TraceResult> =
            plan.trials.iter().map(|t| trace_paths(&scene, t, &cfg)).collect::<Result<_, _>>().map_err(err_text)?;
        let measured = traces
            .iter()
            .map(|t| Measurement::new(received_strength(t, &truth, &eps, &cfg)?))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err_text)?;
        let problem = InverseProblem::from_traces(traces, eps, cfg, measured).map_err(err_text)?;
        let sigma = itu_init(&table, &scene.material_names, f_ghz).map_err(err_text)?.sigma_init;
        let options = EstimateOptions { lr, ..EstimateOptions::default() };
        options.validate().map_err(err_text)?;
        Ok(Estimator {
            state: AdamState::new(sigma.len()),
            problem,
            sigma,
            truth,
            options,
            labels: scene.material_names.clone(),
            iteration: 0,
        })
    }

    pub fn step_json(&mut self, iters: usize) -> Res<String> {
        let mut loss = f64::NAN;
        for _ in 0..iters {
            let (l, g) = self.problem.loss_and_grad(&self.sigma).map_err(err_text)?;
            loss = l;
            self.sigma = adam_step(&self.sigma, &mut self.state, &g, &self.options).map_err(err_text)?;
            self.iteration += 1;
        }
        if iters == 0 {
            loss = self.problem.loss(&self.sigma).map_err(err_text)?;
        }
        to_json(&Step {
            iteration: self.iteration,
            loss,
            mre: mre(&self.sigma, &self.truth).map_err(err_text)?,
            sigma: self.sigma.values().to_vec(),
            truth: self.truth.values().to_vec(),
            labels: self.labels.clone(),
        })
    }
}
