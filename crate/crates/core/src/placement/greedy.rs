//! Greedy D-optimal measurement design.
//!
//! Each candidate receiver contributes one row of relative sensitivities
//! `sigma_k / r * dr/dsigma_k` to a design matrix `J`; plans are scored by
//! `log det(J^T J + ridge I)`. Relative rows make the score independent of
//! absolute power and of the units of conductivity.

use nalgebra::{DMatrix, DVector};

use super::{PlacementPlan, PlacementRules, PlacementSource};
use crate::error::{Error, Result};
use crate::forward_rt::{received_strength_with_grad, trace_paths, RtConfig, TraceResult};
use crate::geometry::{Scene, Vec3};
use crate::inverse::TrialConfig;
use crate::materials::SigmaVector;

pub const GREEDY_RIDGE: f64 = 1e-12;

/// Admissible candidate positions, in a fixed order that breaks ties.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    points: Vec<Vec3>,
}

impl CandidateGrid {
    /// Lattice points `pitch * (i, j)` at height `z` that pass the placement rules.
    pub fn regular(scene: &Scene, pitch: f64, z: f64, rules: &PlacementRules) -> Result<Self> {
        if !(pitch > 0.0) {
            return Err(Error::InvalidInput(format!("grid pitch {pitch} must be positive")));
        }
        let r = scene.room;
        let (i0, i1) = ((r.min.x / pitch).ceil() as i64, (r.max.x / pitch).floor() as i64);
        let (j0, j1) = ((r.min.y / pitch).ceil() as i64, (r.max.y / pitch).floor() as i64);
        let mut points = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = Vec3::new(i as f64 * pitch, j as f64 * pitch, z);
                if rules.position_problem(scene, p).is_none() {
                    points.push(p);
                }
            }
        }
        Ok(CandidateGrid { points })
    }

    pub fn default_for(scene: &Scene) -> Result<Self> {
        Self::regular(scene, 1.0, 1.5, &PlacementRules::default())
    }

    pub fn from_points(scene: &Scene, points: Vec<Vec3>, rules: &PlacementRules) -> Result<Self> {
        for p in &points {
            if let Some(why) = rules.position_problem(scene, *p) {
                return Err(Error::InvalidInput(format!("candidate {p:?}: {why}")));
            }
        }
        Ok(CandidateGrid { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Relative sensitivity row per receiver of a traced trial; zero for silent receivers.
pub fn sensitivity_rows(trace: &TraceResult, sigma: &SigmaVector, eps: &[f64], config: &RtConfig) -> Result<Vec<Vec<f64>>> {
    let g = received_strength_with_grad(trace, sigma, eps, config)?;
    Ok(g
        .strengths
        .iter()
        .zip(&g.jacobian)
        .map(|(&r, row)| {
            if r > 0.0 {
                row.iter().zip(sigma.values()).map(|(d, s)| s * d / r).collect()
            } else {
                vec![0.0; sigma.len()]
            }
        })
        .collect())
}

fn gram(rows: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let mut a = DMatrix::identity(k, k) * GREEDY_RIDGE;
    for r in rows {
        let v = DVector::from_column_slice(r);
        a += &v * v.transpose();
    }
    a
}

fn log_det_spd(a: &DMatrix<f64>) -> f64 {
    match a.clone().cholesky() {
        Some(c) => 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// `log det(J^T J + ridge I)` for the stacked rows.
pub fn log_det_gram(rows: &[Vec<f64>], k: usize) -> f64 {
    log_det_spd(&gram(rows, k))
}

/// Objective value of an arbitrary plan under the same scoring as the greedy planner.
pub fn plan_log_det(scene: &Scene, trials: &[TrialConfig], sigma: &SigmaVector, eps: &[f64], config: &RtConfig) -> Result<f64> {
    let mut rows = Vec::new();
    for t in trials {
        rows.extend(sensitivity_rows(&trace_paths(scene, t, config)?, sigma, eps, config)?);
    }
    Ok(log_det_gram(&rows, sigma.len()))
}

/// Greedy D-optimal plan over `candidates`.
///
/// Every candidate is traced once as a transmitter with all other candidates
/// as receivers. Trial by trial, each transmitter is tried with receivers
/// added one at a time by largest objective gain; the transmitter whose
/// finished trial scores best is kept and its rows join the design. Ties go
/// to the lowest candidate index.
pub fn greedy_placement(
    scene: &Scene,
    sigma_prior: &SigmaVector,
    eps: &[f64],
    config: &RtConfig,
    candidates: &CandidateGrid,
    n: usize,
    m: usize,
) -> Result<PlacementPlan> {
    let pts = candidates.points();
    if pts.len() < n + 1 {
        return Err(Error::Infeasible(format!("{} candidates cannot host 1 tx + {n} rx", pts.len())));
    }
    if m == 0 {
        return Ok(PlacementPlan::new(Vec::new(), PlacementSource::Greedy));
    }
    let k = sigma_prior.len();
    let rules = PlacementRules::default();

    // rows[t][r]: row of receiver candidate r when candidate t transmits (None when r == t).
    let mut rows: Vec<Vec<Option<DVector<f64>>>> = Vec::with_capacity(pts.len());
    for (t, &tx) in pts.iter().enumerate() {
        let others: Vec<usize> = (0..pts.len()).filter(|&r| r != t).collect();
        let trial = TrialConfig { tx, rx: others.iter().map(|&r| pts[r]).collect() };
        let trace = trace_paths(scene, &trial, config)?;
        let rel = sensitivity_rows(&trace, sigma_prior, eps, config)?;
        let mut per = vec![None; pts.len()];
        for (row, &r) in rel.into_iter().zip(&others) {
            per[r] = Some(DVector::from_vec(row));
        }
        rows.push(per);
    }

    let mut design = DMatrix::identity(k, k) * GREEDY_RIDGE;
    let mut trials = Vec::with_capacity(m);
    let mut rationale = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best: Option<(f64, usize, Vec<usize>, DMatrix<f64>)> = None;
        for t in 0..pts.len() {
            let Some((score, chosen, a)) = grow_trial(&design, &rows[t], pts, t, n, rules.min_separation) else {
                continue;
            };
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, t, chosen, a));
            }
        }
        let (score, t, chosen, a) =
            best.ok_or_else(|| Error::Infeasible(format!("no transmitter admits {n} separated receivers")))?;
        design = a;
        trials.push(TrialConfig { tx: pts[t], rx: chosen.iter().map(|&r| pts[r]).collect() });
        let mut notes = vec![format!("greedy tx, cumulative log det {score:.4}")];
        notes.extend(chosen.iter().map(|&r| format!("greedy rx, candidate {r}")));
        rationale.push(notes);
    }
    Ok(PlacementPlan { trials, rationale, source: PlacementSource::Greedy })
}

/// Adds `n` receivers for transmitter `t` by largest log det gain.
fn grow_trial(
    design: &DMatrix<f64>,
    rows: &[Option<DVector<f64>>],
    pts: &[Vec3],
    t: usize,
    n: usize,
    min_sep: f64,
) -> Option<(f64, Vec<usize>, DMatrix<f64>)> {
    let mut a = design.clone();
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut score = log_det_spd(&a);
    for _ in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for (r, row) in rows.iter().enumerate() {
            let Some(row) = row else { continue };
            let clash = std::iter::once(t).chain(chosen.iter().copied()).any(|q| q == r || pts[q].distance(pts[r]) < min_sep);
            if clash {
                continue;
            }
            let s = log_det_spd(&(&a + row * row.transpose()));
            if best.is_none_or(|b| s > b.0) {
                best = Some((s, r));
            }
        }
        let (s, r) = best?;
        let row = rows[r].as_ref().expect("chosen row exists");
        a += row * row.transpose();
        chosen.push(r);
        score = s;
    }
    Some((score, chosen, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::canonical_scene;
    use crate::materials::{slot_permittivities, MaterialTable};

    fn setup(scene: &Scene) -> (SigmaVector, Vec<f64>) {
        let t = MaterialTable::itu();
        let sigma = crate::priors::itu_init(&t, &scene.material_names, 3.5).unwrap().sigma_init;
        (sigma, slot_permittivities(&t, &scene.material_names).unwrap())
    }

    #[test]
    fn default_grid_is_admissible() {
        let s = canonical_scene();
        let g = CandidateGrid::default_for(&s).unwrap();
        assert_eq!(g.len(), 81);
        assert!(CandidateGrid::from_points(&s, vec![Vec3::new(0.0, 5.0, 1.5)], &PlacementRules::default()).is_err());
    }

    #[test]
    fn forced_selection_uses_every_candidate() {
        let s = canonical_scene();
        let (sigma, eps) = setup(&s);
        let pts = vec![Vec3::new(-1.0, 0.0, 1.5), Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, -2.0, 2.0), Vec3::new(0.0, -3.0, 1.5)];
        let g = CandidateGrid::from_points(&s, pts.clone(), &PlacementRules::default()).unwrap();
        let cfg = RtConfig { u_ray: 2000, ..RtConfig::default() };
        let plan = greedy_placement(&s, &sigma, &eps, &cfg, &g, 3, 1).unwrap();
        let mut used: Vec<Vec3> = std::iter::once(plan.trials[0].tx).chain(plan.trials[0].rx.clone()).collect();
        used.sort_by(|a, b| a.to_array().partial_cmp(&b.to_array()).unwrap());
        let mut want = pts;
        want.sort_by(|a, b| a.to_array().partial_cmp(&b.to_array()).unwrap());
        assert_eq!(used, want);
        assert!(greedy_placement(&s, &sigma, &eps, &cfg, &g, 4, 1).is_err());
    }

    #[test]
    fn floor_only_is_degenerate_but_valid() {
        let s = Scene::floor_only(5.0, 3.0, "Concrete").unwrap();
        let (sigma, eps) = setup(&s);
        let g = CandidateGrid::regular(&s, 2.0, 1.5, &PlacementRules::default()).unwrap();
        let cfg = RtConfig { u_ray: 1000, ..RtConfig::default() };
        let plan = greedy_placement(&s, &sigma, &eps, &cfg, &g, 3, 2).unwrap();
        plan.validate(&s, 3, 2, &PlacementRules::default()).unwrap();
        assert_eq!(plan.source, PlacementSource::Greedy);
    }

    #[test]
    fn log_det_is_monotone_in_rows() {
        let rows = vec![vec![1.0, 0.0, 0.5], vec![0.0, 2.0, 0.0], vec![0.3, 0.3, 0.3], vec![0.0, 0.0, 0.0]];
        let mut last = log_det_gram(&[], 3);
        for i in 1..=rows.len() {
            let v = log_det_gram(&rows[..i], 3);
            assert!(v >= last - 1e-9);
            last = v;
        }
        assert!((log_det_gram(&[], 2) - 2.0 * GREEDY_RIDGE.ln()).abs() < 1e-9);
    }
}
