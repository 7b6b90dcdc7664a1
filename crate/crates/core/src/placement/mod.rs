//! Measurement planning: where to put the transmitter and receivers of each trial.

mod greedy;
mod random;
mod vlm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Scene, Vec3};
use crate::inverse::TrialConfig;

pub use greedy::{greedy_placement, log_det_gram, plan_log_det, sensitivity_rows, CandidateGrid, GREEDY_RIDGE};
pub use random::random_placement;
pub use vlm::{group_positions, vlm_placement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementSource {
    Random,
    Greedy,
    Vlm,
}

/// Geometric rules every emitted position must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementRules {
    /// Clearance from walls and boxes, m.
    pub margin: f64,
    /// Minimum distance between two positions of one trial, m.
    pub min_separation: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for PlacementRules {
    fn default() -> Self {
        PlacementRules { margin: 0.1, min_separation: 0.2, z_min: 0.1, z_max: 2.9 }
    }
}

impl PlacementRules {
    /// Why `p` is not an admissible position, if it is not.
    pub fn position_problem(&self, scene: &Scene, p: Vec3) -> Option<String> {
        if !p.is_finite() {
            return Some("non-finite coordinate".into());
        }
        if !(self.z_min..=self.z_max).contains(&p.z) {
            return Some(format!("z = {} outside [{}, {}]", p.z, self.z_min, self.z_max));
        }
        if !scene.room.expanded(-self.margin).contains(p) {
            return Some(format!("closer than {} m to the room boundary or outside it", self.margin));
        }
        if let Some(o) = scene.objects.iter().find(|o| {
            o.kind == crate::geometry::ObjectKind::Box && o.aabb().expanded(self.margin).contains(p)
        }) {
            return Some(format!("inside or within {} m of `{}`", self.margin, o.name));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    /// 0 is the transmitter, 1.. the receivers.
    pub index: usize,
    pub position: Vec3,
    pub reason: String,
}

/// Every rule violation in `trials`, in trial and position order.
pub fn plan_violations(scene: &Scene, trials: &[TrialConfig], rules: &PlacementRules) -> Vec<Violation> {
    let mut out = Vec::new();
    for (ti, t) in trials.iter().enumerate() {
        let pts: Vec<Vec3> = std::iter::once(t.tx).chain(t.rx.iter().copied()).collect();
        for (i, &p) in pts.iter().enumerate() {
            if let Some(reason) = rules.position_problem(scene, p) {
                out.push(Violation { trial: ti, index: i, position: p, reason });
            } else if let Some(j) = pts[..i].iter().position(|q| q.distance(p) < rules.min_separation) {
                out.push(Violation {
                    trial: ti,
                    index: i,
                    position: p,
                    reason: format!("closer than {} m to position {j} of the same trial", rules.min_separation),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub trials: Vec<TrialConfig>,
    /// Per trial, one note per position (transmitter first); empty when none was given.
    pub rationale: Vec<Vec<String>>,
    pub source: PlacementSource,
}

#[derive(Serialize, Deserialize)]
struct PlanTrialFile {
    tx: Vec3,
    rx: Vec<Vec3>,
    source: PlacementSource,
    #[serde(default)]
    rationale: Vec<String>,
}

impl PlacementPlan {
    pub fn new(trials: Vec<TrialConfig>, source: PlacementSource) -> Self {
        let rationale = vec![Vec::new(); trials.len()];
        PlacementPlan { trials, rationale, source }
    }

    pub fn n(&self) -> usize {
        self.trials.first().map_or(0, |t| t.rx.len())
    }

    pub fn m(&self) -> usize {
        self.trials.len()
    }

    /// Shape and rule check shared by every planner.
    pub fn validate(&self, scene: &Scene, n: usize, m: usize, rules: &PlacementRules) -> Result<()> {
        if self.trials.len() != m {
            return Err(Error::CountMismatch(format!("expected {m} trials, got {}", self.trials.len())));
        }
        if let Some((i, t)) = self.trials.iter().enumerate().find(|(_, t)| t.rx.len() != n) {
            return Err(Error::CountMismatch(format!("trial {i} has {} receivers, expected {n}", t.rx.len())));
        }
        let v = plan_violations(scene, &self.trials, rules);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::OutOfBounds(describe_violations(&v)))
        }
    }

    /// JSON list of `{tx, rx, source, rationale}`.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<PlanTrialFile> = self
            .trials
            .iter()
            .zip(&self.rationale)
            .map(|(t, r)| PlanTrialFile { tx: t.tx, rx: t.rx.clone(), source: self.source, rationale: r.clone() })
            .collect();
        Ok(serde_json::to_string_pretty(&rows)?)
    }

    pub fn from_json(text: &str) -> Result<PlacementPlan> {
        let rows: Vec<PlanTrialFile> = serde_json::from_str(text)?;
        let source = rows.first().map_or(PlacementSource::Random, |r| r.source);
        if rows.iter().any(|r| r.source != source) {
            return Err(Error::InvalidInput("plan mixes trial sources".into()));
        }
        let (trials, rationale) = rows.into_iter().map(|r| (TrialConfig { tx: r.tx, rx: r.rx }, r.rationale)).unzip();
        Ok(PlacementPlan { trials, rationale, source })
    }
}

pub(crate) fn describe_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| {
            let role = if x.index == 0 { "tx".to_string() } else { format!("rx {}", x.index) };
            format!("trial {} {role} ({}, {}, {}): {}", x.trial, x.position.x, x.position.y, x.position.z, x.reason)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::canonical_scene;

    fn trial(pts: &[[f64; 3]]) -> TrialConfig {
        TrialConfig { tx: pts[0].into(), rx: pts[1..].iter().map(|&p| p.into()).collect() }
    }

    #[test]
    fn rules_reject_bad_positions() {
        let s = canonical_scene();
        let r = PlacementRules::default();
        assert!(r.position_problem(&s, Vec3::new(0.0, 0.0, 1.5)).is_none());
        assert!(r.position_problem(&s, Vec3::new(-3.0, 5.0, 1.5)).is_some());
        assert!(r.position_problem(&s, Vec3::new(4.95, 0.0, 1.5)).is_some());
        assert!(r.position_problem(&s, Vec3::new(0.0, 0.0, 2.95)).is_some());
        assert!(r.position_problem(&s, Vec3::new(-3.0, 3.0, 0.5)).is_some());
        assert!(r.position_problem(&s, Vec3::new(-3.0, 3.0, 1.05)).is_some());
        assert!(r.position_problem(&s, Vec3::new(-3.0, 3.0, 1.2)).is_none());
    }

    #[test]
    fn separation_and_counts() {
        let s = canonical_scene();
        let p = PlacementPlan::new(vec![trial(&[[0.0, 0.0, 1.5], [0.1, 0.0, 1.5]])], PlacementSource::Random);
        assert!(matches!(p.validate(&s, 1, 1, &PlacementRules::default()), Err(Error::OutOfBounds(_))));
        assert!(matches!(p.validate(&s, 2, 1, &PlacementRules::default()), Err(Error::CountMismatch(_))));
        assert!(matches!(p.validate(&s, 1, 2, &PlacementRules::default()), Err(Error::CountMismatch(_))));
    }

    #[test]
    fn plan_file_round_trip() {
        let mut p = PlacementPlan::new(vec![trial(&[[0.0, 0.0, 1.5], [1.0, 2.0, 1.5]])], PlacementSource::Vlm);
        p.rationale[0] = vec!["a".into(), "b".into()];
        let text = p.to_json().unwrap();
        assert!(text.contains("\"source\": \"vlm\""));
        assert_eq!(PlacementPlan::from_json(&text).unwrap(), p);
    }
}
