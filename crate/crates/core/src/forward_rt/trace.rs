//! Path discovery by ray launching, with exact image-method geometry.
//!
//! Launched rays only decide *which* interaction sequences reach a receiver:
//! a sequence is a candidate when some ray segment after at least one bounce
//! passes within `rx_radius` of the receiver. Each candidate is then rebuilt
//! exactly by mirroring the transmitter across the surfaces in order and
//! checked for valid reflection points and occlusion. The direct path is
//! tested separately with a visibility query.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::RtConfig;
use crate::error::{Error, Result};
use crate::geometry::{first_hit, launch_directions, Scene, Vec3};
use crate::inverse::TrialConfig;

/// Slack when deciding whether something blocks a segment short of its end.
const OCCLUSION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub surface_id: usize,
    pub material_slot: usize,
    pub incidence_cos: f64,
}

/// One specular propagation path from the transmitter to receiver `receiver_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub receiver_index: usize,
    pub interactions: Vec<Interaction>,
    pub total_length: f64,
    pub segment_count: usize,
    /// Transmitter, reflection points, receiver.
    pub vertices: Vec<Vec3>,
}

impl PathRecord {
    pub fn surface_sequence(&self) -> Vec<usize> {
        self.interactions.iter().map(|i| i.surface_id).collect()
    }
}

/// Conductivity-independent path set for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub num_slots: usize,
    pub num_receivers: usize,
    /// Sorted by receiver, then by surface sequence.
    pub paths: Vec<PathRecord>,
}

impl TraceResult {
    pub fn path_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_receivers];
        for p in &self.paths {
            counts[p.receiver_index] += 1;
        }
        counts
    }

    pub fn slots_touched(&self) -> BTreeSet<usize> {
        self.paths.iter().flat_map(|p| p.interactions.iter().map(|i| i.material_slot)).collect()
    }

    /// Largest interaction count over all paths.
    pub fn max_interactions(&self) -> usize {
        self.paths.iter().map(|p| p.interactions.len()).max().unwrap_or(0)
    }
}

pub fn trace_paths(scene: &Scene, trial: &TrialConfig, config: &RtConfig) -> Result<TraceResult> {
    config.validate()?;
    for p in std::iter::once(&trial.tx).chain(&trial.rx) {
        if !scene.is_open(*p) {
            return Err(Error::Placement(p.to_array()));
        }
    }
    let dirs = launch_directions(config.u_ray);
    let candidates = discover(scene, trial, config, &dirs);

    let mut found: BTreeMap<(usize, Vec<usize>), PathRecord> = BTreeMap::new();
    for (n, &rx) in trial.rx.iter().enumerate() {
        if line_of_sight(scene, trial.tx, rx) {
            let len = trial.tx.distance(rx);
            found.insert(
                (n, Vec::new()),
                PathRecord {
                    receiver_index: n,
                    interactions: Vec::new(),
                    total_length: len,
                    segment_count: 1,
                    vertices: vec![trial.tx, rx],
                },
            );
        }
    }
    for (n, seq) in candidates {
        if let Some(p) = specular_path(scene, trial.tx, trial.rx[n], n, &seq) {
            found.insert((n, seq), p);
        }
    }
    Ok(TraceResult { num_slots: scene.num_slots(), num_receivers: trial.rx.len(), paths: found.into_values().collect() })
}

type Candidates = BTreeSet<(usize, Vec<usize>)>;

#[cfg(feature = "parallel")]
fn discover(scene: &Scene, trial: &TrialConfig, config: &RtConfig, dirs: &[Vec3]) -> Candidates {
    use rayon::prelude::*;
    dirs.par_chunks(512)
        .map(|chunk| {
            let mut set = Candidates::new();
            for &d in chunk {
                walk_ray(scene, trial, config, d, &mut set);
            }
            set
        })
        .reduce(Candidates::new, |mut a, b| {
            a.extend(b);
            a
        })
}

#[cfg(not(feature = "parallel"))]
fn discover(scene: &Scene, trial: &TrialConfig, config: &RtConfig, dirs: &[Vec3]) -> Candidates {
    let mut set = Candidates::new();
    for &d in dirs {
        walk_ray(scene, trial, config, d, &mut set);
    }
    set
}

fn walk_ray(scene: &Scene, trial: &TrialConfig, config: &RtConfig, dir0: Vec3, out: &mut Candidates) {
    let r2 = config.rx_radius * config.rx_radius;
    let mut origin = trial.tx;
    let mut dir = dir0;
    let mut seq: Vec<usize> = Vec::with_capacity(config.depth);
    for bounce in 0..=config.depth {
        let hit = first_hit(scene, origin, dir);
        let seg_len = hit.map_or(f64::INFINITY, |h| h.t);
        if !seq.is_empty() {
            for (n, &rx) in trial.rx.iter().enumerate() {
                let along = (rx - origin).dot(dir).clamp(0.0, seg_len);
                let closest = origin + dir * along;
                let off = closest - rx;
                if off.dot(off) <= r2 {
                    out.insert((n, seq.clone()));
                }
            }
        }
        match hit {
            Some(h) if bounce < config.depth => {
                seq.push(h.surface_id);
                origin = h.point;
                dir = (dir - h.normal * (2.0 * dir.dot(h.normal))).normalized();
            }
            _ => break,
        }
    }
}

/// Unobstructed straight segment between two open points.
pub fn line_of_sight(scene: &Scene, a: Vec3, b: Vec3) -> bool {
    let len = a.distance(b);
    if len == 0.0 {
        return true;
    }
    let dir = (b - a) * (1.0 / len);
    first_hit(scene, a, dir).is_none_or(|h| h.t >= len - OCCLUSION_SLACK)
}

/// Exact reflection path through the surfaces `seq` in order, if it exists.
pub fn specular_path(scene: &Scene, tx: Vec3, rx: Vec3, receiver_index: usize, seq: &[usize]) -> Option<PathRecord> {
    let mut images = Vec::with_capacity(seq.len() + 1);
    images.push(tx);
    for &sid in seq {
        let prev = *images.last().unwrap();
        images.push(scene.surface(sid).mirror(prev));
    }

    // Walk back from the receiver toward each image in turn.
    let mut points = vec![rx];
    let mut target = rx;
    for j in (0..seq.len()).rev() {
        let s = scene.surface(seq[j]);
        let img = images[j + 1];
        let a = s.normal_axis();
        let denom = target[a] - img[a];
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (s.center[a] - img[a]) / denom;
        if !(t > 0.0 && t < 1.0) {
            return None;
        }
        let q = (img + (target - img) * t).with_axis(a, s.center[a]);
        if !s.contains_in_plane(q, 1e-9) {
            return None;
        }
        points.push(q);
        target = q;
    }
    points.push(tx);
    points.reverse();

    let mut interactions = Vec::with_capacity(seq.len());
    for (j, &sid) in seq.iter().enumerate() {
        let s = scene.surface(sid);
        let (prev, q, next) = (points[j], points[j + 1], points[j + 2]);
        // Both legs must stay on the front side of the reflecting surface.
        if s.signed_distance(prev) <= 1e-9 || s.signed_distance(next) <= 1e-9 {
            return None;
        }
        let d_in = (q - prev).normalized();
        let cos = d_in.dot(s.normal).abs().min(1.0);
        if !(cos > 0.0) {
            return None;
        }
        interactions.push(Interaction { surface_id: sid, material_slot: s.material_slot, incidence_cos: cos });
    }
    for w in points.windows(2) {
        if !line_of_sight(scene, w[0], w[1]) {
            return None;
        }
    }
    let total_length = images.last().unwrap().distance(rx);
    Some(PathRecord {
        receiver_index,
        interactions,
        total_length,
        segment_count: seq.len() + 1,
        vertices: points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{canonical_scene, ObjectKind, ObjectSpec, RoomSpec, SceneSpec};

    fn empty_room() -> Scene {
        // A single far-away floor tile that no ray between the test points can reach.
        Scene::from_spec(&SceneSpec {
            room: RoomSpec { min: Vec3::new(-5.0, -5.0, 0.0), max: Vec3::new(5.0, 5.0, 3.0) },
            objects: vec![ObjectSpec {
                name: "Tile".into(),
                material: "Brick".into(),
                center: Vec3::new(4.5, 4.5, 0.0),
                size: Vec3::new(0.01, 0.01, 0.0),
                kind: ObjectKind::Floor,
            }],
        })
        .unwrap()
    }

    fn trial(tx: Vec3, rx: Vec<Vec3>) -> TrialConfig {
        TrialConfig { tx, rx }
    }

    #[test]
    fn free_space_single_path() {
        let t = trace_paths(
            &empty_room(),
            &trial(Vec3::new(0.0, 0.0, 1.5), vec![Vec3::new(3.0, 0.0, 1.5)]),
            &RtConfig::default(),
        )
        .unwrap();
        assert_eq!(t.paths.len(), 1);
        assert!(t.paths[0].interactions.is_empty());
        assert!((t.paths[0].total_length - 3.0).abs() < 1e-15);
    }

    #[test]
    fn floor_only_two_paths() {
        let scene = Scene::floor_only(5.0, 3.0, "Brick").unwrap();
        let t = trace_paths(
            &scene,
            &trial(Vec3::new(0.0, 0.0, 1.5), vec![Vec3::new(3.0, 0.0, 1.5)]),
            &RtConfig::default(),
        )
        .unwrap();
        assert_eq!(t.paths.len(), 2);
        assert!(t.paths[0].interactions.is_empty());
        let refl = &t.paths[1];
        assert_eq!(refl.interactions.len(), 1);
        assert!((refl.total_length - 18f64.sqrt()).abs() < 1e-12);
        let cos = 3.0 / 18f64.sqrt();
        assert!((refl.interactions[0].incidence_cos - cos).abs() < 1e-12);
    }

    #[test]
    fn canonical_contract() {
        let scene = canonical_scene();
        let tr = trial(
            Vec3::new(0.0, 0.0, 1.5),
            vec![Vec3::new(2.0, 1.0, 1.2), Vec3::new(-2.0, -1.0, 1.8), Vec3::new(-1.0, 4.0, 0.5)],
        );
        let t = trace_paths(&scene, &tr, &RtConfig::default()).unwrap();
        assert!(!t.paths.is_empty());
        for p in &t.paths {
            assert!(p.interactions.len() <= 4);
            assert!(p.total_length > 0.0);
            assert!(p.interactions.iter().all(|i| i.material_slot < 9 && i.incidence_cos > 0.0 && i.incidence_cos <= 1.0));
            // Reflection points lie on their surfaces and path length adds up.
            let seg: f64 = p.vertices.windows(2).map(|w| w[0].distance(w[1])).sum();
            assert!((seg - p.total_length).abs() < 1e-9);
        }
        let keys: Vec<_> = t.paths.iter().map(|p| (p.receiver_index, p.surface_sequence())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(keys, sorted);
        assert_eq!(t, trace_paths(&scene, &tr, &RtConfig::default()).unwrap());
    }

    #[test]
    fn placement_inside_box_rejected() {
        let scene = canonical_scene();
        let tr = trial(Vec3::new(-3.0, 3.0, 0.5), vec![Vec3::new(0.0, 0.0, 1.0)]);
        assert!(matches!(trace_paths(&scene, &tr, &RtConfig::default()), Err(Error::Placement(_))));
    }

    #[test]
    fn box_blocks_line_of_sight() {
        let scene = canonical_scene();
        assert!(!line_of_sight(&scene, Vec3::new(-4.5, 3.0, 0.5), Vec3::new(-1.5, 3.0, 0.5)));
        assert!(line_of_sight(&scene, Vec3::new(-4.5, 3.0, 1.5), Vec3::new(-1.5, 3.0, 1.5)));
    }
}
