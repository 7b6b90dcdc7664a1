use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PlacementPlan, PlacementRules, PlacementSource};
use crate::error::{Error, Result};
use crate::geometry::{Scene, Vec3};
use crate::inverse::TrialConfig;

/// Draws per position before giving up.
const MAX_ATTEMPTS: usize = 10_000;

/// Uniform rejection sampling over admissible free space.
pub fn random_placement(scene: &Scene, n: usize, m: usize, seed: u64) -> Result<PlacementPlan> {
    random_placement_with(scene, n, m, seed, &PlacementRules::default())
}

pub fn random_placement_with(scene: &Scene, n: usize, m: usize, seed: u64, rules: &PlacementRules) -> Result<PlacementPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = scene.room.expanded(-rules.margin);
    let (z_lo, z_hi) = (inner.min.z.max(rules.z_min), inner.max.z.min(rules.z_max));
    if !(inner.min.x < inner.max.x && inner.min.y < inner.max.y && z_lo < z_hi) {
        return Err(Error::Infeasible("no admissible volume in the room".into()));
    }
    let mut trials = Vec::with_capacity(m);
    for _ in 0..m {
        let mut pts: Vec<Vec3> = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            let mut attempts = 0;
            let p = loop {
                if attempts == MAX_ATTEMPTS {
                    return Err(Error::SamplingFailed(MAX_ATTEMPTS));
                }
                attempts += 1;
                let p = Vec3::new(
                    rng.random_range(inner.min.x..inner.max.x),
                    rng.random_range(inner.min.y..inner.max.y),
                    rng.random_range(z_lo..z_hi),
                );
                if rules.position_problem(scene, p).is_none() && pts.iter().all(|q| q.distance(p) >= rules.min_separation) {
                    break p;
                }
            };
            pts.push(p);
        }
        trials.push(TrialConfig { tx: pts[0], rx: pts[1..].to_vec() });
    }
    Ok(PlacementPlan::new(trials, PlacementSource::Random))
}
