use super::scene::Scene;
use super::vec3::Vec3;
use crate::error::{Error, Result};

/// Minimum ray parameter accepted as a hit; keeps bounced rays off their own surface.
pub const EPSILON_OFFSET: f64 = 1e-6;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub surface_id: usize,
    pub t: f64,
    pub point: Vec3,
    /// Surface normal flipped to face the incoming ray.
    pub normal: Vec3,
    pub incidence_cos: f64,
}

/// Closest surface crossing along the ray, or `None` if the ray leaves the scene.
pub fn first_hit(scene: &Scene, origin: Vec3, dir: Vec3) -> Option<Hit> {
    let mut best: Option<(usize, f64)> = None;
    for s in scene.surfaces() {
        if let Some(t) = s.intersect(origin, dir, EPSILON_OFFSET) {
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((s.id, t));
            }
        }
    }
    best.map(|(id, t)| {
        let s = scene.surface(id);
        let d = dir.dot(s.normal);
        let normal = if d > 0.0 { -s.normal } else { s.normal };
        Hit { surface_id: id, t, point: origin + dir * t, normal, incidence_cos: d.abs().min(1.0) }
    })
}

/// Specular reflection `d - 2 (d.n) n`.
pub fn reflect_dir(dir: Vec3, normal: Vec3) -> Result<Vec3> {
    if (dir.norm() - 1.0).abs() > UNIT_TOL || (normal.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidInput("reflect_dir expects unit vectors".into()));
    }
    Ok(dir - normal * (2.0 * dir.dot(normal)))
}

/// Deterministic Fibonacci-sphere launch directions.
pub fn launch_directions(count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let n = count as f64;
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
