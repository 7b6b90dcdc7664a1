use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vec3::Vec3;
use crate::error::{Error, Result};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_center_size(center: Vec3, size: Vec3) -> Self {
        let half = size * 0.5;
        Aabb { min: center - half, max: center + half }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vec3::new(margin, margin, margin);
        Aabb { min: self.min - m, max: self.max + m }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Open-interval overlap test; boxes that only touch do not overlap.
    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] < o.max[a] && o.min[a] < self.max[a])
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|a| (self.max[a] - self.min[a]).max(0.0)).product()
    }

    pub fn intersection(&self, o: &Aabb) -> Aabb {
        let lo = Vec3::new(self.min.x.max(o.min.x), self.min.y.max(o.min.y), self.min.z.max(o.min.z));
        let hi = Vec3::new(self.max.x.min(o.max.x), self.max.y.min(o.max.y), self.max.z.min(o.max.z));
        Aabb { min: lo, max: hi }
    }
}

/// Axis-aligned rectangle carrying one material slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub id: usize,
    pub material_slot: usize,
    pub center: Vec3,
    /// Outward unit normal; always one of the six axis directions.
    pub normal: Vec3,
    /// Full side lengths along the two in-plane axes, in ascending axis order.
    pub extents: [f64; 2],
}

impl Surface {
    pub fn new(id: usize, material_slot: usize, center: Vec3, normal: Vec3, extents: [f64; 2]) -> Result<Self> {
        if (normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("surface {id}: normal not unit length")));
        }
        if (0..3).filter(|&a| normal[a] != 0.0).count() != 1 {
            return Err(Error::Unsupported(format!("surface {id}: only axis-aligned rectangles are supported")));
        }
        if !(extents[0] > 0.0 && extents[1] > 0.0) {
            return Err(Error::InvalidInput(format!("surface {id}: extents must be positive")));
        }
        Ok(Surface { id, material_slot, center, normal, extents })
    }

    pub fn normal_axis(&self) -> usize {
        (0..3).find(|&a| self.normal[a] != 0.0).unwrap_or(2)
    }

    pub fn tangent_axes(&self) -> [usize; 2] {
        match self.normal_axis() {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    /// Whether `p` (assumed on the plane) lies within the rectangle, with tolerance `tol`.
    pub fn contains_in_plane(&self, p: Vec3, tol: f64) -> bool {
        let [u, v] = self.tangent_axes();
        (p[u] - self.center[u]).abs() <= 0.5 * self.extents[0] + tol
            && (p[v] - self.center[v]).abs() <= 0.5 * self.extents[1] + tol
    }

    /// Ray parameter of the plane crossing inside the rectangle, if any with `t > t_min`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<f64> {
        let a = self.normal_axis();
        if dir[a].abs() < 1e-15 {
            return None;
        }
        let t = (self.center[a] - origin[a]) / dir[a];
        if t <= t_min || !t.is_finite() {
            return None;
        }
        let p = origin + dir * t;
        self.contains_in_plane(p, 1e-9).then_some(t)
    }

    /// Mirror image of a point across the surface plane.
    pub fn mirror(&self, p: Vec3) -> Vec3 {
        let a = self.normal_axis();
        p.with_axis(a, 2.0 * self.center[a] - p[a])
    }

    /// Signed distance of `p` from the plane along the outward normal.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.center).dot(self.normal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Floor,
    Wall,
    Box,
}

/// Plain object description used by the file formats and scene builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub material: String,
    pub center: Vec3,
    pub size: Vec3,
    pub kind: ObjectKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub min: Vec3,
    pub max: Vec3,
}

/// Canonical JSON scene document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub objects: Vec<ObjectSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub material: String,
    pub kind: ObjectKind,
    pub center: Vec3,
    pub size: Vec3,
    pub material_slot: usize,
    pub surfaces: Vec<Surface>,
}

impl SceneObject {
    pub fn aabb(&self) -> Aabb {
        Aabb::from_center_size(self.center, self.size)
    }
}

/// Immutable room geometry with one conductivity slot per object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub room: Aabb,
    /// `<object>_<material>` label for each slot, e.g. `Wall1_Brick`.
    pub material_names: Vec<String>,
    surfaces: Vec<Surface>,
}

impl Scene {
    pub fn from_spec(spec: &SceneSpec) -> Result<Scene> {
        if spec.objects.is_empty() {
            return Err(Error::NoObjects);
        }
        let room = Aabb::new(spec.room.min, spec.room.max);
        if !(0..3).all(|a| room.max[a] > room.min[a]) {
            return Err(Error::SceneParse("room max must exceed room min".into()));
        }
        let room_center = room.center();
        let mut objects = Vec::with_capacity(spec.objects.len());
        let mut material_names: Vec<String> = Vec::with_capacity(spec.objects.len());
        let mut next_id = 0;

        for (slot, o) in spec.objects.iter().enumerate() {
            if !o.center.is_finite() || !o.size.is_finite() {
                return Err(Error::SceneParse(format!("object `{}` has non-finite geometry", o.name)));
            }
            let label = format!("{}_{}", o.name, o.material);
            if spec.objects[..slot].iter().any(|p| p.name == o.name) || material_names.contains(&label) {
                return Err(Error::DuplicateSlot(o.name.clone()));
            }
            let surfaces = object_surfaces(o, slot, room_center, &mut next_id)?;
            if o.kind == ObjectKind::Box {
                let b = Aabb::from_center_size(o.center, o.size);
                let inside_xy = (0..2).all(|a| b.min[a] > room.min[a] && b.max[a] < room.max[a]);
                let inside_z = b.min.z >= room.min.z - 1e-12 && b.max.z < room.max.z;
                if !inside_xy || !inside_z {
                    return Err(Error::OutsideRoom(o.name.clone()));
                }
            }
            material_names.push(label);
            objects.push(SceneObject {
                name: o.name.clone(),
                material: o.material.clone(),
                kind: o.kind,
                center: o.center,
                size: o.size,
                material_slot: slot,
                surfaces,
            });
        }

        let boxes: Vec<&SceneObject> = objects.iter().filter(|o| o.kind == ObjectKind::Box).collect();
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                if a.aabb().overlaps(&b.aabb()) {
                    return Err(Error::Collision(a.name.clone(), b.name.clone()));
                }
            }
        }

        let surfaces = objects.iter().flat_map(|o| o.surfaces.iter().cloned()).collect();
        Ok(Scene { objects, room, material_names, surfaces })
    }

    pub fn to_spec(&self) -> SceneSpec {
        SceneSpec {
            room: RoomSpec { min: self.room.min, max: self.room.max },
            objects: self
                .objects
                .iter()
                .map(|o| ObjectSpec {
                    name: o.name.clone(),
                    material: o.material.clone(),
                    center: o.center,
                    size: o.size,
                    kind: o.kind,
                })
                .collect(),
        }
    }

    /// Number of conductivity slots K.
    pub fn num_slots(&self) -> usize {
        self.objects.len()
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn surface(&self, id: usize) -> &Surface {
        &self.surfaces[id]
    }

    /// ITU material name per slot (without the object prefix).
    pub fn slot_materials(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.material.as_str()).collect()
    }

    pub fn boxes(&self) -> impl Iterator<Item = Aabb> + '_ {
        self.objects.iter().filter(|o| o.kind == ObjectKind::Box).map(SceneObject::aabb)
    }

    /// Inside the room shrunk by `margin` and outside every box grown by `margin`.
    pub fn is_free(&self, p: Vec3, margin: f64) -> bool {
        if !p.is_finite() {
            return false;
        }
        let inner = self.room.expanded(-margin);
        inner.contains(p) && !self.boxes().any(|b| b.expanded(margin).contains(p))
    }

    /// Inside the room and not inside (or on) a box; used for Tx/Rx preconditions.
    pub fn is_open(&self, p: Vec3) -> bool {
        p.is_finite()
            && (0..3).all(|a| p[a] > self.room.min[a] && p[a] < self.room.max[a])
            && !self.boxes().any(|b| b.contains(p))
    }

    /// A single floor slab with no walls; handy for ground-reflection checks.
    pub fn floor_only(half_width: f64, height: f64, material: &str) -> Result<Scene> {
        Scene::from_spec(&SceneSpec {
            room: RoomSpec {
                min: Vec3::new(-half_width, -half_width, 0.0),
                max: Vec3::new(half_width, half_width, height),
            },
            objects: vec![ObjectSpec {
                name: "Floor".into(),
                material: material.into(),
                center: Vec3::ZERO,
                size: Vec3::new(2.0 * half_width, 2.0 * half_width, 0.0),
                kind: ObjectKind::Floor,
            }],
        })
    }
}

fn object_surfaces(o: &ObjectSpec, slot: usize, room_center: Vec3, next_id: &mut usize) -> Result<Vec<Surface>> {
    let mut out = Vec::new();
    let mut push = |center: Vec3, normal: Vec3, extents: [f64; 2], out: &mut Vec<Surface>| -> Result<()> {
        out.push(Surface::new(*next_id, slot, center, normal, extents)?);
        *next_id += 1;
        Ok(())
    };
    let s = o.size;
    match o.kind {
        ObjectKind::Floor => {
            if s.z != 0.0 {
                return Err(Error::SceneParse(format!("floor `{}` must have zero z size", o.name)));
            }
            push(o.center, Vec3::new(0.0, 0.0, 1.0), [s.x, s.y], &mut out)?;
        }
        ObjectKind::Wall => {
            let flat: Vec<usize> = (0..2).filter(|&a| s[a] == 0.0).collect();
            if flat.len() != 1 {
                return Err(Error::SceneParse(format!(
                    "wall `{}` needs exactly one zero horizontal size component",
                    o.name
                )));
            }
            let a = flat[0];
            let sign = if room_center[a] >= o.center[a] { 1.0 } else { -1.0 };
            let normal = Vec3::ZERO.with_axis(a, sign);
            let extents = if a == 0 { [s.y, s.z] } else { [s.x, s.z] };
            push(o.center, normal, extents, &mut out)?;
        }
        ObjectKind::Box => {
            if !(s.x > 0.0 && s.y > 0.0 && s.z > 0.0) {
                return Err(Error::SceneParse(format!("box `{}` needs positive size", o.name)));
            }
            let c = o.center;
            push(c + Vec3::new(0.0, 0.0, 0.5 * s.z), Vec3::new(0.0, 0.0, 1.0), [s.x, s.y], &mut out)?;
            for sign in [-1.0, 1.0] {
                push(c + Vec3::new(sign * 0.5 * s.x, 0.0, 0.0), Vec3::new(sign, 0.0, 0.0), [s.y, s.z], &mut out)?;
            }
            for sign in [-1.0, 1.0] {
                push(c + Vec3::new(0.0, sign * 0.5 * s.y, 0.0), Vec3::new(0.0, sign, 0.0), [s.x, s.z], &mut out)?;
            }
        }
    }
    Ok(out)
}

/// The four boxes of the reference room, in slot order after floor and walls.
pub const CANONICAL_BOXES: [(&str, f64, f64); 4] =
    [("Wood", -3.0, 3.0), ("Concrete", 3.0, -3.0), ("Marble", -3.0, -3.0), ("Chipboard", 3.0, 3.0)];

/// Extra box sites used when K > 9, with their materials.
const EXTRA_BOXES: [(&str, f64, f64); 6] = [
    ("Plasterboard", 0.0, 3.0),
    ("Floorboard", 0.0, -3.0),
    ("Plywood", -3.0, 0.0),
    ("Glass_low_freq", 3.0, 0.0),
    ("Ceiling_board_low_freq", 0.0, 0.0),
    ("Medium_dry_ground", -1.5, -1.5),
];

pub const BOX_SIZE: Vec3 = Vec3::new(1.0, 2.0, 1.0);
const EXTRA_JITTER: f64 = 0.2;

/// 10 m x 10 m x 3 m brick room with `num_objects - 5` boxes.
///
/// The first four boxes reproduce the reference layout; further boxes sit on a
/// fixed grid of sites with a seeded jitter of up to 0.2 m per axis.
pub fn build_paper_scene(num_objects: usize, seed: u64) -> Result<Scene> {
    if !(5..=15).contains(&num_objects) {
        return Err(Error::InvalidInput(format!("num_objects must be in [5, 15], got {num_objects}")));
    }
    let mut objects = vec![ObjectSpec {
        name: "Floor".into(),
        material: "Brick".into(),
        center: Vec3::ZERO,
        size: Vec3::new(10.0, 10.0, 0.0),
        kind: ObjectKind::Floor,
    }];
    let walls = [
        (Vec3::new(-5.0, 0.0, 1.5), Vec3::new(0.0, 10.0, 3.0)),
        (Vec3::new(5.0, 0.0, 1.5), Vec3::new(0.0, 10.0, 3.0)),
        (Vec3::new(0.0, -5.0, 1.5), Vec3::new(10.0, 0.0, 3.0)),
        (Vec3::new(0.0, 5.0, 1.5), Vec3::new(10.0, 0.0, 3.0)),
    ];
    for (i, (center, size)) in walls.into_iter().enumerate() {
        objects.push(ObjectSpec {
            name: format!("Wall{}", i + 1),
            material: "Brick".into(),
            center,
            size,
            kind: ObjectKind::Wall,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_boxes = num_objects - 5;
    for i in 0..n_boxes {
        let (material, x, y) = if i < CANONICAL_BOXES.len() {
            CANONICAL_BOXES[i]
        } else {
            let (m, x, y) = EXTRA_BOXES[i - CANONICAL_BOXES.len()];
            let jx = rng.random_range(-EXTRA_JITTER..=EXTRA_JITTER);
            let jy = rng.random_range(-EXTRA_JITTER..=EXTRA_JITTER);
            (m, x + jx, y + jy)
        };
        objects.push(ObjectSpec {
            name: format!("Box{}", i + 1),
            material: material.into(),
            center: Vec3::new(x, y, 0.5 * BOX_SIZE.z),
            size: BOX_SIZE,
            kind: ObjectKind::Box,
        });
    }

    Scene::from_spec(&SceneSpec {
        room: RoomSpec { min: Vec3::new(-5.0, -5.0, 0.0), max: Vec3::new(5.0, 5.0, 3.0) },
        objects,
    })
}

/// The K = 9 reference room.
pub fn canonical_scene() -> Scene {
    build_paper_scene(9, 0).expect("reference layout is valid")
}
