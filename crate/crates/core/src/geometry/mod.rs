//! Room geometry and ray-surface queries. Nothing here knows about conductivities.

mod intersect;
mod io;
mod scene;
mod vec3;

pub use intersect::{first_hit, launch_directions, reflect_dir, Hit, EPSILON_OFFSET};
pub use io::{load_scene, parse_scene_json, parse_scene_xml, scene_to_json, scene_to_xml, SceneFormat};
pub use scene::{
    build_paper_scene, canonical_scene, Aabb, ObjectKind, ObjectSpec, RoomSpec, Scene, SceneObject, SceneSpec,
    Surface, BOX_SIZE, CANONICAL_BOXES,
};
pub use vec3::Vec3;
