//! Scene file formats.
//!
//! JSON is the native format (`SceneSpec`). The XML importer understands a
//! small vocabulary of `<shape>` elements carrying `filename`, `translate`
//! and `scale` attributes, where the mesh file name selects the object kind
//! (`floor`, `wall`, `box`/`cube`) and the unit mesh is scaled to the object
//! size. Everything else is rejected as unsupported.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::{Aabb, ObjectKind, ObjectSpec, RoomSpec, Scene, SceneSpec};
use super::vec3::Vec3;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneFormat {
    Json,
    Xml,
}

impl SceneFormat {
    pub fn from_path(path: &Path) -> Option<SceneFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(SceneFormat::Json),
            "xml" => Some(SceneFormat::Xml),
            _ => None,
        }
    }
}

pub fn load_scene(path: &Path, format: SceneFormat) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    match format {
        SceneFormat::Json => parse_scene_json(&text),
        SceneFormat::Xml => parse_scene_xml(&text),
    }
}

pub fn parse_scene_json(text: &str) -> Result<Scene> {
    let spec: SceneSpec = serde_json::from_str(text).map_err(|e| Error::SceneParse(e.to_string()))?;
    Scene::from_spec(&spec)
}

pub fn scene_to_json(scene: &Scene) -> Result<String> {
    Ok(serde_json::to_string_pretty(&scene.to_spec())?)
}

/// XML form accepted by [`parse_scene_xml`]; also the geometry text sent to planners.
pub fn scene_to_xml(scene: &Scene) -> String {
    let mut out = String::from("<scene version=\"2.1.0\">\n");
    for o in &scene.objects {
        let mesh = match o.kind {
            ObjectKind::Floor => "floor",
            ObjectKind::Wall => "wall",
            ObjectKind::Box => "box",
        };
        out.push_str(&format!(
            "  <shape name=\"{}\" filename=\"meshes/{mesh}.ply\" material=\"{}\" translate=\"{} {} {}\" scale=\"{} {} {}\"/>\n",
            o.name, o.material, o.center.x, o.center.y, o.center.z, o.size.x, o.size.y, o.size.z
        ));
    }
    out.push_str("</scene>\n");
    out
}

const SHAPE_ATTRS: [&str; 5] = ["name", "filename", "material", "translate", "scale"];

pub fn parse_scene_xml(text: &str) -> Result<Scene> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::SceneParse(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "scene" {
        return Err(Error::Unsupported(format!("root element <{}>", root.tag_name().name())));
    }
    let mut objects = Vec::new();
    for node in root.children().filter(|n| n.is_element()) {
        if node.tag_name().name() != "shape" {
            return Err(Error::Unsupported(format!("element <{}>", node.tag_name().name())));
        }
        if let Some(child) = node.children().find(|n| n.is_element()) {
            return Err(Error::Unsupported(format!("nested element <{}> in <shape>", child.tag_name().name())));
        }
        for attr in node.attributes() {
            if !SHAPE_ATTRS.contains(&attr.name()) {
                return Err(Error::Unsupported(format!("shape attribute `{}`", attr.name())));
            }
        }
        let filename = node
            .attribute("filename")
            .ok_or_else(|| Error::SceneParse("shape without filename".into()))?;
        let kind = kind_from_filename(filename)?;
        let name = node.attribute("name").map(str::to_string).unwrap_or_else(|| format!("Shape{}", objects.len() + 1));
        let material = match node.attribute("material") {
            Some(m) => m.to_string(),
            None => name
                .rsplit_once('_')
                .map(|(_, m)| m.to_string())
                .ok_or_else(|| Error::SceneParse(format!("shape `{name}` has no material")))?,
        };
        let name = match name.rsplit_once('_') {
            Some((obj, m)) if m == material => obj.to_string(),
            _ => name,
        };
        let translate = parse_triple(node.attribute("translate").unwrap_or("0 0 0"))?;
        let scale = parse_triple(node.attribute("scale").unwrap_or("1 1 1"))?;
        objects.push(ObjectSpec { name, material, center: translate, size: scale, kind });
    }
    if objects.is_empty() {
        return Err(Error::NoObjects);
    }
    let room = room_from_shell(&objects)?;
    Scene::from_spec(&SceneSpec { room, objects })
}

fn kind_from_filename(filename: &str) -> Result<ObjectKind> {
    let stem = Path::new(filename)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(filename)
        .to_ascii_lowercase();
    if stem.contains("floor") {
        Ok(ObjectKind::Floor)
    } else if stem.contains("wall") {
        Ok(ObjectKind::Wall)
    } else if stem.contains("box") || stem.contains("cube") {
        Ok(ObjectKind::Box)
    } else {
        Err(Error::Unsupported(format!("mesh `{filename}`")))
    }
}

fn parse_triple(s: &str) -> Result<Vec3> {
    let parts: Vec<f64> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| Error::SceneParse(format!("bad number `{p}`"))))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [x, y, z] => Vec3::try_new(*x, *y, *z),
        [v] => Vec3::try_new(*v, *v, *v),
        _ => Err(Error::SceneParse(format!("expected 3 components, got `{s}`"))),
    }
}

/// Room bounds spanned by the floor and wall rectangles.
fn room_from_shell(objects: &[ObjectSpec]) -> Result<RoomSpec> {
    let mut shell = objects.iter().filter(|o| o.kind != ObjectKind::Box).map(|o| Aabb::from_center_size(o.center, o.size));
    let first = shell.next().ok_or_else(|| Error::SceneParse("scene needs a floor or wall".into()))?;
    let mut b = shell.fold(first, |acc, x| Aabb {
        min: Vec3::new(acc.min.x.min(x.min.x), acc.min.y.min(x.min.y), acc.min.z.min(x.min.z)),
        max: Vec3::new(acc.max.x.max(x.max.x), acc.max.y.max(x.max.y), acc.max.z.max(x.max.z)),
    });
    // A lone floor has no height; give the room the tallest box or a nominal 3 m.
    if b.max.z <= b.min.z {
        let tallest = objects.iter().map(|o| o.center.z + 0.5 * o.size.z).fold(0.0, f64::max);
        b.max.z = b.min.z + tallest.max(3.0);
    }
    Ok(RoomSpec { min: b.min, max: b.max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::canonical_scene;

    const ROOM_XML: &str = r#"<scene version="2.1.0">
  <shape name="Floor" filename="meshes/floor.ply" material="Brick" translate="0 0 0" scale="10 10 0"/>
  <shape name="Wall1" filename="meshes/wall.ply" material="Brick" translate="-5 0 1.5" scale="0 10 3"/>
  <shape name="Wall2" filename="meshes/wall.ply" material="Brick" translate="5 0 1.5" scale="0 10 3"/>
  <shape name="Wall3" filename="meshes/wall.ply" material="Brick" translate="0 -5 1.5" scale="10 0 3"/>
  <shape name="Wall4" filename="meshes/wall.ply" material="Brick" translate="0 5 1.5" scale="10 0 3"/>
  <shape name="Box1_Wood" filename="meshes/box.ply" translate="-3 3 0.5" scale="1 2 1"/>
  <shape name="Box2" filename="meshes/box.ply" material="Concrete" translate="3,-3,0.5" scale="1,2,1"/>
  <shape name="Box3" filename="meshes/box.ply" material="Marble" translate="-3 -3 0.5" scale="1 2 1"/>
  <shape name="Box4" filename="meshes/box.ply" material="Chipboard" translate="3 3 0.5" scale="1 2 1"/>
</scene>"#;

    #[test]
    fn xml_matches_canonical() {
        let s = parse_scene_xml(ROOM_XML).unwrap();
        assert_eq!(s, canonical_scene());
    }

    #[test]
    fn xml_round_trip() {
        for k in [5, 9, 15] {
            let s = crate::geometry::build_paper_scene(k, 3).unwrap();
            assert_eq!(parse_scene_xml(&scene_to_xml(&s)).unwrap(), s);
        }
    }

    #[test]
    fn json_round_trip() {
        let s = canonical_scene();
        let text = scene_to_json(&s).unwrap();
        assert_eq!(parse_scene_json(&text).unwrap(), s);
    }

    #[test]
    fn xml_rejects_unknown_elements() {
        let bad = r#"<scene><bsdf type="diffuse"/></scene>"#;
        assert!(matches!(parse_scene_xml(bad), Err(Error::Unsupported(_))));
        let bad = r#"<scene><shape filename="sphere.obj" material="Wood"/></scene>"#;
        assert!(matches!(parse_scene_xml(bad), Err(Error::Unsupported(_))));
        let bad = r#"<scene><shape filename="box.ply" material="Wood" rotate="0 0 1"/></scene>"#;
        assert!(matches!(parse_scene_xml(bad), Err(Error::Unsupported(_))));
    }

    #[test]
    fn json_empty_objects() {
        let text = r#"{"room":{"min":[-5,-5,0],"max":[5,5,3]},"objects":[]}"#;
        assert!(matches!(parse_scene_json(text), Err(Error::NoObjects)));
    }
}
