//! Regenerates `data/scenes/canonical.{json,xml}` and the replay fixtures
//! under `data/fixtures/canonical`.
//!
//! The requests are rendered exactly as `vlm_init` and `vlm_placement`
//! render them for the canonical scene (N = 8, M = 3, no image), so a replay
//! client answers both without touching the network.

use std::path::PathBuf;

use rfmat::forward_rt::RtConfig;
use rfmat::geometry::{canonical_scene, scene_to_json, scene_to_xml};
use rfmat::materials::{resolve_material, slot_permittivities, MaterialTable};
use rfmat::placement::{greedy_placement, CandidateGrid};
use rfmat::priors::{itu_init, render_prompt, write_fixture, PromptInputs, TemplateId};
use serde_json::json;

fn main() -> rfmat::Result<()> {
    let data = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    let dir = data.join("fixtures/canonical");
    let scene = canonical_scene();
    std::fs::create_dir_all(data.join("scenes"))?;
    std::fs::write(data.join("scenes/canonical.json"), scene_to_json(&scene)?)?;
    std::fs::write(data.join("scenes/canonical.xml"), scene_to_xml(&scene))?;
    let table = MaterialTable::itu();
    let (n, m) = (8, 3);

    let init = render_prompt(TemplateId::Init, &PromptInputs { table: Some(&table), ..Default::default() })?;
    let mut rows = Vec::new();
    for name in &scene.material_names {
        let e = resolve_material(&table, name)?;
        rows.push(json!({ "material_name": name, "c": e.c, "d": e.d, "source": format!("ITU-R: {}", e.name) }));
    }
    let reply = format!(
        "Materials identified from the scene labels and the table:\n\n```json\n{}\n```\n",
        serde_json::to_string_pretty(&rows)?
    );
    write_fixture(&dir, 0, &init, &reply)?;

    let xml = scene_to_xml(&scene);
    let pos = render_prompt(TemplateId::Pos, &PromptInputs { scene_xml: Some(&xml), n: Some(n), m: Some(m), ..Default::default() })?;
    let cfg = RtConfig::default();
    let eps = slot_permittivities(&table, &scene.material_names)?;
    let prior = itu_init(&table, &scene.material_names, cfg.f_ghz())?;
    let plan = greedy_placement(&scene, &prior.sigma_init, &eps, &cfg, &CandidateGrid::default_for(&scene)?, n, m)?;
    let mut out = Vec::new();
    for (t, trial) in plan.trials.iter().enumerate() {
        for (i, p) in std::iter::once(&trial.tx).chain(&trial.rx).enumerate() {
            let (kind, why) = if i == 0 {
                ("Tx", format!("Transmitter of configuration {}.", t + 1))
            } else {
                ("Rx", format!("Receiver {i} of configuration {}; sees box and wall reflections.", t + 1))
            };
            out.push(json!({ "id": format!("P_{}", out.len() + 1), "type": kind, "x": p.x, "y": p.y, "z": p.z, "reasoning": why }));
        }
    }
    write_fixture(&dir, 1, &pos, &serde_json::to_string_pretty(&out)?)?;
    println!("wrote scenes and fixtures under {}", data.display());
    Ok(())
}
