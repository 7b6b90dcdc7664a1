//! Conductivity initialization: table-based, baseline and model-assisted.

mod client;
mod prompt;
mod response;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{clamp_sigma, conductivity_at, resolve_material, MaterialTable, SigmaVector};

pub use client::{
    write_fixture, LiveConfig, StubBehavior, StubContext, Transport, TranscriptEntry, VlmClient, VlmMode, API_KEY_ENV,
};
pub use prompt::{render_prompt, PromptInputs, RenderedPrompt, TemplateId};
pub use response::{
    extract_json_array, fuzzy_score, match_slots, parse_assignments, parse_positions, MatchKind, MaterialAssignment,
    PositionEntry, FUZZY_THRESHOLD,
};

/// Entries left out of the uniform baseline's average by default.
pub const UNIFORM_EXCLUDED: [&str; 2] = ["Vacuum", "Metal"];

/// Bounds of the random baseline, S/m.
pub const RANDOM_INIT_RANGE: (f64, f64) = (0.01, 0.06);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorInit {
    pub sigma_init: SigmaVector,
    /// Per slot: `itu:<material>`, `vlm:<material>`, `uniform` or `random`.
    pub sources: Vec<String>,
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
struct PriorExport {
    sigma: Vec<f64>,
    sources: Vec<String>,
}

impl PriorInit {
    /// `{"sigma": [...], "sources": [...]}`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PriorExport { sigma: self.sigma_init.values().to_vec(), sources: self.sources.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<PriorInit> {
        let e: PriorExport = serde_json::from_str(text)?;
        if e.sigma.len() != e.sources.len() {
            return Err(Error::Dimension { expected: e.sigma.len(), got: e.sources.len() });
        }
        Ok(PriorInit { sigma_init: SigmaVector::new(e.sigma)?, sources: e.sources, provenance: "loaded from file".into() })
    }
}

/// Mean table conductivity at `f_ghz` over entries not in `excluded`.
pub fn uniform_value(table: &MaterialTable, f_ghz: f64, excluded: &[&str]) -> Result<f64> {
    let vals: Vec<f64> = table
        .entries()
        .iter()
        .filter(|e| !excluded.iter().any(|x| x.eq_ignore_ascii_case(&e.name)))
        .map(|e| conductivity_at(e, f_ghz))
        .collect();
    if vals.is_empty() {
        return Err(Error::InvalidInput("no table entries left to average".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn uniform_init(table: &MaterialTable, k: usize, f_ghz: f64) -> Result<PriorInit> {
    uniform_init_excluding(table, k, f_ghz, &UNIFORM_EXCLUDED)
}

pub fn uniform_init_excluding(table: &MaterialTable, k: usize, f_ghz: f64, excluded: &[&str]) -> Result<PriorInit> {
    let v = clamp_sigma(uniform_value(table, f_ghz, excluded)?);
    Ok(PriorInit {
        sigma_init: SigmaVector::clamped(vec![v; k]),
        sources: vec!["uniform".into(); k],
        provenance: format!("mean table conductivity at {f_ghz} GHz excluding {excluded:?}"),
    })
}

pub fn random_init(k: usize, seed: u64) -> Result<PriorInit> {
    if k == 0 {
        return Err(Error::InvalidInput("random init needs at least one slot".into()));
    }
    let (lo, hi) = RANDOM_INIT_RANGE;
    let dist = Uniform::new_inclusive(lo, hi).expect("valid range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..k).map(|_| dist.sample(&mut rng)).collect();
    Ok(PriorInit {
        sigma_init: SigmaVector::clamped(v),
        sources: vec!["random".into(); k],
        provenance: format!("U[{lo}, {hi}] S/m, seed {seed}"),
    })
}

/// Table conductivity of each slot's true material.
pub fn itu_init(table: &MaterialTable, material_names: &[String], f_ghz: f64) -> Result<PriorInit> {
    let mut sigma = Vec::with_capacity(material_names.len());
    let mut sources = Vec::with_capacity(material_names.len());
    for n in material_names {
        let e = resolve_material(table, n)?;
        sigma.push(conductivity_at(e, f_ghz));
        sources.push(format!("itu:{}", e.name));
    }
    Ok(PriorInit { sigma_init: SigmaVector::clamped(sigma), sources, provenance: format!("table lookup at {f_ghz} GHz") })
}

/// Asks the model for `(c, d)` per material and maps the answers onto slots.
///
/// Slots nobody answered for fall back to the uniform baseline.
pub fn vlm_init(
    image: Option<&Path>,
    table: &MaterialTable,
    client: &mut VlmClient,
    material_names: &[String],
    f_ghz: f64,
) -> Result<PriorInit> {
    let prompt = render_prompt(TemplateId::Init, &PromptInputs { table: Some(table), image, ..Default::default() })?;
    let context = StubContext::Init { material_names: material_names.to_vec(), table: table.clone() };
    let raw = client.query(&prompt, &context)?;
    let parsed = parse_assignments(&raw)?;
    let mut notes = Vec::new();
    let valid: Vec<MaterialAssignment> = parsed
        .into_iter()
        .filter(|a| match a.check() {
            Ok(()) => true,
            Err(why) => {
                log::warn!("rejected assignment `{}`: {why}", a.material_name);
                notes.push(format!("rejected {}: {why}", a.material_name));
                false
            }
        })
        .collect();
    let matches = match_slots(material_names, &valid);
    if matches.iter().all(Option::is_none) {
        return Err(Error::NoMatchedSlots);
    }
    let fallback = clamp_sigma(uniform_value(table, f_ghz, &UNIFORM_EXCLUDED)?);
    let mut sigma = Vec::with_capacity(material_names.len());
    let mut sources = Vec::with_capacity(material_names.len());
    for (slot, m) in matches.iter().enumerate() {
        match m {
            Some((ai, kind)) => {
                let a = &valid[*ai];
                sigma.push(a.c * f_ghz.powf(a.d));
                sources.push(format!("vlm:{}", a.material()));
                if *kind != MatchKind::Exact {
                    notes.push(format!("{} matched `{}` ({kind:?})", material_names[slot], a.material_name));
                }
            }
            None => {
                log::warn!("no model assignment for slot `{}`; using uniform value", material_names[slot]);
                notes.push(format!("{} unmatched, uniform fallback", material_names[slot]));
                sigma.push(fallback);
                sources.push("uniform".into());
            }
        }
    }
    let mut provenance = format!("model reply to `{}` prompt", TemplateId::Init.as_str());
    if !notes.is_empty() {
        provenance.push_str("; ");
        provenance.push_str(&notes.join("; "));
    }
    Ok(PriorInit { sigma_init: SigmaVector::clamped(sigma), sources, provenance })
}
