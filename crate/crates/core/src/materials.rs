//! ITU-R P.2040 material table, the `c * f^d` conductivity model and
//! ground-truth perturbation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conductivity clamp bounds in S/m.
pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 1e8;

const BUILTIN_TABLE: &str = include_str!("../data/itu_materials.json");
const BUILTIN_DICT: &str = include_str!("../data/prompts/itu_table.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItuEntry {
    pub name: String,
    /// Conductivity coefficient, S/m.
    pub c: f64,
    /// Frequency exponent.
    pub d: f64,
    pub eps_real: f64,
}

/// Conductivity `c * f_ghz^d` in S/m.
pub fn conductivity_at(entry: &ItuEntry, f_ghz: f64) -> f64 {
    entry.c * f_ghz.powf(entry.d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    entries: Vec<ItuEntry>,
    /// Normalized informal name -> canonical entry name.
    aliases: Vec<(String, String)>,
    /// Exact prompt text for the table, when it has a canonical printed form.
    dict_text: Option<String>,
}

#[derive(Deserialize)]
struct TableFile {
    #[serde(rename = "ITU_CONDUCTIVIT_PARAMS")]
    params: serde_json::Map<String, serde_json::Value>,
    relative_permittivity: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    aliases: serde_json::Map<String, serde_json::Value>,
}

/// Lowercase and drop everything that is not alphanumeric.
pub fn normalize_name(name: &str) -> String {
    name.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect()
}

impl MaterialTable {
    /// The built-in 17-entry table.
    pub fn itu() -> MaterialTable {
        let mut t = MaterialTable::from_json(BUILTIN_TABLE).expect("built-in table parses");
        t.dict_text = Some(BUILTIN_DICT.trim_end().to_string());
        t
    }

    pub fn from_json(text: &str) -> Result<MaterialTable> {
        let file: TableFile = serde_json::from_str(text)?;
        let mut entries = Vec::with_capacity(file.params.len());
        for (name, cd) in &file.params {
            let pair: (f64, f64) = serde_json::from_value(cd.clone())
                .map_err(|e| Error::Config(format!("material `{name}`: {e}")))?;
            let eps_real = file
                .relative_permittivity
                .get(name)
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| Error::Config(format!("material `{name}` has no relative permittivity")))?;
            if pair.0 < 0.0 || eps_real < 1.0 || !pair.0.is_finite() || !pair.1.is_finite() {
                return Err(Error::Config(format!("material `{name}` has out-of-range parameters")));
            }
            entries.push(ItuEntry { name: name.clone(), c: pair.0, d: pair.1, eps_real });
        }
        let mut table = MaterialTable { entries, aliases: Vec::new(), dict_text: None };
        for (alias, target) in &file.aliases {
            let target = target.as_str().ok_or_else(|| Error::Config(format!("alias `{alias}` is not a string")))?;
            if table.exact(target).is_none() {
                return Err(Error::Config(format!("alias `{alias}` points at unknown `{target}`")));
            }
            table.aliases.push((normalize_name(alias), target.to_string()));
        }
        Ok(table)
    }

    pub fn from_entries(entries: Vec<ItuEntry>) -> MaterialTable {
        MaterialTable { entries, aliases: Vec::new(), dict_text: None }
    }

    pub fn entries(&self) -> &[ItuEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn exact(&self, name: &str) -> Option<&ItuEntry> {
        let key = normalize_name(name);
        self.entries.iter().find(|e| normalize_name(&e.name) == key)
    }

    fn alias(&self, name: &str) -> Option<&ItuEntry> {
        let key = normalize_name(name);
        self.aliases.iter().find(|(a, _)| *a == key).and_then(|(_, t)| self.exact(t))
    }

    /// Python-style dictionary literal of `(c, d)` pairs, as embedded in prompts.
    pub fn render_dict(&self) -> String {
        if let Some(t) = &self.dict_text {
            return t.clone();
        }
        let mut out = String::from("ITU_CONDUCTIVIT_PARAMS = {\n");
        for e in &self.entries {
            out.push_str(&format!("    \"{}\": ({:?}, {:?}),\n", e.name, e.c, e.d));
        }
        out.push('}');
        out
    }
}

/// Resolve a material name: exact (case/underscore-insensitive), then alias,
/// then the same two lookups on `_`-separated suffixes so that object-prefixed
/// labels such as `Wall1_Brick` resolve to `Brick`.
pub fn resolve_material<'a>(table: &'a MaterialTable, name: &str) -> Result<&'a ItuEntry> {
    let lookup = |n: &str| table.exact(n).or_else(|| table.alias(n));
    if let Some(e) = lookup(name) {
        return Ok(e);
    }
    for (i, ch) in name.char_indices() {
        if ch == '_' {
            if let Some(e) = lookup(&name[i + 1..]) {
                return Ok(e);
            }
        }
    }
    Err(Error::UnknownMaterial(name.to_string()))
}

/// K conductivities in S/m, each inside `[SIGMA_MIN, SIGMA_MAX]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SigmaVector(Vec<f64>);

impl SigmaVector {
    pub fn new(values: Vec<f64>) -> Result<SigmaVector> {
        if let Some(v) = values.iter().find(|v| !(SIGMA_MIN..=SIGMA_MAX).contains(*v)) {
            return Err(Error::InvalidInput(format!("conductivity {v} outside [{SIGMA_MIN}, {SIGMA_MAX}]")));
        }
        Ok(SigmaVector(values))
    }

    /// Clamp every value into the admissible range.
    pub fn clamped(values: Vec<f64>) -> SigmaVector {
        SigmaVector(values.into_iter().map(clamp_sigma).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn clamp_sigma(v: f64) -> f64 {
    if v.is_nan() {
        SIGMA_MIN
    } else {
        v.clamp(SIGMA_MIN, SIGMA_MAX)
    }
}

/// Truncated normal multiplicative perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation { mean: 1.0, std: 0.1, lo: 0.8, hi: 1.2 }
    }
}

impl Perturbation {
    /// No perturbation: every factor is exactly the mean.
    pub fn none() -> Self {
        Perturbation { mean: 1.0, std: 0.0, lo: 1.0, hi: 1.0 }
    }

    /// One draw by rejection sampling.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        let normal = Normal::new(self.mean, self.std).expect("std is positive");
        loop {
            let x = normal.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sigma_hat: SigmaVector,
    pub lambda_draws: Vec<f64>,
    pub seed: u64,
}

pub fn perturb_ground_truth(table: &MaterialTable, material_names: &[String], f_ghz: f64, seed: u64) -> Result<GroundTruth> {
    perturb_ground_truth_with(table, material_names, f_ghz, seed, Perturbation::default())
}

pub fn perturb_ground_truth_with(
    table: &MaterialTable,
    material_names: &[String],
    f_ghz: f64,
    seed: u64,
    model: Perturbation,
) -> Result<GroundTruth> {
    let base: Vec<f64> = material_names
        .iter()
        .map(|n| resolve_material(table, n).map(|e| conductivity_at(e, f_ghz)))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda_draws: Vec<f64> = base.iter().map(|_| model.sample(&mut rng)).collect();
    let sigma = base.iter().zip(&lambda_draws).map(|(s, l)| l * s).collect();
    Ok(GroundTruth { sigma_hat: SigmaVector::clamped(sigma), lambda_draws, seed })
}

/// Relative permittivity per slot.
pub fn slot_permittivities(table: &MaterialTable, material_names: &[String]) -> Result<Vec<f64>> {
    material_names.iter().map(|n| resolve_material(table, n).map(|e| e.eps_real)).collect()
}
