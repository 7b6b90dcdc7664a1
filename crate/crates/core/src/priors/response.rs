//! Parsing of model replies and matching of material labels to scene slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::normalize_name;

/// Minimum longest-common-substring score for the fuzzy name fallback.
pub const FUZZY_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialAssignment {
    pub material_name: String,
    pub c: f64,
    pub d: f64,
    #[serde(default)]
    pub source: String,
}

impl MaterialAssignment {
    /// Rejects negative, non-finite or implausible parameters.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !self.c.is_finite() || self.c < 0.0 {
            return Err(format!("c = {} is not a finite non-negative value", self.c));
        }
        if !self.d.is_finite() || !(-1.0..=3.0).contains(&self.d) {
            return Err(format!("d = {} outside [-1, 3]", self.d));
        }
        Ok(())
    }

    /// Material named by the `source` field ("ITU-R: Brick"), else the label suffix.
    pub fn material(&self) -> &str {
        let src = self.source.trim();
        if let Some(rest) = src.split_once(':').map(|(_, r)| r.trim()).filter(|r| !r.is_empty()) {
            return rest;
        }
        self.material_name.rsplit_once('_').map_or(self.material_name.as_str(), |(_, m)| m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEntry {
    #[serde(default)]
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    #[serde(default)]
    pub reasoning: String,
}

fn malformed(reason: impl Into<String>, raw: &str) -> Error {
    Error::MalformedResponse { reason: reason.into(), raw: raw.to_string() }
}

/// The JSON array in a reply, tolerating prose or code fences around it.
pub fn extract_json_array(raw: &str) -> Result<serde_json::Value> {
    if let Ok(v @ serde_json::Value::Array(_)) = serde_json::from_str(raw.trim()) {
        return Ok(v);
    }
    let (start, end) = match (raw.find('['), raw.rfind(']')) {
        (Some(s), Some(e)) if e > s => (s, e),
        _ => return Err(malformed("no JSON list found", raw)),
    };
    let slice = strip_line_comments(&raw[start..=end]);
    match serde_json::from_str(&slice) {
        Ok(v @ serde_json::Value::Array(_)) => Ok(v),
        Ok(_) => Err(malformed("expected a JSON list", raw)),
        Err(e) => Err(malformed(format!("invalid JSON: {e}"), raw)),
    }
}

/// Drops `// ...` lines, which the prompt schemas use as elisions.
fn strip_line_comments(s: &str) -> String {
    s.lines().filter(|l| !l.trim_start().starts_with("//")).collect::<Vec<_>>().join("\n")
}

pub fn parse_assignments(raw: &str) -> Result<Vec<MaterialAssignment>> {
    serde_json::from_value(extract_json_array(raw)?).map_err(|e| malformed(format!("assignment schema: {e}"), raw))
}

pub fn parse_positions(raw: &str) -> Result<Vec<PositionEntry>> {
    serde_json::from_value(extract_json_array(raw)?).map_err(|e| malformed(format!("position schema: {e}"), raw))
}

/// Length of the longest common substring of two strings, in chars.
fn longest_common_substring(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut prev = vec![0usize; b.len() + 1];
    let mut best = 0;
    for i in 1..=a.len() {
        let mut cur = vec![0usize; b.len() + 1];
        for j in 1..=b.len() {
            if a[i - 1] == b[j - 1] {
                cur[j] = prev[j - 1] + 1;
                best = best.max(cur[j]);
            }
        }
        prev = cur;
    }
    best
}

/// Longest common substring over the longer normalized name, in [0, 1].
pub fn fuzzy_score(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize_name(a), normalize_name(b));
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    longest_common_substring(&a, &b) as f64 / longest as f64
}

/// How an assignment label was tied to a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Substring,
    Fuzzy,
}

/// Assign each slot at most one assignment.
///
/// Passes run in order: exact normalized label, then containment in either
/// direction (a bare "Brick" fills every brick slot), then a single best fuzzy
/// match per assignment. Earlier passes and earlier assignments win.
pub fn match_slots(slot_labels: &[String], assignments: &[MaterialAssignment]) -> Vec<Option<(usize, MatchKind)>> {
    let labels: Vec<String> = slot_labels.iter().map(|l| normalize_name(l)).collect();
    let mut out: Vec<Option<(usize, MatchKind)>> = vec![None; labels.len()];
    let keys: Vec<String> = assignments.iter().map(|a| normalize_name(&a.material_name)).collect();

    for (ai, key) in keys.iter().enumerate() {
        for (slot, label) in labels.iter().enumerate() {
            if out[slot].is_none() && label == key {
                out[slot] = Some((ai, MatchKind::Exact));
            }
        }
    }
    let used: Vec<bool> = (0..keys.len()).map(|ai| out.iter().flatten().any(|(a, _)| *a == ai)).collect();
    for (ai, key) in keys.iter().enumerate() {
        if used[ai] || key.is_empty() {
            continue;
        }
        for (slot, label) in labels.iter().enumerate() {
            if out[slot].is_none() && (label.contains(key.as_str()) || key.contains(label.as_str())) {
                out[slot] = Some((ai, MatchKind::Substring));
            }
        }
    }
    for (ai, a) in assignments.iter().enumerate() {
        if out.iter().flatten().any(|(x, _)| *x == ai) {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (slot, label) in slot_labels.iter().enumerate() {
            if out[slot].is_some() {
                continue;
            }
            let s = fuzzy_score(&a.material_name, label);
            if s >= FUZZY_THRESHOLD && best.is_none_or(|(_, b)| s > b) {
                best = Some((slot, s));
            }
        }
        if let Some((slot, _)) = best {
            out[slot] = Some((ai, MatchKind::Fuzzy));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(name: &str) -> MaterialAssignment {
        MaterialAssignment { material_name: name.into(), c: 0.01, d: 0.5, source: String::new() }
    }

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn extracts_from_fenced_reply() {
        let raw = "Here you go:\n```json\n[{\"material_name\": \"Wall1_Brick\", \"c\": 0.0238, \"d\": 0.16}]\n```";
        let v = parse_assignments(raw).unwrap();
        assert_eq!(v[0].c, 0.0238);
        assert_eq!(v[0].material(), "Brick");
        assert!(matches!(parse_assignments("no json here"), Err(Error::MalformedResponse { .. })));
        match parse_assignments("[{\"oops\": 1}]") {
            Err(Error::MalformedResponse { raw, .. }) => assert!(raw.contains("oops")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_example_with_elision_parses() {
        let raw = "[{\"id\": \"P_1\", \"type\": \"Tx\", \"x\": 2.5, \"y\": 1.0, \"z\": 1.5, \"reasoning\": \"r\"},\n// ... more\n{\"id\": \"P_2\", \"type\": \"Rx\", \"x\": -3.0, \"y\": 5.0, \"z\": 1.5}]";
        let v = parse_positions(raw).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].reasoning, "");
    }

    #[test]
    fn plausibility() {
        assert!(a("x").check().is_ok());
        assert!(MaterialAssignment { c: -1.0, ..a("x") }.check().is_err());
        assert!(MaterialAssignment { d: 3.5, ..a("x") }.check().is_err());
        assert!(MaterialAssignment { c: f64::NAN, ..a("x") }.check().is_err());
    }

    #[test]
    fn slot_matching_passes() {
        let l = labels(&["Floor_Brick", "Wall1_Brick", "Box1_Wood", "Box2_Concrete"]);
        let m = match_slots(&l, &[a("wall1 brick"), a("Brick"), a("Box1_Woood")]);
        assert_eq!(m[1], Some((0, MatchKind::Exact)));
        assert_eq!(m[0], Some((1, MatchKind::Substring)));
        assert_eq!(m[2], Some((2, MatchKind::Fuzzy)));
        assert_eq!(m[3], None);
    }

    #[test]
    fn fuzzy_scores() {
        assert_eq!(fuzzy_score("Box1_Wood", "box1wood"), 1.0);
        assert!(fuzzy_score("Box1_Woood", "Box1_Wood") >= 0.6);
        assert!(fuzzy_score("Chair", "Box2_Concrete") < 0.6);
        assert_eq!(fuzzy_score("", ""), 0.0);
    }
}
