use std::path::Path;

use super::{describe_violations, plan_violations, PlacementPlan, PlacementRules, PlacementSource};
use crate::error::{Error, Result};
use crate::geometry::{parse_scene_xml, Scene, Vec3};
use crate::inverse::TrialConfig;
use crate::priors::{parse_positions, render_prompt, PositionEntry, PromptInputs, StubContext, TemplateId, VlmClient};

/// Splits a flat position list into trials: each `Tx` opens a trial, `Rx` entries join it.
pub fn group_positions(entries: &[PositionEntry], raw: &str) -> Result<(Vec<TrialConfig>, Vec<Vec<String>>)> {
    let mut trials: Vec<TrialConfig> = Vec::new();
    let mut notes: Vec<Vec<String>> = Vec::new();
    for e in entries {
        let p = Vec3::new(e.x, e.y, e.z);
        match e.kind.trim().to_ascii_lowercase().as_str() {
            "tx" => {
                trials.push(TrialConfig { tx: p, rx: Vec::new() });
                notes.push(vec![e.reasoning.clone()]);
            }
            "rx" => {
                let t = trials.last_mut().ok_or_else(|| Error::MalformedResponse {
                    reason: format!("receiver `{}` appears before any transmitter", e.id),
                    raw: raw.to_string(),
                })?;
                t.rx.push(p);
                notes.last_mut().expect("parallel to trials").push(e.reasoning.clone());
            }
            other => {
                return Err(Error::MalformedResponse { reason: format!("unknown position type `{other}`"), raw: raw.to_string() })
            }
        }
    }
    Ok((trials, notes))
}

fn check_counts(trials: &[TrialConfig], n: usize, m: usize) -> Result<()> {
    if trials.len() != m {
        return Err(Error::CountMismatch(format!("expected {m} transmitters, got {}", trials.len())));
    }
    if let Some((i, t)) = trials.iter().enumerate().find(|(_, t)| t.rx.len() != n) {
        return Err(Error::CountMismatch(format!("trial {i} has {} receivers, expected {n}", t.rx.len())));
    }
    Ok(())
}

fn ask(client: &mut VlmClient, template: TemplateId, inputs: &PromptInputs, ctx: &StubContext) -> Result<(Vec<TrialConfig>, Vec<Vec<String>>)> {
    let prompt = render_prompt(template, inputs)?;
    let raw = client.query(&prompt, ctx)?;
    group_positions(&parse_positions(&raw)?, &raw)
}

/// Plan from a model reply, with one repair round for individually invalid points.
pub fn vlm_placement(scene_xml: &str, image: Option<&Path>, n: usize, m: usize, client: &mut VlmClient) -> Result<PlacementPlan> {
    let scene: Scene = parse_scene_xml(scene_xml)?;
    let rules = PlacementRules::default();
    let ctx = StubContext::Pos { scene: Box::new(scene.clone()), n, m };
    let base = PromptInputs { scene_xml: Some(scene_xml), image, n: Some(n), m: Some(m), ..Default::default() };

    let (mut trials, mut notes) = ask(client, TemplateId::Pos, &base, &ctx)?;
    check_counts(&trials, n, m)?;
    let violations = plan_violations(&scene, &trials, &rules);
    if !violations.is_empty() {
        let text = describe_violations(&violations);
        log::warn!("model proposed invalid positions; requesting repair:\n{text}");
        let repair = PromptInputs { invalid: Some(&text), rules: Some(rules), ..base };
        (trials, notes) = ask(client, TemplateId::PosRepair, &repair, &ctx)?;
        check_counts(&trials, n, m)?;
        let left = plan_violations(&scene, &trials, &rules);
        if !left.is_empty() {
            return Err(Error::OutOfBounds(describe_violations(&left)));
        }
    }
    Ok(PlacementPlan { trials, rationale: notes, source: PlacementSource::Vlm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{canonical_scene, scene_to_xml};
    use crate::priors::StubBehavior;

    const BAD: &str = r#"[{"id": "P_1", "type": "Tx", "x": 2.5, "y": 1.0, "z": 1.5, "reasoning": "tx"},
                          {"id": "P_2", "type": "Rx", "x": -3.0, "y": 5.0, "z": 1.5, "reasoning": "rx"}]"#;
    const FIXED: &str = r#"[{"id": "P_1", "type": "Tx", "x": 2.5, "y": 1.0, "z": 1.5, "reasoning": "tx"},
                            {"id": "P_2", "type": "Rx", "x": -3.0, "y": 4.5, "z": 1.5, "reasoning": "moved inside"}]"#;

    fn xml() -> String {
        scene_to_xml(&canonical_scene())
    }

    #[test]
    fn repair_round_trip() {
        let mut c = VlmClient::stub(StubBehavior::Scripted(vec![BAD.into(), FIXED.into()]));
        let plan = vlm_placement(&xml(), None, 1, 1, &mut c).unwrap();
        assert_eq!(plan.trials[0].rx[0], Vec3::new(-3.0, 4.5, 1.5));
        assert_eq!(plan.rationale[0][1], "moved inside");
        let t = c.transcript();
        assert_eq!((t[0].template, t[1].template), (TemplateId::Pos, TemplateId::PosRepair));
    }

    #[test]
    fn unrepaired_points_are_reported() {
        let mut c = VlmClient::stub(StubBehavior::Scripted(vec![BAD.into(), BAD.into()]));
        match vlm_placement(&xml(), None, 1, 1, &mut c) {
            Err(Error::OutOfBounds(msg)) => assert!(msg.contains("rx 1 (-3, 5, 1.5)"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn happy_path_and_failures() {
        let mut c = VlmClient::stub(StubBehavior::Oracle);
        let plan = vlm_placement(&xml(), None, 4, 2, &mut c).unwrap();
        assert_eq!(plan.source, PlacementSource::Vlm);
        plan.validate(&canonical_scene(), 4, 2, &PlacementRules::default()).unwrap();

        let mut c = VlmClient::stub(StubBehavior::Scripted(vec!["Sorry, no positions today.".into()]));
        match vlm_placement(&xml(), None, 1, 1, &mut c) {
            Err(Error::MalformedResponse { raw, .. }) => assert!(raw.contains("Sorry")),
            other => panic!("{other:?}"),
        }
        let mut c = VlmClient::stub(StubBehavior::Scripted(vec![FIXED.into()]));
        assert!(matches!(vlm_placement(&xml(), None, 2, 1, &mut c), Err(Error::CountMismatch(_))));
    }
}
