//! Vision-language model client: live HTTP, recorded replay, or offline stub.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::{hash_text, RenderedPrompt, TemplateId};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::materials::{resolve_material, MaterialTable};
use crate::placement::random_placement;

/// Environment variable holding the bearer credential for live mode.
pub const API_KEY_ENV: &str = "RFMAT_VLM_API_KEY";

/// Something that can deliver a prompt to a model and return its text reply.
pub trait Transport: Send {
    fn send(&mut self, prompt: &RenderedPrompt) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StubBehavior {
    /// Answers with the scene's true materials.
    Oracle,
    /// Like `Oracle`, but `ceil(p * K)` slots get a random other table entry.
    Noisy { p: f64, seed: u64 },
    /// Returns these replies in order, whatever the request.
    Scripted(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VlmMode {
    Live(LiveConfig),
    Replay(PathBuf),
    Stub(StubBehavior),
}

/// Ground truth handed to the stub; live and replay modes ignore it.
#[derive(Debug, Clone, Default)]
pub enum StubContext {
    #[default]
    None,
    Init { material_names: Vec<String>, table: MaterialTable },
    Pos { scene: Box<Scene>, n: usize, m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub template: TemplateId,
    pub request_hash: String,
    pub response: String,
    pub seconds: f64,
}

pub struct VlmClient {
    mode: VlmMode,
    network: Option<Box<dyn Transport>>,
    fixtures: BTreeMap<(TemplateId, String), String>,
    script_pos: usize,
    transcript: Vec<TranscriptEntry>,
}

impl std::fmt::Debug for VlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VlmClient").field("mode", &self.mode).field("transcript", &self.transcript.len()).finish()
    }
}

impl VlmClient {
    pub fn stub(behavior: StubBehavior) -> Self {
        VlmClient::bare(VlmMode::Stub(behavior))
    }

    /// Loads every `NNN_<template>.request.txt` / `.response.txt` pair in `dir`.
    pub fn replay(dir: &Path) -> Result<Self> {
        let mut client = VlmClient::bare(VlmMode::Replay(dir.to_path_buf()));
        client.fixtures = load_fixtures(dir)?;
        Ok(client)
    }

    /// Live HTTP mode; fails immediately when the credential is not set.
    pub fn live(config: LiveConfig) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Config(format!("live VLM mode needs the {API_KEY_ENV} environment variable")))?;
        let transport = http_transport(&config, key)?;
        Ok(VlmClient::bare(VlmMode::Live(config)).with_network(transport))
    }

    /// Replaces the network transport. Only live mode ever uses it.
    pub fn with_network(mut self, transport: Box<dyn Transport>) -> Self {
        self.network = Some(transport);
        self
    }

    fn bare(mode: VlmMode) -> Self {
        VlmClient { mode, network: None, fixtures: BTreeMap::new(), script_pos: 0, transcript: Vec::new() }
    }

    pub fn mode(&self) -> &VlmMode {
        &self.mode
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn query(&mut self, prompt: &RenderedPrompt, context: &StubContext) -> Result<String> {
        let start = Instant::now();
        let hash = prompt.content_hash();
        let response = match &self.mode {
            VlmMode::Live(_) => {
                let net = self.network.as_mut().ok_or_else(|| Error::Config("live mode without a transport".into()))?;
                match net.send(prompt) {
                    Err(Error::Transport(e)) => {
                        log::warn!("vlm transport failed ({e}); retrying once");
                        net.send(prompt)?
                    }
                    other => other?,
                }
            }
            VlmMode::Replay(_) => self
                .fixtures
                .get(&(prompt.template, hash.clone()))
                .cloned()
                .ok_or_else(|| Error::NoFixture { template: prompt.template.as_str().into(), hash: hash.clone() })?,
            VlmMode::Stub(StubBehavior::Scripted(replies)) => {
                let r = replies
                    .get(self.script_pos)
                    .cloned()
                    .ok_or_else(|| Error::Transport("scripted stub has no replies left".into()))?;
                self.script_pos += 1;
                r
            }
            VlmMode::Stub(b) => stub_reply(b, prompt.template, context)?,
        };
        let seconds = start.elapsed().as_secs_f64();
        log::info!("vlm {} reply in {seconds:.3} s", prompt.template.as_str());
        self.transcript.push(TranscriptEntry { template: prompt.template, request_hash: hash, response: response.clone(), seconds });
        Ok(response)
    }
}

fn load_fixtures(dir: &Path) -> Result<BTreeMap<(TemplateId, String), String>> {
    let mut out = BTreeMap::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    names.sort();
    for req in names {
        let Some(file) = req.file_name().and_then(|f| f.to_str()) else { continue };
        let Some(stem) = file.strip_suffix(".request.txt") else { continue };
        let template = stem
            .split_once('_')
            .and_then(|(_, t)| TemplateId::parse(t))
            .ok_or_else(|| Error::Config(format!("fixture `{file}` is not named NNN_<template>.request.txt")))?;
        let resp_path = req.with_file_name(format!("{stem}.response.txt"));
        let request = std::fs::read_to_string(&req)?;
        let response = std::fs::read_to_string(&resp_path)
            .map_err(|e| Error::Config(format!("fixture `{file}` has no response file: {e}")))?;
        out.insert((template, hash_text(&request)), response);
    }
    Ok(out)
}

/// Writes one fixture pair; `index` orders the files in the directory.
pub fn write_fixture(dir: &Path, index: usize, prompt: &RenderedPrompt, response: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = format!("{index:03}_{}", prompt.template.as_str());
    std::fs::write(dir.join(format!("{stem}.request.txt")), prompt.request_text())?;
    std::fs::write(dir.join(format!("{stem}.response.txt")), response)?;
    Ok(())
}

fn stub_reply(behavior: &StubBehavior, template: TemplateId, context: &StubContext) -> Result<String> {
    match (template, context) {
        (TemplateId::Init, StubContext::Init { material_names, table }) => stub_init(behavior, material_names, table),
        (TemplateId::Pos | TemplateId::PosRepair, StubContext::Pos { scene, n, m }) => {
            let seed = match behavior {
                StubBehavior::Noisy { seed, .. } => *seed,
                _ => 0,
            };
            stub_positions(scene, *n, *m, seed)
        }
        _ => Err(Error::Config(format!("stub has no context for the `{}` template", template.as_str()))),
    }
}

#[derive(Serialize)]
struct AssignmentOut<'a> {
    material_name: &'a str,
    c: f64,
    d: f64,
    source: String,
}

fn stub_init(behavior: &StubBehavior, names: &[String], table: &MaterialTable) -> Result<String> {
    let mut picks = names.iter().map(|n| resolve_material(table, n)).collect::<Result<Vec<_>>>()?;
    if let StubBehavior::Noisy { p, seed } = behavior {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::Config(format!("noisy stub fraction {p} outside [0, 1]")));
        }
        let k = names.len();
        let swaps = ((p * k as f64).ceil() as usize).min(k);
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        for slot in sample(&mut rng, k, swaps).into_vec() {
            let truth = picks[slot];
            let others: Vec<_> = table.entries().iter().filter(|e| (e.c, e.d) != (truth.c, truth.d)).collect();
            if !others.is_empty() {
                picks[slot] = others[rng.random_range(0..others.len())];
            }
        }
    }
    let out: Vec<AssignmentOut> = names
        .iter()
        .zip(&picks)
        .map(|(n, e)| AssignmentOut { material_name: n, c: e.c, d: e.d, source: format!("ITU-R: {}", e.name) })
        .collect();
    Ok(serde_json::to_string_pretty(&out)?)
}

#[derive(Serialize)]
struct PositionOut {
    id: String,
    #[serde(rename = "type")]
    kind: &'static str,
    x: f64,
    y: f64,
    z: f64,
    reasoning: &'static str,
}

fn stub_positions(scene: &Scene, n: usize, m: usize, seed: u64) -> Result<String> {
    let plan = random_placement(scene, n, m, seed)?;
    let mut out = Vec::new();
    for t in &plan.trials {
        for (i, p) in std::iter::once(&t.tx).chain(&t.rx).enumerate() {
            out.push(PositionOut {
                id: format!("P_{}", out.len() + 1),
                kind: if i == 0 { "Tx" } else { "Rx" },
                x: p.x,
                y: p.y,
                z: p.z,
                reasoning: "offline stub: uniformly drawn free-space position",
            });
        }
    }
    Ok(serde_json::to_string_pretty(&out)?)
}

#[cfg(feature = "live-vlm")]
fn http_transport(config: &LiveConfig, key: String) -> Result<Box<dyn Transport>> {
    Ok(Box::new(http::HttpTransport::new(config, key)))
}

#[cfg(not(feature = "live-vlm"))]
fn http_transport(_config: &LiveConfig, _key: String) -> Result<Box<dyn Transport>> {
    Err(Error::Config("built without the `live-vlm` feature".into()))
}

#[cfg(feature = "live-vlm")]
mod http {
    use std::time::Duration;

    use base64::Engine;
    use serde::{Deserialize, Serialize};

    use super::{LiveConfig, Transport};
    use crate::error::{Error, Result};
    use crate::priors::prompt::RenderedPrompt;

    pub(super) struct HttpTransport {
        agent: ureq::Agent,
        endpoint: String,
        key: String,
    }

    #[derive(Serialize)]
    struct Request<'a> {
        parts: &'a [String],
        #[serde(skip_serializing_if = "Option::is_none")]
        image_base64: Option<String>,
    }

    #[derive(Deserialize)]
    struct Response {
        text: String,
    }

    impl HttpTransport {
        pub(super) fn new(config: &LiveConfig, key: String) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
                .build()
                .into();
            HttpTransport { agent, endpoint: config.endpoint.clone(), key }
        }
    }

    impl Transport for HttpTransport {
        fn send(&mut self, prompt: &RenderedPrompt) -> Result<String> {
            let image_base64 = match &prompt.image {
                Some(p) => Some(base64::engine::general_purpose::STANDARD.encode(std::fs::read(p)?)),
                None => None,
            };
            let body = Request { parts: &prompt.parts, image_base64 };
            let mut resp = self
                .agent
                .post(&self.endpoint)
                .header("Authorization", &format!("Bearer {}", self.key))
                .send_json(&body)
                .map_err(|e| Error::Transport(e.to_string()))?;
            let parsed: Response = resp.body_mut().read_json().map_err(|e| Error::Transport(e.to_string()))?;
            Ok(parsed.text)
        }
    }
}

#[cfg(test)]
impl VlmClient {
    pub(crate) fn into_live_for_tests(mut self, config: LiveConfig) -> Self {
        self.mode = VlmMode::Live(config);
        self
    }
}
