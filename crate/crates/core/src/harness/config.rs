use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_rt::{dbm_to_watts, RtConfig};
use crate::geometry::{build_paper_scene, canonical_scene, load_scene, Scene, SceneFormat};
use crate::inverse::{EstimateOptions, StopCriteria};
use crate::materials::MaterialTable;
use crate::priors::{LiveConfig, StubBehavior, VlmClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSource {
    Canonical,
    File { path: PathBuf },
    Generated { k: usize, seed: u64 },
}

impl SceneSource {
    /// Builds the scene and reports how long that took.
    pub fn build(&self) -> Result<(Scene, f64)> {
        let start = Instant::now();
        let scene = match self {
            SceneSource::Canonical => canonical_scene(),
            SceneSource::File { path } => {
                let format = SceneFormat::from_path(path)
                    .ok_or_else(|| Error::Config(format!("cannot tell scene format of {}", path.display())))?;
                load_scene(path, format)?
            }
            SceneSource::Generated { k, seed } => build_paper_scene(*k, *seed)?,
        };
        Ok((scene, start.elapsed().as_secs_f64()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Itu,
    Random,
    Uniform,
    Vlm,
    /// Start at the ground truth; a fixed-point check.
    Truth,
}

impl InitStrategy {
    pub fn parse(s: &str) -> Option<InitStrategy> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "itu" => InitStrategy::Itu,
            "random" => InitStrategy::Random,
            "uniform" => InitStrategy::Uniform,
            "vlm" => InitStrategy::Vlm,
            "truth" => InitStrategy::Truth,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InitStrategy::Itu => "itu",
            InitStrategy::Random => "random",
            InitStrategy::Uniform => "uniform",
            InitStrategy::Vlm => "vlm",
            InitStrategy::Truth => "truth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementStrategy {
    Random,
    Greedy,
    Vlm,
}

impl PlacementStrategy {
    pub fn parse(s: &str) -> Option<PlacementStrategy> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "random" => PlacementStrategy::Random,
            "greedy" => PlacementStrategy::Greedy,
            "vlm" => PlacementStrategy::Vlm,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlacementStrategy::Random => "random",
            PlacementStrategy::Greedy => "greedy",
            PlacementStrategy::Vlm => "vlm",
        }
    }
}

/// Three independent seeds; changing one never moves the draws of another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub gt: u64,
    pub place: u64,
    pub init: u64,
}

impl Seeds {
    /// Seeds of repetition `r`: each one advanced by `r`.
    pub fn offset(self, r: u64) -> Seeds {
        Seeds { gt: self.gt + r, place: self.place + r, init: self.init + r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RtOverrides {
    pub depth: Option<usize>,
    pub u_ray: Option<usize>,
    pub f_c: Option<f64>,
    pub p_tx_dbm: Option<f64>,
}

impl RtOverrides {
    pub fn apply(&self, base: &RtConfig) -> RtConfig {
        let mut c = base.clone();
        if let Some(d) = self.depth {
            c.depth = d;
        }
        if let Some(u) = self.u_ray {
            c.u_ray = u;
        }
        if let Some(f) = self.f_c {
            c.f_c = f;
        }
        if let Some(p) = self.p_tx_dbm {
            c.p_tx = dbm_to_watts(p);
        }
        c
    }
}

/// How the estimation loop gets its paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Trace once, evaluate cached paths every iteration.
    #[default]
    Cached,
    /// Trace again inside every forward pass. Same numbers, slower.
    Retrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VlmModeName {
    #[default]
    Stub,
    Replay,
    Live,
}

impl VlmModeName {
    pub fn parse(s: &str) -> Option<VlmModeName> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "stub" => VlmModeName::Stub,
            "replay" => VlmModeName::Replay,
            "live" => VlmModeName::Live,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmSettings {
    pub mode: VlmModeName,
    pub replay_dir: Option<PathBuf>,
    pub endpoint: String,
    pub timeout_s: f64,
    /// Stub only: fraction of slots answered with a wrong material.
    pub stub_noise: Option<f64>,
    pub image: Option<PathBuf>,
}

impl Default for VlmSettings {
    fn default() -> Self {
        VlmSettings {
            mode: VlmModeName::Stub,
            replay_dir: None,
            endpoint: "http://127.0.0.1:8080/v1/complete".into(),
            timeout_s: 60.0,
            stub_noise: None,
            image: None,
        }
    }
}

impl VlmSettings {
    /// Builds a client; live mode without a credential fails here.
    pub fn client(&self, init_seed: u64) -> Result<VlmClient> {
        match self.mode {
            VlmModeName::Stub => Ok(VlmClient::stub(match self.stub_noise {
                Some(p) => StubBehavior::Noisy { p, seed: init_seed },
                None => StubBehavior::Oracle,
            })),
            VlmModeName::Replay => {
                let dir = self.replay_dir.as_deref().ok_or_else(|| Error::Config("replay mode needs a fixture directory".into()))?;
                VlmClient::replay(dir)
            }
            VlmModeName::Live => VlmClient::live(LiveConfig { endpoint: self.endpoint.clone(), timeout_s: self.timeout_s }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scene: SceneSource,
    pub seeds: Seeds,
    pub init: InitStrategy,
    pub placement: PlacementStrategy,
    pub n: usize,
    pub m: usize,
    pub rt: RtOverrides,
    pub options: EstimateOptions,
    pub stop: StopCriteria,
    pub engine: Engine,
    pub vlm: VlmSettings,
    /// Per-run output directory; nothing is written when unset.
    pub output_dir: Option<PathBuf>,
    pub repetitions: usize,
    /// Relative Gaussian noise on synthesized measurements; off by default.
    pub noise_rel: Option<f64>,
    /// Final MRE of a well-posed reference run, used to flag under-determined runs.
    pub reference_mre: Option<f64>,
    /// Material table JSON replacing the built-in one.
    pub material_table: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scene: SceneSource::Canonical,
            seeds: Seeds::default(),
            init: InitStrategy::Itu,
            placement: PlacementStrategy::Greedy,
            n: 8,
            m: 3,
            rt: RtOverrides::default(),
            options: EstimateOptions::default(),
            stop: StopCriteria::default(),
            engine: Engine::Cached,
            vlm: VlmSettings::default(),
            output_dir: None,
            repetitions: 1,
            noise_rel: None,
            reference_mre: None,
            material_table: None,
        }
    }
}

impl ExperimentConfig {
    pub fn table(&self) -> Result<MaterialTable> {
        match &self.material_table {
            Some(p) => MaterialTable::from_json(&std::fs::read_to_string(p)?),
            None => Ok(MaterialTable::itu()),
        }
    }

    pub fn rt_config(&self) -> RtConfig {
        self.rt.apply(&RtConfig::default())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config(format!("need N >= 1 and M >= 1, got N={} M={}", self.n, self.m)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if let Some(s) = self.noise_rel {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("noise_rel must be finite and non-negative, got {s}")));
            }
        }
        self.rt_config().validate()?;
        self.options.validate()?;
        self.stop.validate()
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Short description used to give errors some context.
    pub fn label(&self) -> String {
        let rt = self.rt_config();
        format!(
            "{:?} init={} placement={} N={} M={} D={} u_ray={} seeds={}/{}/{}",
            self.scene,
            self.init.as_str(),
            self.placement.as_str(),
            self.n,
            self.m,
            rt.depth,
            rt.u_ray,
            self.seeds.gt,
            self.seeds.place,
            self.seeds.init
        )
    }
}
