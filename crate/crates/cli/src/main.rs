use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rfmat::forward_rt::{read_trace_cache, trace_paths, write_trace_cache, TraceResult};
use rfmat::harness::{
    compare_convergence, complexity_study, init_cdf_study, run_estimation, sweep, Arm, Engine, ExperimentConfig, InitStrategy,
    PlacementStrategy, Prepared, SceneSource, SweepAxis, VlmModeName,
};
use rfmat::priors::API_KEY_ENV;

#[derive(Parser)]
#[command(name = "rfmat", version, about = "Estimate indoor RF material conductivities from simulated signal strength")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON). Flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed_gt: Option<u64>,
    #[arg(long, global = true)]
    seed_place: Option<u64>,
    #[arg(long, global = true)]
    seed_init: Option<u64>,
    /// Output directory for reports and data files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    vlm_mode: Option<VlmModeArg>,
    /// Fixture directory for replay mode.
    #[arg(long, global = true)]
    replay_dir: Option<PathBuf>,
    /// `canonical`, `k=<objects>[:<seed>]`, or a scene file (.json or .xml).
    #[arg(long, global = true)]
    scene: Option<String>,
    /// Material table JSON replacing the built-in one.
    #[arg(long, global = true)]
    materials: Option<PathBuf>,
    #[arg(long, global = true)]
    init: Option<String>,
    #[arg(long, global = true)]
    placement: Option<String>,
    #[arg(short = 'n', long, global = true)]
    receivers: Option<usize>,
    #[arg(short = 'm', long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    rays: Option<usize>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    repetitions: Option<usize>,
    /// Relative Gaussian noise on the synthesized measurements.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Re-trace paths in every iteration instead of caching them.
    #[arg(long, global = true)]
    retrace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VlmModeArg {
    Stub,
    Replay,
    Live,
}

#[derive(Subcommand)]
enum Command {
    /// One estimation run.
    Run,
    /// One run per value of an axis, with shared seeds.
    Sweep {
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Cap iterations and re-trace every iteration, for timing studies.
        #[arg(long)]
        timing_iters: Option<usize>,
    },
    /// Initial-error distribution of several initialization strategies.
    Cdf {
        #[arg(long, value_delimiter = ',', default_value = "itu,random,uniform")]
        strategies: Vec<String>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Convergence of several init:placement arms on the same ground truth.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        arms: Vec<String>,
    },
    /// Print a measurement plan as JSON.
    Plan {
        #[arg(long)]
        strategy: String,
    },
    /// Build or inspect a cache of traced paths.
    TraceCache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// Trace the planned trials and write them to a file.
    Build {
        #[arg(long)]
        output: PathBuf,
    },
    Inspect {
        path: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = build_config(&cli.global)?;
    match cli.command {
        Command::Run => {
            let report = run_estimation(&config)?;
            emit(&serde_json::to_string_pretty(&report)?);
            for note in report.notes() {
                eprintln!("note: {note}");
            }
        }
        Command::Sweep { axis, values, timing_iters } => {
            let axis = SweepAxis::parse(&axis).with_context(|| format!("unknown sweep axis `{axis}` (n, depth, rays, k, m)"))?;
            let table = match timing_iters {
                Some(it) => complexity_study(&config, axis, &values, it)?,
                None => sweep(&config, axis, &values)?,
            };
            emit(&table.to_csv()?);
        }
        Command::Cdf { strategies, samples } => {
            let strategies = strategies
                .iter()
                .map(|s| InitStrategy::parse(s).with_context(|| format!("unknown init strategy `{s}`")))
                .collect::<Result<Vec<_>>>()?;
            emit(&init_cdf_study(&config, &strategies, samples)?.to_csv()?);
        }
        Command::Compare { arms } => {
            let arms = arms
                .iter()
                .map(|a| Arm::parse(a).with_context(|| format!("bad arm `{a}`, expected init:placement")))
                .collect::<Result<Vec<_>>>()?;
            let cmp = compare_convergence(&config, &arms)?;
            emit(&serde_json::to_string_pretty(&cmp.arms)?);
        }
        Command::Plan { strategy } => {
            let mut c = config;
            c.placement = PlacementStrategy::parse(&strategy).with_context(|| format!("unknown placement strategy `{strategy}`"))?;
            let plan = Prepared::new(&c)?.plan(&c)?;
            let json = plan.to_json()?;
            if let Some(dir) = &c.output_dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("plan.json"), &json)?;
            }
            emit(&json);
        }
        Command::TraceCache { action } => match action {
            CacheAction::Build { output } => {
                let prep = Prepared::new(&config)?;
                let plan = prep.plan(&config)?;
                let traces = plan
                    .trials
                    .iter()
                    .map(|t| trace_paths(&prep.scene, t, &prep.rt))
                    .collect::<rfmat::Result<Vec<_>>>()?;
                write_trace_cache(&output, &traces).with_context(|| format!("writing {}", output.display()))?;
                print_cache_summary(&traces);
            }
            CacheAction::Inspect { path } => {
                let traces = read_trace_cache(&path).with_context(|| format!("reading {}", path.display()))?;
                print_cache_summary(&traces);
            }
        },
    }
    Ok(())
}

/// Writes to stdout; a closed pipe ends the process quietly.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let r = out.write_all(text.as_bytes()).and_then(|_| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") });
    if let Err(e) = r.and_then(|_| out.flush()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn print_cache_summary(traces: &[TraceResult]) {
    let mut text = format!("trials: {}\n", traces.len());
    for (i, t) in traces.iter().enumerate() {
        let slots: Vec<String> = t.slots_touched().iter().map(|s| s.to_string()).collect();
        text += &format!(
            "trial {i}: {} paths, per receiver {:?}, max bounces {}, slots [{}]\n",
            t.paths.len(),
            t.path_counts(),
            t.max_interactions(),
            slots.join(",")
        );
    }
    emit(&text);
}

fn build_config(g: &Global) -> Result<ExperimentConfig> {
    let mut c = match &g.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed_gt {
        c.seeds.gt = s;
    }
    if let Some(s) = g.seed_place {
        c.seeds.place = s;
    }
    if let Some(s) = g.seed_init {
        c.seeds.init = s;
    }
    if let Some(o) = &g.out {
        c.output_dir = Some(o.clone());
    }
    if let Some(m) = g.vlm_mode {
        c.vlm.mode = match m {
            VlmModeArg::Stub => VlmModeName::Stub,
            VlmModeArg::Replay => VlmModeName::Replay,
            VlmModeArg::Live => VlmModeName::Live,
        };
    }
    if let Some(d) = &g.replay_dir {
        c.vlm.replay_dir = Some(d.clone());
    }
    if let Some(s) = &g.scene {
        c.scene = parse_scene(s)?;
    }
    if let Some(p) = &g.materials {
        c.material_table = Some(p.clone());
    }
    if let Some(s) = &g.init {
        c.init = InitStrategy::parse(s).with_context(|| format!("unknown init strategy `{s}`"))?;
    }
    if let Some(s) = &g.placement {
        c.placement = PlacementStrategy::parse(s).with_context(|| format!("unknown placement strategy `{s}`"))?;
    }
    if let Some(n) = g.receivers {
        c.n = n;
    }
    if let Some(m) = g.trials {
        c.m = m;
    }
    if g.depth.is_some() {
        c.rt.depth = g.depth;
    }
    if g.rays.is_some() {
        c.rt.u_ray = g.rays;
    }
    if let Some(i) = g.max_iter {
        c.stop.max_iter = i;
    }
    if let Some(lr) = g.lr {
        c.options.lr = lr;
    }
    if let Some(r) = g.repetitions {
        c.repetitions = r;
    }
    if g.noise.is_some() {
        c.noise_rel = g.noise;
    }
    if g.retrace {
        c.engine = Engine::Retrace;
    }
    // Fail before any work rather than at the first model call.
    if c.vlm.mode == VlmModeName::Live && std::env::var(API_KEY_ENV).map_or(true, |k| k.is_empty()) {
        bail!("live VLM mode needs the {API_KEY_ENV} environment variable");
    }
    c.validate()?;
    Ok(c)
}

fn parse_scene(s: &str) -> Result<SceneSource> {
    if s == "canonical" {
        return Ok(SceneSource::Canonical);
    }
    if let Some(rest) = s.strip_prefix("k=") {
        let (k, seed) = rest.split_once(':').unwrap_or((rest, "0"));
        return Ok(SceneSource::Generated {
            k: k.parse().with_context(|| format!("bad object count in `{s}`"))?,
            seed: seed.parse().with_context(|| format!("bad seed in `{s}`"))?,
        });
    }
    let path = Path::new(s);
    if !path.exists() {
        bail!("scene file {} does not exist", path.display());
    }
    Ok(SceneSource::File { path: path.to_path_buf() })
}
