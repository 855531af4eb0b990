//! Command-line front end for the tubecav workbench: config ingestion, sweeps,
//! atomic artifact output and SVG rendering.

pub mod commands;
pub mod config;
pub mod stage;
pub mod svg;
pub mod sweep;

use clap::{Parser, Subcommand};
use config::RunConfig;
use stage::{RunManifest, Stage};
use std::fmt;
use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "TUBECAV_OUT";

#[derive(Debug, Parser)]
#[command(name = "tubecav", version, about = "Evanescent-tube cavity design and analysis")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `$TUBECAV_OUT/<command>` or `tubecav-out/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Grid cells per smallest tube diameter.
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Eigenmodes of a preset or geometry file.
    Modes {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        geometry: Option<PathBuf>,
    },
    /// Quality factors from a reflection trace.
    Fit {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Mattis-Bardeen fit of a Qi(T) series.
    Mb {
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Kerr and two-state spectra.
    Duffing,
    /// Cavity EIT cascade and figures of merit.
    Qed,
    /// Parameter grid over one pipeline.
    Sweep,
    /// Comparison table of cavity systems.
    Table1,
    /// SVG plot of CSV artifacts.
    Render {
        #[arg(long)]
        csv: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Modes { .. } => "modes",
            Command::Fit { .. } => "fit",
            Command::Mb { .. } => "mb",
            Command::Duffing => "duffing",
            Command::Qed => "qed",
            Command::Sweep => "sweep",
            Command::Table1 => "table1",
            Command::Render { .. } => "render",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Physics(tubecav::Error),
    Io(std::io::Error),
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Io(_) => 1,
            CliError::Partial { .. } => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Physics(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
            CliError::Partial { failed, total } => write!(f, "{failed} of {total} sweep points failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tubecav::Error> for CliError {
    fn from(e: tubecav::Error) -> Self {
        match e {
            tubecav::Error::Parse(m) => CliError::Usage(m),
            e => CliError::Physics(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Settings shared by every pipeline.
#[derive(Debug, Clone)]
pub struct Context {
    /// Relative input paths resolve against this directory.
    pub base_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Context {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Loads the config file and folds command-line overrides into it.
pub fn effective_config(cli: &Cli) -> Result<(RunConfig, PathBuf), CliError> {
    let (mut cfg, base) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let cfg = config::parse(&text).map_err(CliError::Usage)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    let name = cli.command.name();
    if let Some(c) = &cfg.command {
        if c != name {
            return Err(CliError::Usage(format!("config is for `{c}`, command line says `{name}`")));
        }
    }
    cfg.command = Some(name.to_string());
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    match &cli.command {
        Command::Modes { preset, geometry } => {
            let m = cfg.modes.get_or_insert_with(Default::default);
            if let Some(p) = preset {
                m.preset = Some(p.clone());
                m.geometry = None;
            }
            if let Some(g) = geometry {
                m.geometry = Some(g.clone());
            }
            if let Some(r) = cli.resolution {
                m.resolution = r;
            }
        }
        Command::Fit { trace } => {
            let f = cfg.fit.get_or_insert_with(Default::default);
            if trace.is_some() {
                f.trace = trace.clone();
            }
        }
        Command::Mb { series } => {
            let m = cfg.mb.get_or_insert_with(Default::default);
            if series.is_some() {
                m.series = series.clone();
            }
        }
        Command::Duffing => {
            cfg.duffing.get_or_insert_with(Default::default);
        }
        Command::Qed => {
            cfg.qed.get_or_insert_with(Default::default);
        }
        Command::Table1 => {
            cfg.table1.get_or_insert_with(Default::default);
        }
        Command::Sweep => {
            if cfg.sweep.is_none() {
                return Err(CliError::Usage("sweep needs a `sweep` block in the config".into()));
            }
            if let (Some(r), Some(s)) = (cli.resolution, cfg.sweep.as_mut()) {
                s.modes.get_or_insert_with(Default::default).resolution = r;
            }
        }
        Command::Render { csv } => {
            if !csv.is_empty() {
                match cfg.render.as_mut() {
                    Some(r) => r.csv = csv.clone(),
                    None => return Err(CliError::Usage("render needs a `render` block for axes and kind".into())),
                }
            }
            if cfg.render.is_none() {
                return Err(CliError::Usage("render needs a `render` block".into()));
            }
        }
    }
    Ok((cfg, base))
}

pub fn output_dir(cli: &Cli) -> PathBuf {
    if let Some(o) = &cli.out {
        return o.clone();
    }
    let root = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("tubecav-out"));
    root.join(cli.command.name())
}

/// Runs one command end to end. On partial sweep failure the artifacts are still
/// committed and the error is returned alongside the manifest.
pub fn run(cli: &Cli) -> Result<(RunManifest, PathBuf), (CliError, Option<RunManifest>)> {
    let (cfg, base) = effective_config(cli).map_err(|e| (e, None))?;
    let out = output_dir(cli);
    execute(&cfg, &base, &out).map(|m| (m, out))
}

pub fn execute(cfg: &RunConfig, base: &Path, out: &Path) -> Result<RunManifest, (CliError, Option<RunManifest>)> {
    let started = stage::now_unix();
    let ctx = Context {
        base_dir: base.to_path_buf(),
        seed: cfg.seed.unwrap_or(0),
        threads: cfg.threads.unwrap_or_else(default_threads).max(1),
    };
    // thread count does not change results, so it stays out of the recorded config
    let mut recorded = cfg.clone();
    recorded.threads = None;
    let cfg_bytes = commands::json(&recorded).map_err(|e| (e, None))?;
    let mut st = Stage::new(out).map_err(|e| (CliError::Io(e), None))?;
    st.write("config.json", &cfg_bytes).map_err(|e| (CliError::Io(e), None))?;
    let command = cfg.command.clone().unwrap_or_default();
    let mut failures = Vec::new();
    let notes = match command.as_str() {
        "modes" => commands::modes(&ctx, cfg.modes.as_ref().unwrap(), &mut st),
        "fit" => commands::fit(&ctx, cfg.fit.as_ref().unwrap(), &mut st),
        "mb" => commands::mb(&ctx, cfg.mb.as_ref().unwrap(), &mut st),
        "duffing" => commands::duffing(&ctx, cfg.duffing.as_ref().unwrap(), &mut st),
        "qed" => commands::qed(&ctx, cfg.qed.as_ref().unwrap(), &mut st),
        "table1" => commands::table1(&ctx, cfg.table1.as_ref().unwrap(), &mut st),
        "render" => commands::render(&ctx, cfg.render.as_ref().unwrap(), &mut st),
        "sweep" => sweep::run(&ctx, cfg.sweep.as_ref().unwrap(), &mut st).map(|(n, f)| {
            failures = f;
            n
        }),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
    .map_err(|e| (e, None))?;
    let total = match (command.as_str(), cfg.sweep.as_ref()) {
        ("sweep", Some(s)) => sweep::grid_len(s).unwrap_or(0),
        _ => 0,
    };
    let manifest = RunManifest {
        command,
        config_sha256: stage::sha256_hex(&cfg_bytes),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: ctx.seed,
        started_unix_s: started,
        finished_unix_s: stage::now_unix(),
        artifacts: vec![],
        notes,
        failures,
    };
    let m = st.commit(manifest).map_err(|e| (CliError::Io(e), None))?;
    if m.failures.is_empty() {
        Ok(m)
    } else {
        let failed = m.failures.len();
        Err((CliError::Partial { failed, total }, Some(m)))
    }
}
