use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dynplane_core::config::{Config, ConfigError};

mod commands;
mod sweep;

#[derive(Debug, Parser)]
#[command(name = "dynplane", version, about = "Dynamic scene reconstruction with factorized space-time planes")]
struct Cli {
    /// Flat JSON config; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). FORPLANE_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra `key=value` overrides applied after the config file; values are JSON.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the moving-sphere dataset (keys under `synth.*`).
    Synth(OutArgs),
    /// Train on a dataset directory; writes a checkpoint and a CSV log.
    Train(TrainArgs),
    /// Render frames from a checkpoint.
    Render(RenderArgs),
    /// Full, static-only and dynamic-only renders of one frame.
    Decompose(DecomposeArgs),
    /// Score a checkpoint against a dataset.
    Eval(RenderArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Dense versus indicator-grid marching on a trained checkpoint.
    BenchMarch(BenchArgs),
    /// Short training runs over a grid of loss weights.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated frame indices; all frames when omitted.
    #[arg(long, value_delimiter = ',')]
    frames: Vec<usize>,
    /// Samples per ray; `render.eval_steps` when omitted.
    #[arg(long)]
    steps: Option<usize>,
    /// March densely, ignoring the occupancy grid.
    #[arg(long)]
    dense: bool,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    out: PathBuf,
    /// Seeds `0..seeds` are checked.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    frames: Vec<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated values, e.g. `1e-4,1e-3,1e-2`.
    #[arg(long)]
    lambda_tv: Option<String>,
    #[arg(long)]
    lambda_ts: Option<String>,
    #[arg(long)]
    lambda_de: Option<String>,
    #[arg(long)]
    lambda_d: Option<String>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Numerical(e) => e,
        }
    }
}

/// Sorts an error into a failure class by the typed errors in its chain.
pub fn classify(e: anyhow::Error) -> Failure {
    use dynplane_core::field_mlp::MlpError;
    use dynplane_core::trainer::TrainError;
    for cause in e.chain() {
        if let Some(t) = cause.downcast_ref::<TrainError>() {
            if t.is_numerical() {
                return Failure::Numerical(e);
            }
            if matches!(t, TrainError::Config(_)) {
                return Failure::Usage(e);
            }
        }
        if matches!(cause.downcast_ref::<MlpError>(), Some(MlpError::NonFinite { .. })) {
            return Failure::Numerical(e);
        }
        if cause.downcast_ref::<commands::NumericalFailure>().is_some() {
            return Failure::Numerical(e);
        }
        if cause.downcast_ref::<ConfigError>().is_some() || cause.downcast_ref::<UsageError>().is_some() {
            return Failure::Usage(e);
        }
    }
    Failure::Data(e)
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn parse_override(kv: &str) -> Result<(String, serde_json::Value)> {
    let Some((k, v)) = kv.split_once('=') else {
        bail!(UsageError(format!("override `{kv}` is not KEY=VALUE")));
    };
    // bare words are taken as strings so `--set loss.depth_mode=monocular` works
    let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

/// Applies `--config`, `--set` and `--seed` on top of `base`.
fn resolve_config(cli: &Cli, base: Option<Config>) -> Result<Config> {
    let mut cfg = match (&cli.config, base) {
        (Some(_), Some(_)) => bail!(UsageError(
            "checkpoint commands take their config from the checkpoint; use --set to override keys".into()
        )),
        (Some(p), None) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Config::from_json_str(&text).with_context(|| format!("config {}", p.display()))?
        }
        (None, Some(b)) => b,
        (None, None) => Config::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = parse_override(kv)?;
        cfg.set(&k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    match std::env::var("FORPLANE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("FORPLANE_THREADS=`{v}` is not a thread count")).into()),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = thread_count(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("building the worker pool")?;
    let checkpoint = match &cli.command {
        Command::Render(a) | Command::Eval(a) => Some(&a.checkpoint),
        Command::Decompose(a) => Some(&a.checkpoint),
        Command::BenchMarch(a) => Some(&a.checkpoint),
        _ => None,
    };
    let loaded = checkpoint.map(|p| commands::read_checkpoint(p)).transpose()?;
    let (state, base) = match loaded {
        Some((s, c)) => (Some(s), Some(c)),
        None => (None, None),
    };
    let cfg = resolve_config(&cli, base)?;
    println!("{}", cfg.to_flat_json());
    let out: &Path = match &cli.command {
        Command::Synth(a) => &a.out,
        Command::Train(a) => &a.out,
        Command::Render(a) | Command::Eval(a) => &a.out,
        Command::Decompose(a) => &a.out,
        Command::Gradcheck(a) => &a.out,
        Command::BenchMarch(a) => &a.out,
        Command::Sweep(a) => &a.out,
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = commands::Manifest::new(out, &cfg)?;
    match (&cli.command, state) {
        (Command::Synth(_), _) => commands::synth(&cfg, &mut manifest)?,
        (Command::Train(a), _) => commands::train(&cfg, &a.data, &mut manifest)?,
        (Command::Render(a), Some(st)) => {
            let view = commands::View::new(&cfg, st, &a.data, &a.frames)?;
            view.render(a.steps, a.dense, &mut manifest)?
        }
        (Command::Eval(a), Some(st)) => {
            let view = commands::View::new(&cfg, st, &a.data, &a.frames)?;
            view.eval(a.steps, a.dense, &mut manifest)?
        }
        (Command::Decompose(a), Some(st)) => {
            let view = commands::View::new(&cfg, st, &a.data, &[a.frame])?;
            view.decompose(&mut manifest)?
        }
        (Command::BenchMarch(a), Some(st)) => {
            let view = commands::View::new(&cfg, st, &a.data, &a.frames)?;
            view.bench_march(&mut manifest)?
        }
        (Command::Gradcheck(a), _) => commands::gradcheck(a.seeds, a.tolerance, &mut manifest)?,
        (Command::Sweep(a), _) => {
            let grid = sweep::SweepGrid::parse(
                &cfg,
                a.lambda_tv.as_deref(),
                a.lambda_ts.as_deref(),
                a.lambda_de.as_deref(),
                a.lambda_d.as_deref(),
            )?;
            sweep::run_sweep(&cfg, &grid, &a.data, &mut manifest)?
        }
        _ => unreachable!("checkpoint commands always load a state"),
    }
    manifest.finish()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let f = classify(e);
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
