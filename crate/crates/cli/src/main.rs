//! `threshold-gms`: simulate, classify and validate the GMS species model
//! with threshold extinction.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use threshold_gms::ladder::PoissonMode;
use threshold_gms::montecarlo::{configure_threads, ReplicationPlan, Task};
use threshold_gms::validation::{DEFAULT_REPS, DEFAULT_SEED};
use threshold_gms::ModelParams;

mod commands;
mod config;

use config::{
    exponential_params, load_initial, load_params, stop_rule, ClassifyConfig, Format, Manifest, McConfig, RunConfig,
    SimulateConfig, ValidateConfig,
};

#[derive(Parser)]
#[command(name = "threshold-gms", version, about = "GMS species model with threshold extinction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ParamsArgs {
    /// Model parameters (JSON).
    #[arg(long, conflicts_with = "exponential")]
    params: Option<PathBuf>,
    /// Exponential marks: alpha_star,alpha_dagger,lambda_star,lambda_dagger.
    #[arg(long, value_name = "A,B,L,M")]
    exponential: Option<String>,
}

impl ParamsArgs {
    fn load(&self) -> Result<Option<ModelParams>> {
        match (&self.params, &self.exponential) {
            (Some(p), None) => Ok(Some(load_params(p)?)),
            (None, Some(s)) => Ok(Some(exponential_params(s)?)),
            _ => Ok(None),
        }
    }

    fn require(&self) -> Result<ModelParams> {
        self.load()?.context("give --params <file> or --exponential A,B,L,M")
    }
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LadderTask {
    M,
    Lambda,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerStep,
    Total,
}

impl From<Mode> for PoissonMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PerStep => PoissonMode::PerStep,
            Mode::Total => PoissonMode::Total,
        }
    }
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    params: ParamsArgs,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "per-step")]
    mode: Mode,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    tail_tolerance: Option<f64>,
    /// Export full ladders or species lists for the first N replications.
    #[arg(long, default_value_t = 0)]
    export: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

impl McArgs {
    fn config(&self, task: Task) -> Result<McConfig> {
        let mut plan = ReplicationPlan::new(task, self.reps, self.seed);
        plan.stop = stop_rule(self.max_steps, self.tail_tolerance);
        plan.poisson_mode = self.mode.into();
        plan.validate()?;
        Ok(McConfig { params: self.params.require()?, plan, export: self.export, format: self.format })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the forward process on a finite window.
    Simulate {
        #[command(flatten)]
        params: ParamsArgs,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Initial configuration, one fitness per line.
        #[arg(long)]
        initial: Option<PathBuf>,
        /// Record full configurations every `dt` time units.
        #[arg(long, value_name = "DT")]
        snapshot_every: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Recurrence and limit-count verdicts, for one parameter set or a grid.
    Classify {
        #[command(flatten)]
        params: ParamsArgs,
        /// Exponential grid, e.g. "alpha_star=0.5,1,2;alpha_dagger=1,2".
        #[arg(long, conflicts_with_all = ["params", "exponential"])]
        grid: Option<String>,
        /// Skip the exact tail-exponent analysis.
        #[arg(long)]
        force_numeric: bool,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Replicate M (or Λ) from the fitness-record ladder.
    LadderMc {
        #[arg(long, value_enum, default_value = "m")]
        task: LadderTask,
        #[command(flatten)]
        args: McArgs,
    },
    /// Replicate the limit configuration from the threshold-record ladder.
    LimitMc {
        #[command(flatten)]
        args: McArgs,
    },
    /// Run the validation suite; exits with status 1 if any check fails.
    Validate {
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Comma-separated check keys or numbers.
        #[arg(long)]
        only: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-run the configuration recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn snapshot_times(start: f64, horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        bail!("--snapshot-every must be > 0");
    }
    let n = ((horizon - start) / dt).floor();
    if n > 1e6 {
        bail!("--snapshot-every gives more than a million snapshots");
    }
    Ok((0..=n as usize).map(|k| start + k as f64 * dt).filter(|&t| t <= horizon).collect())
}

fn build(command: Command) -> Result<(RunConfig, PathBuf)> {
    Ok(match command {
        Command::Simulate { params, horizon, start, seed, initial, snapshot_every, format, out } => {
            if !(start.is_finite() && horizon.is_finite() && horizon >= start) {
                bail!("need a finite window with start <= horizon");
            }
            let snapshots = match snapshot_every {
                Some(dt) => snapshot_times(start, horizon, dt)?,
                None => Vec::new(),
            };
            let initial = match initial {
                Some(p) => load_initial(&p)?,
                None => Vec::new(),
            };
            let cfg = SimulateConfig { params: params.require()?, start, horizon, seed, initial, snapshots, format };
            (RunConfig::Simulate(cfg), out.out)
        }
        Command::Classify { params, grid, force_numeric, format, out } => {
            let params = params.load()?;
            let format = format.unwrap_or(if grid.is_some() { Format::Csv } else { Format::Json });
            (RunConfig::Classify(ClassifyConfig { params, grid, force_numeric, format }), out.out)
        }
        Command::LadderMc { task, args } => {
            let task = match task {
                LadderTask::M => Task::SampleM,
                LadderTask::Lambda => Task::SampleLambda,
            };
            (RunConfig::LadderMc(args.config(task)?), args.out.out.clone())
        }
        Command::LimitMc { args } => (RunConfig::LimitMc(args.config(Task::SampleLimitConfig)?), args.out.out.clone()),
        Command::Validate { reps, seed, only, out } => {
            (RunConfig::Validate(ValidateConfig { reps, seed, only }), out.out)
        }
        Command::Replay { manifest, out } => (Manifest::load(&manifest)?.config, out.out),
    })
}

fn write_outputs(dir: &Path, config: RunConfig, files: &[(String, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let manifest = Manifest::new(config, files.iter().map(|f| f.0.clone()).collect());
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    std::fs::write(dir.join("manifest.json"), text).context("writing manifest.json")?;
    Ok(())
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    configure_threads()?;
    let (config, out) = build(cli.command)?;
    let outputs = commands::execute(&config)?;
    write_outputs(&out, config, &outputs.files)?;
    println!("{}", outputs.console);
    println!("wrote {} files to {}", outputs.files.len() + 1, out.display());
    Ok(outputs.success)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
