use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use memtrack_core::config::{parse_config, ExperimentConfig};
use memtrack_core::experiment::{compare, simulate, summarize, sweep};
use memtrack_core::metrics::{
    default_alphas, evaluate, EvalOptions, DEFAULT_RESOLUTION, MIN_RESOLUTION,
};
use memtrack_core::policy::PolicyKind;
use memtrack_core::record::{read_ground_truth, read_run, write_ground_truth, write_run};
use memtrack_core::render::render_run;
use memtrack_core::report::{write_compare, write_gap_table, write_metrics};
use memtrack_core::tracker::TrackerConfig;

#[derive(Parser)]
#[command(
    name = "memtrack",
    version,
    about = "Memory-bank tracking on synthetic scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one scenario and write its run record
    Run(RunArgs),
    /// Both policies on an archetype over several seeds
    Compare(CompareArgs),
    /// Policy gap of the density archetype per target count
    Sweep(SweepArgs),
    /// Score a run record against its ground truth
    Eval(EvalArgs),
    /// Draw every frame of a run as a PPM image
    Render(RenderArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    policy: PolicyKind,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the ground truth here
    #[arg(long)]
    gt_out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    archetype: String,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Tracker settings (the scenario part is ignored)
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; standard output if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "3,8,10")]
    densities: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// IoU thresholds for HOTA; defaults to 0.05, 0.10, ..., 0.95
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Raster resolution for the boundary measure
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: u32,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    outdir: PathBuf,
    #[arg(long, default_value_t = 256)]
    resolution: u32,
}

/// Exit 1 for bad usage or configuration, 2 for anything that fails later.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

trait OrRuntime<T> {
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrRuntime<T> for Result<T, E> {
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn usage(msg: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(msg.into())
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    parse_config(path)
        .with_context(|| format!("config {}", path.display()))
        .map_err(Failure::Usage)
}

fn tracker_settings(path: Option<&Path>) -> Result<TrackerConfig, Failure> {
    match path {
        Some(p) => Ok(load_config(p)?.tracker),
        None => Ok(TrackerConfig::default()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .map_err(Failure::Runtime)?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.scenario.seed = seed;
    }
    config.tracker.policy.kind = args.policy;
    info!(
        "run: seed {} policy {} digest {}",
        config.scenario.seed,
        args.policy,
        config.digest()
    );
    let sim = simulate(&config).runtime()?;
    write_run(&sim.run, &args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))
        .runtime()?;
    if let Some(gt_out) = &args.gt_out {
        write_ground_truth(&sim.ground_truth, gt_out)
            .with_context(|| format!("cannot write {}", gt_out.display()))
            .runtime()?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let tracker = tracker_settings(args.config.as_deref())?;
    if args.seeds == 0 {
        return Err(usage(anyhow!("--seeds must be at least 1")));
    }
    let rows = compare(
        &args.archetype,
        args.seeds,
        &tracker,
        &EvalOptions::default(),
    )
    .map_err(|e| match e {
        memtrack_core::experiment::ExperimentError::Scenario(_) => usage(e),
        other => Failure::Runtime(other.into()),
    })?;
    let summary = summarize(&rows);
    info!(
        "compare {}: delta HOTA {:.4}, delta IDSW {:.3}",
        args.archetype, summary.delta.hota, summary.delta.idsw
    );
    write_compare(output(args.out.as_deref())?, &rows, &summary).runtime()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let tracker = tracker_settings(args.config.as_deref())?;
    if args.seeds == 0 || args.densities.is_empty() || args.densities.contains(&0) {
        return Err(usage(anyhow!(
            "need at least one seed and positive densities"
        )));
    }
    let (_, gaps) = sweep(
        &args.densities,
        args.seeds,
        &tracker,
        &EvalOptions::default(),
    )
    .runtime()?;
    write_gap_table(output(args.out.as_deref())?, &gaps).runtime()
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let alphas = if args.alpha.is_empty() {
        default_alphas()
    } else {
        args.alpha
    };
    if alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(usage(anyhow!("--alpha values must lie in (0, 1]")));
    }
    if args.resolution < MIN_RESOLUTION {
        return Err(usage(anyhow!(
            "--resolution must be at least {MIN_RESOLUTION}"
        )));
    }
    let run = read_run(&args.run)
        .with_context(|| format!("run {}", args.run.display()))
        .runtime()?;
    let gt = read_ground_truth(&args.gt)
        .with_context(|| format!("ground truth {}", args.gt.display()))
        .runtime()?;
    let options = EvalOptions {
        alphas,
        resolution: args.resolution,
        ..EvalOptions::default()
    };
    let report = evaluate(&run, &gt, &options).runtime()?;
    write_metrics(io::stdout().lock(), &report).runtime()
}

fn cmd_render(args: RenderArgs) -> Result<(), Failure> {
    if args.resolution < MIN_RESOLUTION {
        return Err(usage(anyhow!(
            "--resolution must be at least {MIN_RESOLUTION}"
        )));
    }
    let run = read_run(&args.run)
        .with_context(|| format!("run {}", args.run.display()))
        .runtime()?;
    let gt = read_ground_truth(&args.gt)
        .with_context(|| format!("ground truth {}", args.gt.display()))
        .runtime()?;
    let paths = render_run(&run, &gt, &args.outdir, args.resolution).runtime()?;
    info!("wrote {} frames to {}", paths.len(), args.outdir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MEMTRACK_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            let (Failure::Usage(e) | Failure::Runtime(e)) = f;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
