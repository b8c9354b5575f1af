//! `cofem` — experiment runner for clustered multi-task compressive
//! sensing.
//!
//! Subcommands: `run` executes a scenario described by a config file plus
//! flag overrides, `rerun` replays a manifest, `simulate` writes a
//! benchmark data file, and `mem` prints the analytic memory footprint of
//! an algorithm at a given problem size.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cofem::config::{ExecOptions, ExperimentBuilder};
use cofem::experiment::{memory_estimate, run_experiment, Algorithm, Manifest};
use cofem::io::write_simdata;
use cofem::simulate::{generate, SimConfig};

#[derive(Parser)]
#[command(name = "cofem", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment scenario and write CSV results plus a manifest.
    Run(RunArgs),
    /// Re-run an experiment from a previously written manifest.
    Rerun(RerunArgs),
    /// Generate a benchmark data file.
    Simulate(SimulateArgs),
    /// Print the analytic peak-memory estimate for one algorithm.
    Mem(MemArgs),
}

/// Every option mirrors a config-file key; flags override the file.
#[derive(Args)]
struct RunArgs {
    /// Flat key-value config file (key = value per line, '#' comments).
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated subset of: single_task, multi_task, clustered_em,
    /// clustered_cofem.
    #[arg(long)]
    algorithms: Option<String>,
    /// Output directory for manifest.json, results.csv, iterations.csv.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    /// Rayon worker threads (results are identical for any value).
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    sparsity: Option<String>,
    #[arg(long)]
    undersampling: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    overlap: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    num_probes: Option<String>,
    #[arg(long)]
    cg_steps: Option<String>,
    #[arg(long)]
    cg_rel_tol: Option<String>,
    #[arg(long)]
    alpha_max: Option<String>,
    #[arg(long)]
    dense_limit: Option<String>,
    #[arg(long)]
    f_grid: Option<String>,
    #[arg(long)]
    dim_grid: Option<String>,
    #[arg(long)]
    task_grid: Option<String>,
    #[arg(long)]
    cluster_grid: Option<String>,
    /// Pre-generated data file for the convergence scenario.
    #[arg(long)]
    data: Option<String>,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest written by a previous `run`.
    #[arg(long)]
    manifest: PathBuf,
    /// Redirect outputs; defaults to the manifest's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Destination data file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    tasks: usize,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    sparsity: f64,
    #[arg(long, default_value_t = 0.25)]
    undersampling: f64,
}

#[derive(Args)]
struct MemArgs {
    /// One of: single_task, multi_task, clustered_em, clustered_cofem.
    #[arg(long)]
    algorithm: String,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    tasks: usize,
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    #[arg(long, default_value_t = 15)]
    num_probes: usize,
    #[arg(long, default_value_t = 50)]
    cg_steps: usize,
}

fn with_workers<T: Send>(
    workers: Option<usize>,
    run: impl FnOnce() -> T + Send,
) -> Result<T, cofem::Error> {
    match workers {
        None => Ok(run()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| cofem::Error::InvalidConfig(format!("worker pool: {e}")))?;
            Ok(pool.install(run))
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), cofem::Error> {
    let mut builder = ExperimentBuilder::new();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        builder.apply_config(&text)?;
    }
    let overrides: [(&str, &Option<String>); 25] = [
        ("scenario", &args.scenario),
        ("algorithms", &args.algorithms),
        ("out", &args.out),
        ("seed", &args.seed),
        ("repeats", &args.repeats),
        ("workers", &args.workers),
        ("dim", &args.dim),
        ("tasks", &args.tasks),
        ("groups", &args.groups),
        ("clusters", &args.clusters),
        ("sparsity", &args.sparsity),
        ("undersampling", &args.undersampling),
        ("sigma", &args.sigma),
        ("overlap", &args.overlap),
        ("iterations", &args.iterations),
        ("num-probes", &args.num_probes),
        ("cg-steps", &args.cg_steps),
        ("cg-rel-tol", &args.cg_rel_tol),
        ("alpha-max", &args.alpha_max),
        ("dense-limit", &args.dense_limit),
        ("f-grid", &args.f_grid),
        ("dim-grid", &args.dim_grid),
        ("task-grid", &args.task_grid),
        ("cluster-grid", &args.cluster_grid),
        ("data", &args.data),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            builder.set(key, value)?;
        }
    }

    let (spec, exec) = builder.build()?;
    execute(&spec, &exec)
}

fn cmd_rerun(args: RerunArgs) -> Result<(), cofem::Error> {
    let manifest = Manifest::load(&args.manifest)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "note: manifest was written by version {}, this binary is {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let mut spec = manifest.spec;
    if let Some(out) = args.out {
        spec.out_dir = out;
    }
    let exec = ExecOptions {
        workers: args.workers,
    };
    execute(&spec, &exec)
}

fn execute(
    spec: &cofem::experiment::ExperimentSpec,
    exec: &ExecOptions,
) -> Result<(), cofem::Error> {
    let records = with_workers(exec.workers, || run_experiment(spec))??;
    println!(
        "{} runs written to {}",
        records.len(),
        spec.out_dir.display()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), cofem::Error> {
    let mut cfg = SimConfig::new(args.dim, args.tasks, args.groups, args.overlap, args.seed);
    cfg.sigma = args.sigma;
    cfg.sparsity = args.sparsity;
    cfg.undersampling = args.undersampling;
    let data = generate(&cfg)?;
    write_simdata(&data, &args.out)?;
    println!(
        "wrote {} tasks of dimension {} to {}",
        data.tasks.len(),
        args.dim,
        args.out.display()
    );
    Ok(())
}

fn cmd_mem(args: MemArgs) -> Result<(), cofem::Error> {
    let algorithm: Algorithm = args.algorithm.parse()?;
    let bytes = memory_estimate(
        algorithm,
        args.dim,
        args.tasks,
        args.clusters,
        args.num_probes,
        args.cg_steps,
    );
    println!(
        "{algorithm} D={} T={} C={} K={} U={}: {bytes} bytes ({:.1} MiB)",
        args.dim,
        args.tasks,
        args.clusters,
        args.num_probes,
        args.cg_steps,
        bytes as f64 / (1024.0 * 1024.0)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Rerun(args) => cmd_rerun(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Mem(args) => cmd_mem(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::FAILURE
        }
    }
}
