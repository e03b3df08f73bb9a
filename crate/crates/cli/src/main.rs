use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use curio_core::agent::{run_session, stream_rng, RunConfig};
use curio_core::encoder::pretrain_on_world;
use curio_core::experiment::{run_grid, GridConfig};
use curio_core::kv::KvFile;
use curio_core::models::gradcheck_models;
use curio_core::report::emit_reports;
use curio_core::world::{generate_world, load_dataset, save_dataset};
use curio_core::{Error, Result};

/// Curiosity-driven exploration of a simulated camera world.
#[derive(Parser)]
#[command(name = "curio", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the world and pretrain the autoencoder.
    Pretrain(PretrainArgs),
    /// Run one exploration session.
    Run(RunArgs),
    /// Run every (memory size, p_em) cell of an experiment grid.
    Grid(GridArgs),
    /// Render charts and summary tables from run directories.
    Report(ReportArgs),
    /// Check backpropagation against finite differences on the model architectures.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct PretrainArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    world_seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    latent: Option<usize>,
    /// Output directory for the world dataset and autoencoder files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mem_batches: Option<usize>,
    #[arg(long)]
    p_em: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Output directory for the run logs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Runs per grid cell.
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A run directory or a grid output directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Latent sizes to check.
    #[arg(long, value_delimiter = ',', default_values_t = vec![8, 16])]
    latent: Vec<usize>,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_kv(path: Option<&Path>) -> Result<KvFile> {
    path.map_or_else(|| Ok(KvFile::new()), KvFile::load)
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    // grid keys are ignored so one file serves every subcommand
    let mut cfg = RunConfig::default();
    cfg.apply_kv(&load_kv(path)?, &["grid."])?;
    Ok(cfg)
}

fn pretrain(args: &PretrainArgs) -> Result<()> {
    let mut cfg = run_config(args.config.as_deref())?;
    if let Some(v) = args.world_seed {
        cfg.world_seed = v;
    }
    if let Some(v) = args.epochs {
        cfg.pretrain.epochs = v;
    }
    if let Some(v) = args.latent {
        cfg.latent_dim = v;
    }
    cfg.validate()?;
    let world = match &cfg.dataset_path {
        Some(p) => load_dataset(p)?,
        None => generate_world(&cfg.world, &mut stream_rng(cfg.world_seed, 0))?,
    };
    let (ae, report) = pretrain_on_world(&world, cfg.latent_dim, &cfg.pretrain, &mut stream_rng(cfg.world_seed, 1))?;
    std::fs::create_dir_all(&args.out)?;
    save_dataset(&world, args.out.join("world.bin"))?;
    ae.save(&args.out)?;
    let mut kv = KvFile::new();
    kv.set("untrained_train_mse", report.untrained_train_mse);
    kv.set("train_mse", report.train_mse);
    kv.set("holdout_mse", report.holdout_mse);
    kv.set_list("loss_history", &report.history);
    kv.save(args.out.join("pretrain.txt"))?;
    println!(
        "pretrained {} epochs: train mse {:.6} (untrained {:.6}), holdout mse {:.6}",
        report.history.len(),
        report.train_mse,
        report.untrained_train_mse,
        report.holdout_mse
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let mut cfg = run_config(args.config.as_deref())?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.mem_batches {
        cfg.mem_batches = v;
    }
    if let Some(v) = args.p_em {
        cfg.p_em = v;
    }
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    let log = run_session(&cfg, Some(&args.out))?;
    match log.final_mse() {
        Some(e) => println!(
            "{} iterations, {} fits: final fwd_mse {:.6} inv_mse {:.6}",
            cfg.iterations, log.fits, e.fwd_mse, e.inv_mse
        ),
        None => println!("{} iterations, {} fits, no evaluation tick reached", cfg.iterations, log.fits),
    }
    Ok(())
}

fn grid(args: &GridArgs) -> Result<()> {
    let mut cfg = GridConfig::from_kv(&load_kv(args.config.as_deref())?)?;
    if let Some(v) = args.runs {
        cfg.runs_per_cell = v;
    }
    let parallelism = args
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = run_grid(&cfg, parallelism, Some(&args.out))?;
    for c in &result.cells {
        let last = c.curve.ticks.len().saturating_sub(1);
        println!(
            "{}: final fwd_mse {:.6} +- {:.6}, inv_mse {:.6} +- {:.6} over {} runs",
            c.cell.label(),
            c.curve.fwd_mean.get(last).copied().unwrap_or(f64::NAN),
            c.curve.fwd_std.get(last).copied().unwrap_or(f64::NAN),
            c.curve.inv_mean.get(last).copied().unwrap_or(f64::NAN),
            c.curve.inv_std.get(last).copied().unwrap_or(f64::NAN),
            c.curve.runs
        );
    }
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let summary = emit_reports(&args.input, &args.out)?;
    println!("{} runs, {} files written to {}", summary.runs.len(), summary.files.len(), args.out.display());
    Ok(())
}

fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst: f64 = 0.0;
    for &l in &args.latent {
        let (fwd, inv) = gradcheck_models(l, args.h, &mut rng)?;
        println!("latent {l}: forward {fwd:.3e}, inverse {inv:.3e}");
        worst = worst.max(fwd).max(inv);
    }
    if !(worst < args.tolerance) {
        return Err(Error::Config(format!(
            "max relative error {worst:.3e} is not below {:.1e}",
            args.tolerance
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pretrain(a) => pretrain(a),
        Command::Run(a) => run(a),
        Command::Grid(a) => grid(a),
        Command::Report(a) => report(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
