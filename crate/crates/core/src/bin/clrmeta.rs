use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clrmeta::experiment::{self, RunConfig, ENV_PARALLEL};
use clrmeta::{Error, Result};

#[derive(Parser)]
#[command(name = "clrmeta", version, about = "Meta-learned ES controllers for critical load restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the optimization seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory; falls back to $CLRMETA_OUT, then the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for population evaluation.
    #[arg(long, env = ENV_PARALLEL)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train on the training split.
    TrainMeta(RunArgs),
    /// Fine-tune the meta-policy on the test split and run the baselines.
    FinetuneEval {
        #[command(flatten)]
        run: RunArgs,
        /// Fine-tuning iterations per test task (config default otherwise).
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Train ES-RL over a grid of forecast error levels and lookaheads.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Error levels as fractions, comma separated.
        #[arg(long, value_delimiter = ',')]
        xi: Vec<f64>,
        /// Lookaheads in hours, comma separated.
        #[arg(long, value_delimiter = ',')]
        kappa: Vec<f64>,
    },
    /// Emit plot-ready tables from a run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a configuration file and exit.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Optimize the two benchmark functions.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Resolved {
    cfg: RunConfig,
    out: PathBuf,
}

fn resolve(args: &RunArgs) -> Result<Resolved> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = cfg.resolve_output(args.out.as_deref()).ok_or_else(|| {
        Error::Input("out: no run directory; pass --out, set CLRMETA_OUT or output_dir".into())
    })?;
    if let Some(n) = args.parallel.or(cfg.parallel) {
        if n == 0 {
            return Err(Error::Input("parallel: must be >= 1".into()));
        }
        // Fails only if the pool was already built, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(Resolved { cfg, out })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainMeta(args) => {
            let r = resolve(&args)?;
            let o = experiment::train_meta(&r.cfg, &r.out)?;
            println!(
                "train-meta: final meta-eval reward {:.4}, wall time {:.1}s, manifest sha256 {}",
                o.final_meta_eval, o.seconds, o.manifest_sha256
            );
        }
        Command::FinetuneEval { run, budget } => {
            let r = resolve(&run)?;
            let o = experiment::finetune_eval(&r.cfg, &r.out, budget)?;
            for row in &o.adaptation {
                println!(
                    "{} {:<10} delta_init {:>12.4} delta_r {:>12.4}",
                    row.task, row.method, row.report.delta_init, row.report.delta_r
                );
            }
            println!("finetune-eval: {} rows, budget {}", o.adaptation.len(), o.budget);
        }
        Command::Sweep { run, xi, kappa } => {
            let r = resolve(&run)?;
            let xi = if xi.is_empty() { r.cfg.forecast.error_levels.clone() } else { xi };
            let kappa = if kappa.is_empty() { r.cfg.forecast.kappas.clone() } else { kappa };
            let cells = experiment::sweep(&r.cfg, &r.out, &xi, &kappa)?;
            println!("sweep: {} cells written to {}", cells.len(), r.out.join("sweep_grid.csv").display());
        }
        Command::Report { out } => {
            let s = experiment::report(&out)?;
            println!("report: {} files in {}", s.files.len(), Path::new(&out).join("report").display());
        }
        Command::ValidateConfig { config } => {
            RunConfig::load(&config)?;
            println!("{}: ok", config.display());
        }
        Command::Bench { out, seed } => {
            for b in experiment::bench(&out, seed)? {
                println!("{:<14} best {:.6} (optimum {})", b.name, b.best_fitness, b.optimum);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_invalid_input() { 2 } else { 1 })
        }
    }
}
