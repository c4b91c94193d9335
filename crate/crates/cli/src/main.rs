use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fanscatter_cli::commands::*;
use fanscatter_cli::{CliError, CliResult, EngineConfig};
use fanscatter_core::{DataMode, Variant};

#[derive(Parser)]
#[command(name = "fanscatter", version, about = "Coded-aperture coherent-scatter simulation and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Engine configuration; the desk-scale defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Phantom, noiseless data and Poisson counts.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write graymap previews.
        #[arg(long)]
        pgm: bool,
    },
    /// Forward projection of an object raster.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "NAME")]
        variant: Option<String>,
    },
    /// Backprojection of a detector raster.
    Backproject {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "NAME")]
        variant: Option<String>,
    },
    /// Penalized EM or OSEM reconstruction from counts.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH", alias = "input")]
        counts: PathBuf,
        #[arg(long, value_name = "NAME")]
        variant: Option<String>,
    },
    /// Timing and accuracy of every optimization variant.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Only this variant (plus the unoptimized reference).
        #[arg(long, value_name = "NAME")]
        variant: Option<String>,
        /// fdi or osi; both when omitted.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Validates the detector subset partition.
    PartitionCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> CliResult<EngineConfig> {
    match &common.config {
        Some(p) => EngineConfig::load(p),
        None => Ok(EngineConfig::desk()),
    }
}

fn variant(name: &Option<String>, cfg: &EngineConfig) -> CliResult<Variant> {
    match name {
        Some(n) => Ok(n.parse()?),
        None => Ok(cfg.variant),
    }
}

fn init_threads(cfg: &EngineConfig) -> CliResult<()> {
    let env = match std::env::var("ENGINE_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::input(format!("ENGINE_THREADS must be a nonnegative integer, got '{v}'")))?,
        ),
        Err(_) => None,
    };
    let n = env.filter(|&n| n > 0).unwrap_or(cfg.threads);
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::input(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let common = match &cli.command {
        Command::Simulate { common, .. }
        | Command::Project { common, .. }
        | Command::Backproject { common, .. }
        | Command::Reconstruct { common, .. }
        | Command::Benchmark { common, .. }
        | Command::PartitionCheck { common } => common,
    };
    let cfg = load(common)?;
    init_threads(&cfg)?;
    let out = &common.out;
    match &cli.command {
        Command::Simulate { seed, pgm, .. } => {
            let s = cmd_simulate(&cfg, out, *seed, *pgm)?;
            println!(
                "simulated seed {} scale {:e} max count {} -> {}",
                s.seed,
                s.scale,
                s.max_count,
                out.display()
            );
        }
        Command::Project { input, variant: v, .. } => {
            let path = cmd_project(&cfg, input, out, variant(v, &cfg)?)?;
            println!("{}", path.display());
        }
        Command::Backproject { input, variant: v, .. } => {
            let path = cmd_backproject(&cfg, input, out, variant(v, &cfg)?)?;
            println!("{}", path.display());
        }
        Command::Reconstruct { counts, variant: v, .. } => {
            let r = cmd_reconstruct(&cfg, counts, out, variant(v, &cfg)?)?;
            let first = r.objective.first().copied().unwrap_or(f64::NAN);
            let last = r.objective.last().copied().unwrap_or(f64::NAN);
            println!(
                "{} subsets, objective {first:.6e} -> {last:.6e}, initial level {:.4e} -> {}",
                r.subsets,
                r.level,
                out.display()
            );
        }
        Command::Benchmark { variant: v, mode, .. } => {
            let v = v.as_deref().map(str::parse::<Variant>).transpose()?;
            let mode = mode.as_deref().map(str::parse::<DataMode>).transpose()?;
            for r in cmd_benchmark(&cfg, out, v, mode)? {
                println!(
                    "{:<9} {:<4} {:<4} {:>10.4} s {:>8.2}x {:>8.4}%",
                    format!("{:?}", r.direction),
                    r.variant,
                    r.mode.name(),
                    r.time_s,
                    r.speedup,
                    100.0 * r.nrmse
                );
            }
        }
        Command::PartitionCheck { .. } => {
            let (report, ok) = cmd_partition_check(&cfg)?;
            print!("{report}");
            if !ok {
                return Err(CliError::input("partition check failed"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
