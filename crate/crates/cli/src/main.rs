use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdmp_exit_cli::config::parse_list;
use pdmp_exit_cli::{commands, CliError, FileConfig, Overrides, Result, RunConfig};

/// Exit-time survival function and moments of PDMPs by quantization of the jump chain.
///
/// Settings come from built-in defaults, then the `--config` file, then flags.
#[derive(Parser)]
#[command(name = "pdmp-exit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Train grids for every size and write them to the grid directory.
    Train,
    /// Survival function estimates against the Monte Carlo and exact references.
    Survival,
    /// Moment estimates with reference values and certified bounds.
    Moments,
    /// Log-log error regression across grid sizes.
    Convergence,
    /// Horizon recommendations from the analytic bound and a Monte Carlo scan.
    Horizon,
    /// Monte Carlo reference only.
    Mc,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// poisson, corrosion or corrosion-unprotected.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Directory holding grid files.
    #[arg(long, global = true)]
    grids: Option<PathBuf>,
    /// Directory for CSV and plot data.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated grid sizes.
    #[arg(long, global = true)]
    sizes: Option<String>,
    /// Number of jumps `N`.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    s_max: Option<f64>,
    #[arg(long, global = true)]
    s_points: Option<usize>,
    /// Comma-separated moment orders.
    #[arg(long, global = true)]
    moments: Option<String>,
    /// Monte Carlo paths for reference values.
    #[arg(long, global = true)]
    mc_paths: Option<usize>,
    /// Competitive-learning paths per grid.
    #[arg(long, global = true)]
    training_paths: Option<usize>,
    /// Also write two-column data files for plotting.
    #[arg(long, global = true)]
    gnuplot: bool,
}

fn resolve(common: Common) -> Result<RunConfig> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        model: common.model,
        horizon: common.horizon,
        seed: common.seed,
        threads: common.threads,
        sizes: common
            .sizes
            .as_deref()
            .map(|s| parse_list("sizes", s))
            .transpose()?,
        out: common.out,
        grids: common.grids,
        s_max: common.s_max,
        s_points: common.s_points,
        moments: common
            .moments
            .as_deref()
            .map(|s| parse_list("moments", s))
            .transpose()?,
        mc_paths: common.mc_paths,
        training_paths: common.training_paths,
        gnuplot: common.gnuplot,
    };
    RunConfig::resolve(file, overrides)
}

fn run(cli: Cli) -> Result<()> {
    let config = resolve(cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::config(format!("threads: {e}")))?;
    let report = pool.install(|| match cli.command {
        Command::Train => commands::train(&config),
        Command::Survival => commands::survival(&config),
        Command::Moments => commands::moments(&config),
        Command::Convergence => commands::convergence(&config),
        Command::Horizon => commands::horizon(&config),
        Command::Mc => commands::mc(&config),
    })?;
    for line in report {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
