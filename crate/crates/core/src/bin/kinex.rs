use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kinex_core::config::{self, PresetCommand, RunConfig};
use kinex_core::{experiments, verify, Error};

#[derive(Parser)]
#[command(name = "kinex", version, about = "Kinetic exchange model with Langevin noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the config file)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for ensemble runs
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic equilibrium of the configured initial state
    Equilibrium,
    /// One stochastic trajectory written as CSV
    Simulate,
    /// Ensemble statistics and histograms
    Ensemble,
    /// Randomized invariant audit
    Verify,
    /// Run a built-in experiment
    Preset {
        /// equilibrium | fig1 | fig2 | fig3 | table1-conserving | table1-nonconserving
        name: String,
    },
}

// stdout errors such as a closed pipe are not worth a panic
macro_rules! say {
    ($s:expr) => {{
        use std::io::Write as _;
        let _ = std::io::stdout().write_all($s.as_bytes());
    }};
}

macro_rules! sayln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn load(cli: &Cli, base: RunConfig) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load_over(path, &base)?,
        None => base,
    };
    if let Some(seed) = cli.seed {
        cfg.sde.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let (cfg, cmd) = match &cli.command {
        Command::Verify => {
            let report = verify::run_audit(cli.seed.unwrap_or(0));
            say!(report.render());
            return if report.passed() {
                sayln!("all {} checks passed", report.checks.len());
                Ok(())
            } else {
                let names: Vec<_> = report.failures().map(|c| c.name.clone()).collect();
                Err(Error::Verification(names.join("; ")))
            };
        }
        Command::Equilibrium => (load(cli, RunConfig::default())?, PresetCommand::Equilibrium),
        Command::Simulate => (load(cli, RunConfig::default())?, PresetCommand::Simulate),
        Command::Ensemble => (load(cli, RunConfig::default())?, PresetCommand::Ensemble),
        Command::Preset { name } => {
            let (base, cmd) = config::preset(name)?;
            (load(cli, base)?, cmd)
        }
    };
    match cmd {
        PresetCommand::Equilibrium => {
            let report = experiments::cmd_equilibrium(&cfg)?;
            say!(report.render_table());
        }
        PresetCommand::Simulate => {
            let report = experiments::cmd_simulate(&cfg)?;
            sayln!(
                "wrote {} ({} samples, {} rejected draws, {} fallback steps)",
                report.csv_path.display(),
                report.trajectory.len(),
                report.trajectory.rejected_steps,
                report.trajectory.fallback_steps
            );
            if let Some(c) = report.corr_mu_gini {
                sayln!("corr(mu, gini)       = {c:.4}");
            }
            if let Some(c) = report.corr_gini_mobility {
                sayln!("corr(gini, mobility) = {c:.4}");
            }
        }
        PresetCommand::Ensemble => {
            let report = experiments::cmd_ensemble(&cfg, cli.workers)?;
            say!(report.render_table());
            sayln!("wrote {}", cfg.output.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kinex: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
