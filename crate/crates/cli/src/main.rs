use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::Failure;

/// Nitinol stent frame simulation: crimp, deploy, cyclic lumen loading and
/// strain-based fatigue screening.
#[derive(Debug, Parser)]
#[command(name = "stentfat", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory; every artifact path is relative to it.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Material parameter JSON; bundled 37 C nitinol when omitted.
    #[arg(long, global = true)]
    pub material: Option<PathBuf>,
    /// Scenario JSON (protocol, crimp size, lumen, cycles, fatigue limits).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Reserved for fixture generation; the physics is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Skip SVG output.
    #[arg(long, global = true)]
    pub no_plots: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the beam frame of a design and write its summary.
    Build {
        #[arg(long)]
        design: PathBuf,
    },
    /// Crimp a design into a sheath.
    Crimp {
        #[arg(long)]
        design: PathBuf,
        /// Sheath size in French; the scenario value when omitted.
        #[arg(long, conflicts_with = "diameter")]
        french: Option<f64>,
        /// Sheath inner diameter, mm.
        #[arg(long)]
        diameter: Option<f64>,
    },
    /// Radial force against sheath diameter.
    Radialforce {
        #[arg(long)]
        design: PathBuf,
        /// `start:end:count` in mm, or a comma-separated list, descending.
        #[arg(long)]
        diameters: String,
    },
    /// Release a crimped state into the lumen.
    Deploy {
        #[arg(long)]
        design: PathBuf,
        /// Crimped state written by `crimp`.
        #[arg(long)]
        state: PathBuf,
        /// Inflow end below the annulus plane, mm; the scenario value when omitted.
        #[arg(long)]
        depth: Option<f64>,
    },
    /// Run cardiac cycles on a deployed state.
    Beat {
        #[arg(long)]
        design: PathBuf,
        /// Deployed state written by `deploy`.
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        cycles: Option<usize>,
    },
    /// Classify a strain history written by `beat`.
    Fatigue {
        #[arg(long)]
        strains: PathBuf,
    },
    /// Run several designs through the full pipeline and rank them.
    Sweep {
        /// Sweep JSON: design paths plus an optional shared scenario.
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        threads: Option<usize>,
        /// failed_fraction, anchorage or compression.
        #[arg(long, default_value = "failed_fraction")]
        rank_by: String,
    },
    /// Full crimp, deploy, beat and fatigue pipeline on the bundled control design.
    Demo {
        /// Design JSON replacing the bundled control.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        cycles: Option<usize>,
    },
}

pub const LOG_ENV: &str = "STENTFAT_LOG";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            if let Failure::Runtime(err) = &f {
                if let Some(p) = commands::write_diagnostics(&cli, err) {
                    eprintln!("diagnostics written to {}", p.display());
                }
            }
            ExitCode::from(f.exit_code())
        }
    }
}
