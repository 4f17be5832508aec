use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sivtherm::cli_io::{resolve_output_dir, run_config, ExperimentKind, RunConfig, RunReport};
use sivtherm::Error;

#[derive(Parser)]
#[command(name = "sivtherm", version, about = "All-optical SiV thermometry experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config, then $SIVTHERM_OUT_DIR, then ./sivtherm-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// PL spectra over a temperature sweep; recovers the peak shift per kelvin.
    PlSweep,
    /// Temperature precision against integration time.
    Precision,
    /// PLE contrast model and lock-in simulation.
    PleLockin,
    /// Heater raster over a gold-pad array.
    HeatMap,
    /// Collection-path response from a blackbody lamp and from fit residuals.
    CalibrateResponse,
    /// Fit a single spectrum (simulated unless the config names a file).
    Fit,
    /// Run whichever experiment the configuration names.
    Run,
}

impl Command {
    fn kind(self) -> Option<ExperimentKind> {
        match self {
            Command::PlSweep => Some(ExperimentKind::PlSweep),
            Command::Precision => Some(ExperimentKind::Precision),
            Command::PleLockin => Some(ExperimentKind::PleLockin),
            Command::HeatMap => Some(ExperimentKind::HeatMap),
            Command::CalibrateResponse => Some(ExperimentKind::CalibrateResponse),
            Command::Fit => Some(ExperimentKind::Fit),
            Command::Run => None,
        }
    }
}

fn execute(cli: &Cli) -> Result<(RunReport, PathBuf), Error> {
    let mut cfg = match (&cli.common.config, cli.command.kind()) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(kind)) => RunConfig::new(kind),
        (None, None) => return Err(Error::Config("`run` needs --config".into())),
    };
    if let Some(kind) = cli.command.kind() {
        match cfg.experiment {
            Some(named) if named != kind => {
                return Err(Error::Config(format!(
                    "config names experiment `{}` but `{}` was requested",
                    named.name(),
                    kind.name()
                )))
            }
            _ => cfg.experiment = Some(kind),
        }
    }
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    let out = resolve_output_dir(cli.common.out.as_deref(), &cfg);
    Ok((run_config(&cfg, &out)?, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok((report, out)) => {
            if !cli.common.quiet {
                println!("{} finished in {:.2} s -> {}", report.experiment.name(), report.wall_clock_s, out.display());
                for (k, v) in &report.summary {
                    println!("  {k} = {v}");
                }
                for c in &report.checks {
                    println!("  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{record}");
            ExitCode::from(2)
        }
    }
}
