use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use wyflow::config::{self, OutputFormat, Overrides};
use wyflow::error::CliError;
use wyflow::scenario;

#[derive(Parser, Debug)]
#[command(
    name = "wyflow",
    about = "Weighted Yamabe flow with boundary: scenario runner and verification harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Preset scenario name (see --list in `run`).
    #[arg(long)]
    scenario: Option<String>,
    /// Config file ([section] / key = value); applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the configured one).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed time step (overrides the configured step policy).
    #[arg(long)]
    dt: Option<f64>,
    /// Convergence tolerance on sup|R - r| / (1 + |r|).
    #[arg(long)]
    tol: Option<f64>,
    /// Step budget.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Nodes per axis.
    #[arg(long)]
    mesh: Option<usize>,
    /// Seed for the generated verification fields.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact format: csv | json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the flow to convergence and write trace/summary/final fields.
    Run {
        #[command(flatten)]
        common: Common,
        /// List the preset scenario names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Classify the conformal class of the configured background.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Eigenpairs of the linearization at the configured initial factor.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Number of eigenpairs.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the brute-force verification suite against the scenario.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn overrides_of(common: &Common) -> Result<Overrides, CliError> {
    let format = match common.format.as_deref() {
        None => None,
        Some("csv") => Some(OutputFormat::Csv),
        Some("json") => Some(OutputFormat::Json),
        Some(other) => {
            return Err(CliError::config(format!("unknown format '{other}' (csv | json)")));
        }
    };
    Ok(Overrides {
        out: common.out.clone(),
        dt: common.dt,
        tol: common.tol,
        max_steps: common.max_steps,
        mesh: common.mesh,
        seed: common.seed,
        format,
    })
}

fn load(common: &Common) -> Result<config::ScenarioConfig, CliError> {
    let text = match &common.config {
        Some(path) => {
            Some(std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
        }
        None => None,
    };
    if common.scenario.is_none() && text.is_none() {
        return Err(CliError::config(
            "nothing to do: pass --scenario NAME and/or --config PATH \
             (presets: positive_cap, positive_cap_perturbed, zero_flat_constant, \
             zero_flat_perturbed, negative_weighted, hyperbolic_weighted)",
        ));
    }
    config::resolve(common.scenario.as_deref(), text.as_deref(), &overrides_of(common)?)
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run { common, list } => {
            if list {
                for name in config::PRESET_NAMES {
                    println!("{name}");
                }
                return Ok(0);
            }
            let cfg = load(&common)?;
            let (artifacts, exit) = scenario::cmd_run(&cfg)?;
            let s = &artifacts.summary;
            println!(
                "{}: case={} converged={} steps={} r_inf={:.6e} steady_residual={:.3e}",
                cfg.name, s.case, s.converged, s.steps, s.r_inf, s.steady_residual
            );
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(exit as u8)
        }
        Command::Classify { common } => {
            let cfg = load(&common)?;
            let c = scenario::cmd_classify(&cfg)?;
            println!("{} lambda0 = {:.16e} lambda1 = {:.16e}", c.case, c.lambda0, c.lambda1);
            Ok(0)
        }
        Command::Spectrum { common, k } => {
            let mut cfg = load(&common)?;
            if let Some(k) = k {
                cfg.spectrum_k = k;
            }
            let spectrum = scenario::cmd_spectrum(&cfg)?;
            for (a, pair) in spectrum.pairs.iter().enumerate() {
                println!("lambda_{a} = {:.16e}", pair.lambda);
            }
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(0)
        }
        Command::Verify { common } => {
            let cfg = load(&common)?;
            let outcome = scenario::cmd_verify(&cfg)?;
            for check in &outcome.checks {
                println!("{}", check.line());
            }
            Ok(if outcome.all_passed() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            // Usage problems are plain errors (exit 1), not clap's exit 2 —
            // exit 2 is reserved for "step budget exhausted" in `run`.
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
