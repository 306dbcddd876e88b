use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geophase_cli::{
    cmd_eigenstates, cmd_fig2, cmd_hannay, cmd_linear_check, cmd_validate, CliError, CliResult, ExperimentConfig,
    Overrides, Report, ValidateOptions,
};

#[derive(Parser)]
#[command(name = "geophase", version, about = "Geometric phases of general states under adiabatic loops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nonlinear eigenstates over the height grid.
    Eigenstates(Common),
    /// Phase sweeps over the height grid: the lower eigenstate and orbits of action I about it.
    Fig2(Common),
    /// Dynamic phase of a linear superposition against the weighted sum.
    LinearCheck(Common),
    /// Hannay angles from the static and the dynamic routes.
    Hannay(Common),
    /// Runs the invariant suite.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Nonlinearity c.
    #[arg(long = "c", allow_negative_numbers = true)]
    c: Option<f64>,
    /// Loop height Z (replaces the grid by this single value).
    #[arg(long = "z", allow_negative_numbers = true)]
    z: Option<f64>,
    /// Traversal rate v.
    #[arg(long)]
    rate: Option<f64>,
    /// Orbit action I.
    #[arg(long)]
    action: Option<f64>,
    /// Ensemble size M.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Multiplies the integrator tolerances (a deliberate-fault check).
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Run only properties whose name contains this string (repeatable).
    #[arg(long)]
    only: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        c: common.c,
        z: common.z,
        rate: common.rate,
        action: common.action,
        ensemble: common.ensemble,
        out: common.out.clone(),
    });
    Ok(cfg)
}

fn run(common: &Common, cmd: fn(&ExperimentConfig) -> CliResult<Report>) -> CliResult<i32> {
    let report = cmd(&load(common)?)?;
    for t in &report.tables {
        println!("# {}", t.name);
        print!("{}", t.to_csv());
    }
    for p in report.write(&report.config.output.dir)? {
        eprintln!("wrote {}", p.display());
    }
    for f in report.status.failures.iter().chain(&report.status.unsupported) {
        eprintln!("check: {f}");
    }
    eprintln!("{} finished in {:.1}s, exit code {}", report.command, report.runtime_seconds, report.status.exit_code());
    Ok(report.status.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Eigenstates(c) => run(c, cmd_eigenstates),
        Command::Fig2(c) => run(c, cmd_fig2),
        Command::LinearCheck(c) => run(c, cmd_linear_check),
        Command::Hannay(c) => run(c, cmd_hannay),
        Command::Validate(v) => {
            if !(v.tolerance_scale > 0.0) {
                Err(CliError::Config("--tolerance-scale must be positive".into()))
            } else {
                let report = cmd_validate(&ValidateOptions {
                    tolerance_scale: v.tolerance_scale,
                    seed: v.seed,
                    filter: v.only.clone(),
                });
                for line in report.lines() {
                    println!("{line}");
                }
                let passed = report.outcomes.iter().filter(|o| o.passed).count();
                println!("{passed}/{} properties passed in {:.1}s", report.outcomes.len(), report.seconds);
                Ok(report.exit_code())
            }
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
