use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddpce::error::ErrorKind;
use ddpce::experiment::{run, Command, ExperimentConfig, Overrides};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ddpce", version, about = "Data-driven stochastic prediction and control with polynomial chaos")]
struct Cli {
    /// JSON experiment configuration; aircraft defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Check configuration and data shapes, then exit.
    #[arg(long, global = true)]
    validate_only: bool,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Simulate and record undisturbed and disturbed data.
    Collect,
    /// Estimate disturbances and synthesize undisturbed data.
    Estimate,
    /// Predict output chaos coefficients over the horizon.
    Predict,
    /// Solve the open-loop OCP and export histograms.
    Ocp,
    /// One closed-loop run per scheme.
    Closedloop,
    /// Scheme comparison over seeded samples.
    Benchmark,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let cmd = match cli.cmd {
        Cmd::Collect => Command::Collect,
        Cmd::Estimate => Command::Estimate,
        Cmd::Predict => Command::Predict,
        Cmd::Ocp => Command::Ocp,
        Cmd::Closedloop => Command::ClosedLoop,
        Cmd::Benchmark => Command::Benchmark,
    };
    let overrides = Overrides { seed: cli.seed, out: cli.out };
    let result = ExperimentConfig::load(cli.config.as_deref(), &overrides).and_then(|cfg| run(cmd, &cfg, cli.validate_only));
    match result {
        Ok(summary) => {
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (code, kind) = match e.kind() {
                ErrorKind::Config => (2, "config"),
                ErrorKind::Data => (3, "data"),
                ErrorKind::Solver => (4, "solver"),
            };
            let details = match &e {
                ddpce::Error::Config(v) => v.clone(),
                _ => vec![e.to_string()],
            };
            let report = json!({ "error": e.code(), "kind": kind, "message": e.to_string(), "details": details });
            eprintln!("{}", serde_json::to_string_pretty(&report).expect("json value"));
            ExitCode::from(code)
        }
    }
}
