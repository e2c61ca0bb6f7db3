use std::path::PathBuf;
use std::process::ExitCode;

use cal_cli::{execute, load_config, threads_from_env, CliError, Command};
use clap::{Parser, Subcommand};

/// Runs learning-dynamics scenarios from a JSON config.
#[derive(Parser)]
#[command(name = "cal", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Output directory; overrides `output_dir` in the config (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a scenario and write trajectories, summary and plot script.
    Run { config: PathBuf },
    /// Evaluate the cross product of all sweep grids and write a summary table.
    Sweep { config: PathBuf },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    let (path, command) = match &cli.command {
        Cmd::Run { config } => (config, Command::Run),
        Cmd::Sweep { config } => (config, Command::Sweep),
        Cmd::Validate { config } => {
            let cfg = load_config(config)?;
            cal_cli::points(&cfg, Command::Run)?;
            println!("{}: ok ({})", config.display(), cfg.scenario.name());
            return Ok(0);
        }
    };
    let cfg = load_config(path)?;
    let threads = threads_from_env(std::env::var("CAL_THREADS").ok().as_deref())?;
    let out = cli.out.or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let outcome = execute(&cfg, command, &out, threads)?;
    let s = &outcome.summary;
    println!(
        "{} {}: {} point(s), {} file(s) written to {}",
        s.command,
        s.scenario,
        s.points.len(),
        s.files.len() + 1,
        outcome.out_dir.display()
    );
    for (name, ok) in &s.checks {
        println!("  check {name}: {}", if *ok { "ok" } else { "violated" });
    }
    if outcome.unexpected_divergence {
        eprintln!("error: numerical divergence in a scenario that does not expect it");
        return Ok(3);
    }
    Ok(0)
}
