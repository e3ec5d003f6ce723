use clap::{Parser, Subcommand};
use enstrophy_cli::{pipeline, CliError, Run, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "enstrophy",
    version,
    about = "Enstrophy-flux localization diagnostics for decaying MHD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the solver and write snapshots.
    Simulate,
    /// Compute flux reports from existing snapshots.
    Diagnose,
    /// Estimate the assumption constants from existing snapshots.
    Assumptions,
    /// Render summary.txt from the JSON outputs.
    Report,
    /// Every stage in order.
    All,
}

fn load(cli: &Cli) -> Result<Run, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut run = Run::new(cfg, &cli.out);
    run.verbose = cli.verbose;
    Ok(run)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate => {
            let m = pipeline::simulate(&load(cli)?)?;
            println!(
                "wrote {} snapshots to {}",
                m.snapshots.len(),
                cli.out.join(pipeline::SNAPSHOT_DIR).display()
            );
        }
        Command::Diagnose => {
            let d = pipeline::diagnose(&load(cli)?)?;
            println!(
                "sigma0 = {:e}; {} rows; ratios in [{:e}, {:e}]",
                d.report.sigma0,
                d.report.rows.len(),
                d.report.min_ratio,
                d.report.max_ratio
            );
        }
        Command::Assumptions => {
            let a = pipeline::assumptions(&load(cli)?, None)?;
            for v in &a.verdicts {
                println!("{}: {}", v.assumption, if v.holds { "holds" } else { "fails" });
            }
        }
        Command::Report => print!("{}", pipeline::report(&cli.out)?),
        Command::All => print!("{}", pipeline::run_all(&load(cli)?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
