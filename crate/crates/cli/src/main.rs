use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lorentz_cli::{oracle, pipeline, report, ExperimentConfig, Overrides};

/// Numerical laboratory for the planar Lorentz gas and its tower models.
#[derive(Parser)]
#[command(name = "lorentz-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "LORENTZ_WORKERS")]
        workers: Option<usize>,
        /// Output directory, replacing `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize finished runs in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write the exact law for a configuration.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// 0 when everything passed, 2 on failed verdicts, 1 on errors.
fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Validate { config } => {
            let c = ExperimentConfig::load(&config)?;
            println!(
                "{}: valid {} configuration, digest {}",
                config.display(),
                c.run.mode,
                c.digest()
            );
            Ok(true)
        }
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => {
            let mut c = ExperimentConfig::load(&config)?;
            Overrides { seed, workers, out }.apply(&mut c);
            let record = pipeline::run(&c)?;
            for v in &record.verdicts {
                println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            println!(
                "wrote {} files to {} in {:.1} s",
                record.files.len(),
                c.output_dir.display(),
                record.wall_time_s
            );
            Ok(record.passed())
        }
        Command::Report { input } => {
            let path = report::write_report(&input)?;
            println!("wrote {}", path.display());
            Ok(report::all_passed(&input)?)
        }
        Command::Oracle { config, out } => {
            let mut c = ExperimentConfig::load(&config)?;
            Overrides {
                out,
                ..Default::default()
            }
            .apply(&mut c);
            let name = oracle::write_oracle(&c)?;
            println!("wrote {}", c.output_dir.join(name).display());
            Ok(true)
        }
    }
}
