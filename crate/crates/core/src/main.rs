use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use embgeo::cli::{self, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "embgeo", version, about = "Embedding-geometry experiments on a toy tied-weight language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary and frequency report
    Ingest(Common),
    /// Train one model per configured gamma
    Train(Common),
    /// Geometry reports, projections and spectra of trained checkpoints
    Diagnose(Common),
    /// Run the numerical verification suite
    Verify(Common),
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (common, name) = match &cli.command {
        Command::Ingest(c) => (c, "ingest"),
        Command::Train(c) => (c, "train"),
        Command::Diagnose(c) => (c, "diagnose"),
        Command::Verify(c) => (c, "verify"),
    };
    let cfg = ExperimentConfig::load(&common.config, common.out.as_deref())?;
    let (out, code) = match name {
        "ingest" => (cli::cmd_ingest(&cfg)?, cli::EXIT_OK),
        "train" => (cli::cmd_train(&cfg)?, cli::EXIT_OK),
        "diagnose" => (cli::cmd_diagnose(&cfg)?, cli::EXIT_OK),
        _ => {
            let (out, bundle) = cli::cmd_verify(&cfg)?;
            for item in &bundle.items {
                println!("{:<28} {:?}  {}", item.name, item.status, item.summary);
            }
            let code = bundle.exit_code();
            (out, code)
        }
    };
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("embgeo: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
