//! `cvqkd`: key-rate calculations for discrete-modulated CV-QKD.

mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Format;
use error::CliError;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "Asymptotic key rates for discrete-modulated CV-QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Set a config key, e.g. `channel.eps_C=0.05`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// 1 − η_A over a grid of constellations and variances.
    EtaScan,
    /// One key-rate point with full diagnostics.
    Keyrate,
    /// Key rate over a distance (or transmittance) and noise grid.
    Sweep,
    /// Largest excess noise with a positive key rate, per distance.
    NoiseFrontier,
}

fn run(cli: &Cli) -> Result<commands::Output, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let mut loaded = config::load(cli.config.as_deref(), &cli.overrides)?;
    let default_format = match cli.command {
        Command::Keyrate => Format::Json,
        _ => Format::Csv,
    };
    let format = cli.format.or(loaded.config.output.format).unwrap_or(default_format);
    match cli.command {
        Command::EtaScan => commands::eta_scan(&mut loaded, format),
        Command::Keyrate => commands::keyrate(&mut loaded, format),
        Command::Sweep => commands::sweep(&mut loaded, format),
        Command::NoiseFrontier => commands::noise_frontier(&mut loaded, format),
    }
    .map(|mut out| {
        out.path = cli.out.clone().or(loaded.config.output.path.clone().map(PathBuf::from));
        out
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            let written = match &out.path {
                Some(p) => std::fs::write(p, &out.text),
                None => std::io::stdout().write_all(out.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("cvqkd: cannot write output: {e}");
                return ExitCode::from(3);
            }
            if out.partial {
                eprintln!("cvqkd: some rows failed; see the error column");
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("cvqkd: {e}");
            let doc = serde_json::json!({ "error": { "class": e.class(), "message": e.to_string() } });
            println!("{doc}");
            ExitCode::from(e.exit_code())
        }
    }
}
