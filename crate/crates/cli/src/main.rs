use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mecpow_cli::config::{self, ExperimentConfig};
use mecpow_cli::experiments::{self, EXPERIMENTS};
use mecpow_cli::tools;
use mecpow_cli::CliError;

/// Exit status when every threshold check passed.
const EXIT_PASS: u8 = 0;
/// Exit status when at least one threshold check failed.
const EXIT_CHECK_FAILED: u8 = 1;
/// Exit status for usage, configuration and runtime errors.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "mecpow", version, about = "Fair nonce ordering, nonce-selection game and difficulty control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment (or `all`) and write its CSVs and summary.
    Run {
        experiment: String,
        /// TOML config; every key is optional.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory. Falls back to the config's `out_dir`, then to
        /// `$MECPOW_OUT_DIR`, then to `./out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file and print the effective configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available experiments.
    List,
    /// Merge nonce sequences (one line per user) into a service order CSV.
    Order {
        /// Text file with whitespace-separated ascending nonces per line.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Algorithm::Kl)]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Nonce bit-length L.
        #[arg(long, default_value_t = 32)]
        bits: u32,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the equilibrium for a config's sizes and print the solution CSV.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Kl,
    Wrr,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    Ok(match path {
        Some(path) => config::load(path)?,
        None => ExperimentConfig::default(),
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os("MECPOW_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Run {
            experiment,
            config,
            seed,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let dir = out_dir(out, &config);
            let names: Vec<&str> = if experiment == "all" {
                EXPERIMENTS.iter().map(|e| e.name).collect()
            } else {
                vec![experiment.as_str()]
            };
            let mut status = EXIT_PASS;
            for name in &names {
                let target = if names.len() > 1 { dir.join(name) } else { dir.clone() };
                let report = experiments::run(name, &config, seed, &target)?;
                print!("{}", report.render());
                if !report.passed() {
                    status = EXIT_CHECK_FAILED;
                }
            }
            Ok(status)
        }
        Command::Validate { config } => {
            let config = config::load(&config)?;
            print!("{}", config.to_toml());
            Ok(EXIT_PASS)
        }
        Command::List => {
            for e in EXPERIMENTS {
                println!("{:<10} {}", e.name, e.description);
            }
            Ok(EXIT_PASS)
        }
        Command::Order {
            input,
            algorithm,
            seed,
            bits,
            out,
        } => {
            let text = std::fs::read_to_string(&input).map_err(|e| CliError::io(&input, e))?;
            let algorithm = match algorithm {
                Algorithm::Kl => tools::Ordering::Kl,
                Algorithm::Wrr => tools::Ordering::Wrr,
            };
            tools::order(&text, bits, algorithm, seed, output(out.as_deref())?)?;
            Ok(EXIT_PASS)
        }
        Command::Solve { config, out } => {
            let config = load_config(config.as_deref())?;
            tools::solve(&config, output(out.as_deref())?)?;
            Ok(EXIT_PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
