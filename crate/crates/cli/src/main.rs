use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectrolab_cli::{run_experiment, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "spectrolab", version, about = "Run spectral-inequality and heat-control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of the discretized operator
    Spectrum(Common),
    /// Spectral constants over a frequency grid
    Specineq(Common),
    /// Propagation-of-smallness exponent
    Propagation(Common),
    /// Gradient sup bound for the harmonic extension
    Sobolev(Common),
    /// HUM, Lebeau-Robbiano or impulsive null control
    Control(Common),
    /// Discrete-time observation inequality
    Obster(Common),
    /// Observation set generation and certificates
    Sets(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Base output directory; each run writes to its own subdirectory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Fail instead of warning when the grid under-resolves the frequencies
    #[arg(long)]
    strict: bool,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Spectrum(c) => ("spectrum", c),
            Command::Specineq(c) => ("specineq", c),
            Command::Propagation(c) => ("propagation", c),
            Command::Sobolev(c) => ("sobolev", c),
            Command::Control(c) => ("control", c),
            Command::Obster(c) => ("obster", c),
            Command::Sets(c) => ("sets", c),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = cli.command.parts();
    let mut config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if config.experiment.command() != name {
        return config_error(ConfigError::Invalid {
            field: "experiment".into(),
            message: format!("`{}` cannot run under `{name}`", config.experiment.name()),
        });
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let base = args.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    match run_experiment(&config, &base, args.strict) {
        Ok(record) => {
            let summary = std::fs::read_to_string(record.run_dir.join("summary.txt")).unwrap_or_default();
            print!("{summary}");
            println!("output: {}", record.run_dir.display());
            ExitCode::from(record.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(2)
}
