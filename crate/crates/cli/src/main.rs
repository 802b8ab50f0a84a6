use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zomd_cli::commands::{cmd_run, cmd_sweep, cmd_verify};
use zomd_cli::config::SweepAxis;
use zomd_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "zomd", version, about = "Two-point gradient-free mirror descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trace per seed.
    Run(Common),
    /// Traces and a summary over one axis: N, delta (multiples of delta0) or n.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Option<SweepAxis>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Monte-Carlo checks of the moment and smoothing bounds; exit 1 on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set noise.delta_multiple=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(seeds) = &self.seeds {
            let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
            overrides.push(format!("seeds=[{}]", list.join(",")));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output.dir={}", toml_string(&out.to_string_lossy())));
        }
        if let Some(w) = self.workers {
            overrides.push(format!("workers={w}"));
        }
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run(common) => cmd_run(&common.load()?).map(|()| true),
        Command::Sweep { common, axis, values } => {
            let config = common.load()?;
            let axis = axis
                .or(config.sweep.axis)
                .ok_or_else(|| CliError::Config("sweep needs an axis (--axis or sweep.axis)".into()))?;
            let values = values.unwrap_or_else(|| config.sweep.values.clone());
            cmd_sweep(&config, axis, &values).map(|()| true)
        }
        Command::Verify { common, samples } => {
            let mut config = common.load()?;
            if let Some(s) = samples {
                config.verify.samples = s;
            }
            cmd_verify(&config)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("zomd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
