use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use semiwave_cli::output::OutDir;
use semiwave_cli::{parse_config, CliError, Command, Lab};

#[derive(Parser, Debug)]
#[command(name = "semiwave", version, about = "Fronts, spectra and stability experiments for delayed non-local monostable equations")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

fn execute(cli: &Cli) -> Result<Option<bool>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let cfg = parse_config(path).map_err(CliError::Config)?;
    let name = cfg
        .experiment
        .name
        .clone()
        .unwrap_or_else(|| cli.command.name().to_string());
    let out = OutDir::create(&cli.out.join(name))?;
    out.write("config.toml", &cfg.to_toml())?;
    let lab = Lab::new(cfg, cli.verbose)?;
    lab.run(cli.command, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(None) | Ok(Some(true)) => ExitCode::SUCCESS,
        Ok(Some(false)) => {
            eprintln!("verdict: fail");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}", e.to_string().trim_end());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
