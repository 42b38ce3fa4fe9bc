mod commands;
mod config;
mod error;

use clap::{Args, Parser, Subcommand};

use crate::config::Settings;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "pca-gibbs",
    version,
    about = "Parallel PCA sampler for pair-interaction Gibbs measures",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file with default settings
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Re-run with the settings embedded in an earlier output file
    #[arg(long, global = true)]
    replay: Option<std::path::PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Run a chain and write one record per step
    Sample(Common),
    /// Exact TV distance between the PCA and Gibbs laws over a δ grid
    ExactTv(Common),
    /// Dobrushin coefficients and certified bounds as JSON
    DobrushinCheck(Common),
    /// Coalescence times of the monotone coupling
    Mixing(Common),
    /// Exact magnetization laws of the Curie-Weiss model
    CwAnalyze(Common),
    /// Throughput of PCA steps against single-site sweeps
    Bench(Common),
}

impl Command {
    fn split(self) -> (&'static str, Common) {
        match self {
            Command::Sample(c) => ("sample", c),
            Command::ExactTv(c) => ("exact-tv", c),
            Command::DobrushinCheck(c) => ("dobrushin-check", c),
            Command::Mixing(c) => ("mixing", c),
            Command::CwAnalyze(c) => ("cw-analyze", c),
            Command::Bench(c) => ("bench", c),
        }
    }
}

fn resolve(name: &str, common: Common) -> Result<Settings, CliError> {
    let mut settings = common.settings;
    if let Some(path) = &common.replay {
        let (command, replayed) = config::load_replay(path)?;
        if command != name {
            return Err(CliError::Usage(format!(
                "{} was produced by '{command}', not '{name}'",
                path.display()
            )));
        }
        settings = settings.merge(replayed);
    }
    if let Some(path) = &common.config {
        settings = settings.merge(config::load_toml(path)?);
    }
    Ok(settings)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = cli.command.split();
    let settings = resolve(name, common)?;
    match name {
        "sample" => commands::sample(&settings),
        "exact-tv" => commands::exact_tv(&settings),
        "dobrushin-check" => commands::dobrushin_check(&settings),
        "mixing" => commands::mixing(&settings),
        "cw-analyze" => commands::cw_analyze(&settings),
        "bench" => commands::bench(&settings),
        _ => unreachable!(),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("pca-gibbs: {e}");
        std::process::exit(e.exit_code());
    }
}
