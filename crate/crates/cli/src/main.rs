//! Operator front end for the in-storage retrieval simulator. Subcommands
//! cover the full workflow: synthesize or ingest a dataset, deploy it onto a
//! simulated drive, run queries, sweep configurations, and merge run
//! reports into comparison tables.

mod bench;
mod deploy;
mod manifest;
mod query;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use reis_core::config::SimConfig;

/// Environment variable naming a config file; overrides `--config`.
pub const CONFIG_ENV: &str = "REIS_SIM_CONFIG";

#[derive(Parser)]
#[command(name = "reis", version, about = "Event-level simulator for in-storage ANN retrieval")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct Global {
    /// Device config file (TOML preset overrides). The REIS_SIM_CONFIG
    /// environment variable takes precedence when set.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Named device preset: reis-ssd1 or reis-ssd2.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Root seed for all randomized steps.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Directory that receives generated files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

impl Global {
    /// Resolves the simulator config: env var, then --config, then
    /// --preset, then the default preset.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let from_file = |path: &PathBuf| -> Result<SimConfig> {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            SimConfig::from_toml_str(&text).with_context(|| format!("parsing config {}", path.display()))
        };
        if let Ok(path) = std::env::var(CONFIG_ENV) {
            return from_file(&PathBuf::from(path));
        }
        if let Some(path) = &self.config {
            return from_file(path);
        }
        let name = self.preset.as_deref().unwrap_or("reis-ssd1");
        Ok(SimConfig::preset(name)?)
    }

    /// The output directory, created on first use.
    pub fn out_dir(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        Ok(self.out.clone())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a clustered dataset and write its manifest.
    Generate(manifest::GenerateArgs),
    /// Validate existing dataset files and write a manifest for them.
    Ingest(manifest::IngestArgs),
    /// Train, pack, and flash a database; writes a device image.
    Deploy(deploy::DeployArgs),
    /// Run a query batch against a deployed image.
    Search(query::SearchArgs),
    /// Emit the drive command stream for a query batch as JSON lines.
    Trace(query::TraceArgs),
    /// Sweep search configurations and write CSV/JSON run reports.
    Bench(bench::BenchArgs),
    /// Merge run reports into comparison and breakdown tables.
    Report(report::ReportArgs),
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(args) => manifest::generate(&cli.global, args),
        Command::Ingest(args) => manifest::ingest(&cli.global, args),
        Command::Deploy(args) => deploy::run(&cli.global, args),
        Command::Search(args) => query::search(&cli.global, args),
        Command::Trace(args) => query::trace(&cli.global, args),
        Command::Bench(args) => bench::run(&cli.global, args),
        Command::Report(args) => report::run(&cli.global, args),
    }
}

/// A downstream pipe closing early (reis ... | head) is not a failure.
fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors before we get here.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}
