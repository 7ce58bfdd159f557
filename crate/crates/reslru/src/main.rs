use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reslru::commands::{self, Context};
use reslru::config;
use reslru::exec::RayonExecutor;
use reslru::output::{OutputDir, Progress};
use reslru::presets::Preset;
use reslru::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "reslru",
    version,
    about = "Readout-resonator leakage-reduction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config in lab units; merged over the presets.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in parameter sets applied before the config file (repeatable).
    #[arg(long, global = true, value_enum)]
    preset: Vec<Preset>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (overrides the config).
    #[arg(long, global = true, env = "RESLRU_THREADS")]
    threads: Option<usize>,

    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// No progress records on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Avoided-crossing position and coupling vs drive amplitude.
    Crossing,
    /// Populations vs time from each initial level.
    Evolve,
    /// Leakage landscape over (amplitude, frequency) and operating point.
    Heatmap,
    /// Reset fidelity vs static frequency shift.
    Zz,
    /// Surface-17 leakage Monte Carlo with and without LRUs.
    Markov,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Crossing => "crossing",
            Command::Evolve => "evolve",
            Command::Heatmap => "heatmap",
            Command::Zz => "zz",
            Command::Markov => "markov",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.preset)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let exec = RayonExecutor::new(threads)?;
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let mut ctx = Context {
        cfg: &cfg,
        exec: &exec,
        out: &mut out,
        progress: Progress {
            enabled: !cli.quiet,
        },
    };
    match cli.command {
        Command::Crossing => commands::crossing(&mut ctx)?,
        Command::Evolve => commands::evolve(&mut ctx)?,
        Command::Heatmap => commands::heatmap(&mut ctx)?,
        Command::Zz => commands::zz(&mut ctx)?,
        Command::Markov => commands::markov(&mut ctx)?,
    }
    out.finish(cli.command.name(), &cfg, exec.threads())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
