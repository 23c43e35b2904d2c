use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gbridge_cli::commands::{cmd_bridges, cmd_diagnose, cmd_discretization, cmd_run, cmd_simulate};
use gbridge_cli::config::{parse_config, RunConfig};

// The samplers allocate many small vectors; the system allocator dominates
// run time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "gbridge", version, about = "Guided-bridge MCMC for discretely observed diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-segment work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate observations and write them with their provenance.
    Simulate,
    /// Run the sampler; writes the trace and a summary.
    Run,
    /// Draw guided proposals on one segment.
    Bridges,
    /// Discretisation error study of the time-changed Euler scheme.
    Discretization,
    /// Summaries and autocorrelation times of an existing trace.
    Diagnose {
        /// Trace CSV (default: `trace.csv` in the output directory).
        trace: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().context("--config is required")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    if let Command::Diagnose { trace } = &cli.command {
        let (burn_in, thin, dir) = match &cli.config {
            Some(_) => {
                let c = load(cli)?;
                (c.burn_in, c.thin, c.output_dir)
            }
            None => (0, 1, cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))),
        };
        let trace = trace.clone().unwrap_or_else(|| dir.join("trace.csv"));
        let d = cmd_diagnose(&trace, burn_in, thin, &dir)?;
        println!("{}", serde_json::to_string_pretty(&d)?);
        return Ok(());
    }
    let cfg = load(cli)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Simulate => println!("{}", cmd_simulate(&cfg, &out)?.display()),
        Command::Run => println!("{}", serde_json::to_string_pretty(&cmd_run(&cfg, &out)?)?),
        Command::Bridges => println!("{}", cmd_bridges(&cfg, &out)?.display()),
        Command::Discretization => println!("{}", cmd_discretization(&cfg, &out)?.display()),
        Command::Diagnose { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| execute(&cli)),
        None => execute(&cli),
    }
}
