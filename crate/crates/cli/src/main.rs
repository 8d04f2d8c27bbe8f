use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use curvehedge::commands::{self, Command, Overrides};
use curvehedge::config::{parse_config, ConfigError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Price,
    Hedge,
    Backtest,
    Verify,
}

/// Bond-market hedging studies on a simulated forward curve.
#[derive(Debug, Parser)]
#[command(name = "curvehedge", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    inner_paths: Option<usize>,
    /// Comma-separated step counts, e.g. 25,50,100,200.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            if let Some(ce) = e.downcast_ref::<ConfigError>() {
                eprintln!("config error: {ce}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &Args) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = parse_config(&text)?;
    Overrides {
        seed: args.seed,
        paths: args.paths,
        inner_paths: args.inner_paths,
        steps: args.steps.clone(),
        out: args.out.clone(),
    }
    .apply(&mut cfg);
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    let command = match args.command {
        Cmd::Price => Command::Price,
        Cmd::Hedge => Command::Hedge,
        Cmd::Backtest => Command::Backtest,
        Cmd::Verify => Command::Verify,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n.max(1));
    }
    let outcome = pool.build()?.install(|| commands::run(command, &cfg))?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    for c in &outcome.failures {
        eprintln!("FAIL,{},{},{}", c.name, c.value, c.tolerance);
    }
    Ok(if outcome.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
