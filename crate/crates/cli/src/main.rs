use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use nfnls::harness::{run_experiment, ExperimentConfig, ExperimentRegistry};

/// Run one experiment and write report.json plus CSV tables.
#[derive(Parser, Debug)]
#[command(name = "nfnls", version)]
struct Cli {
    /// Experiment kind: verify_lemmas, converge, solve, compare, trees or norms.
    kind: String,
    /// TOML file with flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    ExperimentRegistry::standard().get(&cli.kind)?;
    cfg.kind = cli.kind.clone();
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    cfg.output = Some(out.display().to_string());
    let report = run_experiment(&cfg)?;
    report.write(&out).with_context(|| format!("writing {}", out.display()))?;
    for c in &report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("{status} {:<32} measured {:<12.4e} bound {:.4e} {}", c.name, c.measured, c.bound, c.detail);
    }
    println!("report: {}", out.join("report.json").display());
    Ok(report.all_passed)
}
