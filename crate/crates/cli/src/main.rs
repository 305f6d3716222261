use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use distloc_core::harness::{self, load_config, ScenarioConfig};
use distloc_core::verify;

#[derive(Parser)]
#[command(name = "distloc", version, about = "Distributed tracking and self-localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write per-edge errors, RMSE, tracking error and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `NAME=v1,v2,...` with NAME one of rounds (or K), sigma_x, sigma_y,
        /// sigma_ratio, gamma0, estimator.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tracking error with known offsets on chains of increasing length.
    Chain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        lengths: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the recursive algorithms against the reference computations.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn apply_overrides(cfg: &mut ScenarioConfig, runs: Option<usize>, steps: Option<usize>, seed: Option<u64>) -> Result<()> {
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(())
}

fn run_to(cfg: &ScenarioConfig, out: &Path) -> Result<harness::output::Summary> {
    let results = harness::run_scenario(cfg)?;
    for w in &results.scenario.warnings {
        eprintln!("warning: {w}");
    }
    harness::write_outputs(&results, out).with_context(|| format!("writing results to {}", out.display()))?;
    Ok(harness::summarize(&results))
}

fn sweep(base: &ScenarioConfig, param: &str, out: &Path) -> Result<()> {
    let (name, values) = param
        .split_once('=')
        .with_context(|| format!("`{param}` is not of the form NAME=v1,v2"))?;
    fs::create_dir_all(out)?;
    let mut table = String::from("param,value,initial_rmse,final_rmse\n");
    for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let mut cfg = base.clone();
        cfg.set_param(name, value)?;
        let summary = run_to(&cfg, &out.join(format!("{name}={value}")))?;
        println!("{name}={value}: rmse {:.6} -> {:.6}", summary.initial_rmse, summary.final_rmse);
        table.push_str(&format!("{name},{value},{},{}\n", summary.initial_rmse, summary.final_rmse));
    }
    fs::write(out.join("sweep.csv"), table)?;
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            runs,
            steps,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, runs, steps, seed)?;
            let summary = run_to(&cfg, &out)?;
            println!(
                "{}: {} run(s), {} steps, rmse {:.6} -> {:.6}",
                if cfg.name.is_empty() { "scenario" } else { &cfg.name },
                cfg.runs,
                cfg.steps,
                summary.initial_rmse,
                summary.final_rmse
            );
        }
        Command::Sweep {
            config,
            param,
            out,
            runs,
            steps,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, runs, steps, seed)?;
            sweep(&cfg, &param, &out)?;
        }
        Command::Chain {
            config,
            lengths,
            out,
            runs,
            steps,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, runs, steps, seed)?;
            let rows = harness::tracking_error_vs_nodes(&lengths, &cfg)?;
            fs::create_dir_all(&out)?;
            let mut w = String::from("nodes,mean_abs_error,std_error\n");
            for r in &rows {
                println!("{} node(s): {:.6} +- {:.6}", r.nodes, r.mean_abs_error, r.std_error);
                w.push_str(&format!("{},{},{}\n", r.nodes, r.mean_abs_error, r.std_error));
            }
            fs::write(out.join("tracking_vs_nodes.csv"), w)?;
        }
        Command::Verify { seed } => {
            let reports = verify::run_all(seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{r}");
                ok &= r.passed;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
