//! Command-line entry points.

use std::path::{Path, PathBuf};

use adaptsurv_core::surveillance::{build_world, run_trajectory_with_state};
use clap::{Args, Parser, Subcommand};

use crate::config::{Cell, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{audit_cell, replicate_seeds, run_cell, thread_pool, CellResult};
use crate::export;
use crate::validate;

#[derive(Debug, Parser)]
#[command(name = "adaptsurv", version, about = "Adaptive testing designs on a simulated campus epidemic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configured strategy at one budget and risk scale.
    Run(RunArgs),
    /// Run the cross product of sweep budgets and risk scales.
    Sweep(RunArgs),
    /// Run the invariant self-test battery.
    Validate(ValidateArgs),
    /// Recompute finals.csv and designs.csv from a run's days.csv.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the number of replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write the network edge list and final per-agent states of replicate 0.
    #[arg(long)]
    pub debug: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory holding days.csv.
    #[arg(long)]
    pub from: PathBuf,
    /// Directory for the recomputed files.
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration providing the design time-bucket width.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn load(path: Option<&Path>, replicates: Option<usize>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(r) = replicates {
        cfg.experiment.replicates = r;
    }
    if let Some(s) = seed {
        cfg.experiment.seed = s;
    }
    Ok(cfg)
}

/// Run, audit and export one cell into `dir`.
pub fn execute_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    dir: &Path,
    pool: &rayon::ThreadPool,
    debug: bool,
) -> Result<CellResult> {
    let reps = cfg.experiment.replicates;
    let result = run_cell(cell, reps, cfg.experiment.seed, cfg.experiment.design_bucket, pool)?;
    audit_cell(&result)?;
    let mut written = export::write_cell(dir, &result)?;
    let seeds = replicate_seeds(cfg.experiment.seed, reps);
    if debug {
        let (_, layers) = build_world(&cell.runs[0].population, seeds[0])?;
        let p = dir.join("edges.csv");
        export::write_csv(&p, &export::EDGES_HEADER, &export::edge_rows(&layers))?;
        written.push(p);
        let mut rows = Vec::new();
        for run in &cell.runs {
            let (rec, state) = run_trajectory_with_state(run, seeds[0])?;
            rows.extend(export::state_rows(&rec.strategy, &state));
        }
        let p = dir.join("state.csv");
        export::write_csv(&p, &export::STATE_HEADER, &rows)?;
        written.push(p);
    }
    export::write_manifest(dir, cfg, &result, seeds, &written)?;
    Ok(result)
}

pub fn run(args: &RunArgs) -> Result<CellResult> {
    let cfg = load(args.config.as_deref(), args.replicates, args.seed)?;
    let cell = cfg.run_cell()?;
    let pool = thread_pool(args.threads)?;
    execute_cell(&cfg, &cell, &args.out, &pool, args.debug)
}

pub fn sweep(args: &RunArgs) -> Result<Vec<CellResult>> {
    let cfg = load(args.config.as_deref(), args.replicates, args.seed)?;
    let cells = cfg.sweep_cells()?;
    let pool = thread_pool(args.threads)?;
    let mut results = Vec::new();
    for cell in &cells {
        let dir = args.out.join(export::cell_dir_name(cell.budget, cell.risk_scale));
        results.push(execute_cell(&cfg, cell, &dir, &pool, args.debug)?);
    }
    export::write_csv(
        &args.out.join("sweep_finals.csv"),
        &export::SWEEP_FINALS_HEADER,
        &export::sweep_finals_rows(&results),
    )?;
    Ok(results)
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    let checks = validate::run_battery(args.seed);
    let mut failed = Vec::new();
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("PASS  {}", c.name),
            Err(e) => {
                println!("FAIL  {}: {e}", c.name);
                failed.push(c.name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Invariant(failed.join("; ")))
    }
}

pub fn replay(args: &ReplayArgs) -> Result<()> {
    let cfg = load(args.config.as_deref(), None, None)?;
    export::replay_cell(&args.from, &args.out, cfg.experiment.design_bucket)?;
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => {
            let r = run(a)?;
            for s in &r.strategies {
                let m = &s.summary;
                println!(
                    "{:<20} final incidence {:.4}  95% CI ({:.4}, {:.4})",
                    m.strategy, m.final_mean, m.final_ci.0, m.final_ci.1
                );
            }
            Ok(())
        }
        Command::Sweep(a) => {
            let cells = sweep(a)?;
            println!("{} cells written to {}", cells.len(), a.out.display());
            Ok(())
        }
        Command::Validate(a) => validate(a),
        Command::Replay(a) => replay(a),
    }
}
