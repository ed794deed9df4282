//! Parallel Monte Carlo over replicates and invariant audits of the results.

use adaptsurv_core::rng::replicate_seed;
use adaptsurv_core::summary::MonteCarloSummary;
use adaptsurv_core::surveillance::{run_trajectory, Strategy, SurveillanceConfig, TrajectoryRecord};
use rayon::prelude::*;

use crate::config::Cell;
use crate::error::{HarnessError, Result};

/// Tolerance of the targeting audit on the empirical EIF mean.
pub const EIF_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct StrategyRuns {
    pub config: SurveillanceConfig,
    pub records: Vec<TrajectoryRecord>,
    pub summary: MonteCarloSummary,
}

impl StrategyRuns {
    pub fn name(&self) -> &'static str {
        self.config.strategy.name()
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub budget: usize,
    pub risk_scale: f64,
    pub strategies: Vec<StrategyRuns>,
}

impl CellResult {
    pub fn get(&self, strategy: &str) -> Option<&StrategyRuns> {
        self.strategies.iter().find(|s| s.name() == strategy)
    }
}

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(HarnessError::Config("--threads must be at least 1".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| HarnessError::Pool(e.to_string()))
}

/// Seeds of replicates `0..replicates`; shared by every strategy so that
/// strategies are compared on common random numbers.
pub fn replicate_seeds(base: u64, replicates: usize) -> Vec<u64> {
    (0..replicates as u64).map(|r| replicate_seed(base, r)).collect()
}

/// Run every (strategy, replicate) pair of a cell. Results are collected in
/// task order, so output does not depend on the number of threads.
pub fn run_cell(
    cell: &Cell,
    replicates: usize,
    base_seed: u64,
    bucket_width: u32,
    pool: &rayon::ThreadPool,
) -> Result<CellResult> {
    let seeds = replicate_seeds(base_seed, replicates);
    let tasks: Vec<(usize, u64)> = (0..cell.runs.len())
        .flat_map(|s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let records: Vec<TrajectoryRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, seed)| run_trajectory(&cell.runs[s], seed).map_err(HarnessError::from))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut it = records.into_iter();
    let strategies = cell
        .runs
        .iter()
        .map(|cfg| {
            let recs: Vec<TrajectoryRecord> = it.by_ref().take(replicates).collect();
            let summary = MonteCarloSummary::from_records(&recs, bucket_width);
            StrategyRuns {
                config: cfg.clone(),
                records: recs,
                summary,
            }
        })
        .collect();
    Ok(CellResult {
        budget: cell.budget,
        risk_scale: cell.risk_scale,
        strategies,
    })
}

/// Check the per-day invariants of one trajectory: budget, conservation,
/// monotone incidence, solved targeting equations and bounded values.
pub fn audit_record(cfg: &SurveillanceConfig, rec: &TrajectoryRecord) -> Result<()> {
    let n = cfg.population.n;
    let fail = |what: String| Err(HarnessError::Invariant(format!("{} seed {}: {what}", rec.strategy, rec.seed)));
    if rec.days.len() != cfg.horizon as usize {
        return fail(format!("{} days recorded, horizon {}", rec.days.len(), cfg.horizon));
    }
    let mut prev = 0.0;
    for d in &rec.days {
        if d.tests > cfg.budget {
            return fail(format!("day {} used {} tests over budget {}", d.t, d.tests, cfg.budget));
        }
        if d.counts.iter().sum::<usize>() != n {
            return fail(format!("day {} compartments do not sum to {n}", d.t));
        }
        if d.cumulative_incidence < prev {
            return fail(format!("day {} cumulative incidence decreased", d.t));
        }
        prev = d.cumulative_incidence;
        if d.max_eif_mean >= EIF_TOLERANCE {
            return fail(format!("day {} EIF mean {} after targeting", d.t, d.max_eif_mean));
        }
        let cap = cfg.budget as f64 / n as f64;
        for e in &d.estimates {
            if !(e.psi >= 0.0 && e.psi <= cap * (1.0 + 1e-12)) {
                return fail(format!("day {} design {} psi {} outside [0, k/n]", d.t, e.design, e.psi));
            }
        }
        if matches!(cfg.strategy, Strategy::Fixed(adaptsurv_core::DesignKind::NoTesting)) && d.tests != 0 {
            return fail(format!("day {} tested under no_testing", d.t));
        }
    }
    Ok(())
}

pub fn audit_cell(result: &CellResult) -> Result<()> {
    for s in &result.strategies {
        for r in &s.records {
            audit_record(&s.config, r)?;
        }
    }
    Ok(())
}
