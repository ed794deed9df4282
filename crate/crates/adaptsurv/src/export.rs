//! CSV and JSON outputs.
//!
//! Column order of every file is fixed:
//!
//! | file | columns |
//! |------|---------|
//! | `trajectory.csv` | strategy, replicate, t, cumulative_incidence |
//! | `finals.csv` | strategy, mean, ci_lo, ci_hi |
//! | `designs.csv` | selector, design, time_bucket, frequency |
//! | `days.csv` | strategy, replicate, t, s, e, it, is, ia, r, tests, positives, design, cumulative_incidence |
//! | `ledger.csv` | strategy, replicate, day, candidate, learner, daily_loss, cumulative_risk, fitted, winner |
//! | `tests.csv` | strategy, replicate, day, agent, design, g, result |
//! | `selector_log/<strategy>_r<replicate>.csv` | t, design, psi, sigma, ci_lo, ci_hi, window_loss, chosen_flag |
//! | `edges.csv` | layer, agent_a, agent_b, prob |
//! | `state.csv` | strategy, agent, compartment, isolated, days_in_compartment |
//! | `sweep_finals.csv` | budget, risk_scale, strategy, mean, ci_lo, ci_hi |
//!
//! `finals.csv` intervals are mean ± 1.96 SE over replicate finals.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use adaptsurv_core::epidemic::EpidemicState;
use adaptsurv_core::population::NetworkLayers;
use adaptsurv_core::summary::MonteCarloSummary;
use adaptsurv_core::surveillance::{DayRecord, Strategy, TrajectoryRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{CellResult, StrategyRuns};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub strategy: String,
    pub replicate: usize,
    pub t: u32,
    pub cumulative_incidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalsRow {
    pub strategy: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignsRow {
    pub selector: String,
    pub design: String,
    pub time_bucket: u32,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaysRow {
    pub strategy: String,
    pub replicate: usize,
    pub t: u32,
    pub s: usize,
    pub e: usize,
    pub it: usize,
    pub is: usize,
    pub ia: usize,
    pub r: usize,
    pub tests: usize,
    pub positives: usize,
    pub design: String,
    pub cumulative_incidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub strategy: String,
    pub replicate: usize,
    pub day: u32,
    pub candidate: usize,
    pub learner: String,
    pub daily_loss: f64,
    pub cumulative_risk: f64,
    pub fitted: bool,
    pub winner: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub strategy: String,
    pub replicate: usize,
    pub day: u32,
    pub agent: u32,
    pub design: String,
    pub g: f64,
    pub result: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorRow {
    pub t: u32,
    pub design: String,
    pub psi: f64,
    pub sigma: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub window_loss: Option<f64>,
    pub chosen_flag: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub layer: String,
    pub agent_a: u32,
    pub agent_b: u32,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub strategy: String,
    pub agent: usize,
    pub compartment: String,
    pub isolated: bool,
    pub days_in_compartment: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFinalsRow {
    pub budget: usize,
    pub risk_scale: f64,
    pub strategy: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub budget: usize,
    pub risk_scale: f64,
    pub replicate_seeds: Vec<u64>,
    /// SHA-256 of every written file, keyed by path relative to the output directory.
    pub files: BTreeMap<String, String>,
    /// SHA-256 over the sorted `path hash` lines of `files`.
    pub content_hash: String,
}

/// Write rows with a header, even when there are no rows.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["strategy", "replicate", "t", "cumulative_incidence"];
pub const FINALS_HEADER: [&str; 4] = ["strategy", "mean", "ci_lo", "ci_hi"];
pub const DESIGNS_HEADER: [&str; 4] = ["selector", "design", "time_bucket", "frequency"];
pub const DAYS_HEADER: [&str; 13] = [
    "strategy",
    "replicate",
    "t",
    "s",
    "e",
    "it",
    "is",
    "ia",
    "r",
    "tests",
    "positives",
    "design",
    "cumulative_incidence",
];
pub const LEDGER_HEADER: [&str; 9] = [
    "strategy",
    "replicate",
    "day",
    "candidate",
    "learner",
    "daily_loss",
    "cumulative_risk",
    "fitted",
    "winner",
];
pub const TESTS_HEADER: [&str; 7] = ["strategy", "replicate", "day", "agent", "design", "g", "result"];
pub const SELECTOR_HEADER: [&str; 8] = ["t", "design", "psi", "sigma", "ci_lo", "ci_hi", "window_loss", "chosen_flag"];
pub const EDGES_HEADER: [&str; 4] = ["layer", "agent_a", "agent_b", "prob"];
pub const STATE_HEADER: [&str; 5] = ["strategy", "agent", "compartment", "isolated", "days_in_compartment"];
pub const SWEEP_FINALS_HEADER: [&str; 6] = ["budget", "risk_scale", "strategy", "mean", "ci_lo", "ci_hi"];

/// Selector name of an online strategy, `None` for fixed designs.
pub fn selector_name(strategy: &str) -> Option<&'static str> {
    match Strategy::from_name(strategy, 1) {
        Ok(Strategy::Osl(kind)) => Some(kind.name()),
        _ => None,
    }
}

pub fn trajectory_rows(runs: &[StrategyRuns]) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for s in runs {
        for (rep, r) in s.records.iter().enumerate() {
            for d in &r.days {
                rows.push(TrajectoryRow {
                    strategy: r.strategy.clone(),
                    replicate: rep,
                    t: d.t,
                    cumulative_incidence: d.cumulative_incidence,
                });
            }
        }
    }
    rows
}

pub fn finals_rows(summaries: &[MonteCarloSummary]) -> Vec<FinalsRow> {
    summaries
        .iter()
        .map(|s| FinalsRow {
            strategy: s.strategy.clone(),
            mean: s.final_mean,
            ci_lo: s.final_ci.0,
            ci_hi: s.final_ci.1,
        })
        .collect()
}

pub fn designs_rows(summaries: &[MonteCarloSummary]) -> Vec<DesignsRow> {
    let mut rows = Vec::new();
    for s in summaries {
        let Some(selector) = selector_name(&s.strategy) else { continue };
        for f in &s.design_frequencies {
            rows.push(DesignsRow {
                selector: selector.into(),
                design: f.design.clone(),
                time_bucket: f.bucket_start,
                frequency: f.frequency,
            });
        }
    }
    rows
}

fn days_rows(runs: &[StrategyRuns]) -> Vec<DaysRow> {
    let mut rows = Vec::new();
    for s in runs {
        for (rep, r) in s.records.iter().enumerate() {
            for d in &r.days {
                let c = d.counts;
                rows.push(DaysRow {
                    strategy: r.strategy.clone(),
                    replicate: rep,
                    t: d.t,
                    s: c[0],
                    e: c[1],
                    it: c[2],
                    is: c[3],
                    ia: c[4],
                    r: c[5],
                    tests: d.tests,
                    positives: d.positives,
                    design: r.design_labels[d.design].clone(),
                    cumulative_incidence: d.cumulative_incidence,
                });
            }
        }
    }
    rows
}

fn ledger_rows(runs: &[StrategyRuns]) -> Vec<LedgerRow> {
    let mut rows = Vec::new();
    for s in runs {
        for (rep, r) in s.records.iter().enumerate() {
            for e in &r.ledger {
                rows.push(LedgerRow {
                    strategy: r.strategy.clone(),
                    replicate: rep,
                    day: e.day,
                    candidate: e.candidate,
                    learner: r.learner_names[e.candidate].clone(),
                    daily_loss: e.daily_loss,
                    cumulative_risk: e.cumulative,
                    fitted: e.fitted,
                    winner: e.winner,
                });
            }
        }
    }
    rows
}

fn test_rows(runs: &[StrategyRuns]) -> Vec<TestRow> {
    let mut rows = Vec::new();
    for s in runs {
        for (rep, r) in s.records.iter().enumerate() {
            for e in &r.tests {
                rows.push(TestRow {
                    strategy: r.strategy.clone(),
                    replicate: rep,
                    day: e.day,
                    agent: e.agent,
                    design: r.design_labels[e.design].clone(),
                    g: e.g,
                    result: e.result,
                });
            }
        }
    }
    rows
}

pub fn selector_rows(rec: &TrajectoryRecord) -> Vec<SelectorRow> {
    let mut rows = Vec::new();
    for d in &rec.days {
        for e in &d.estimates {
            rows.push(SelectorRow {
                t: d.t,
                design: rec.design_labels[e.design].clone(),
                psi: e.psi,
                sigma: e.sigma,
                ci_lo: e.ci_lo,
                ci_hi: e.ci_hi,
                window_loss: e.window_loss,
                chosen_flag: u8::from(d.selected == Some(e.design)),
            });
        }
    }
    rows
}

pub fn edge_rows(layers: &NetworkLayers) -> Vec<EdgeRow> {
    layers
        .edge_list()
        .into_iter()
        .map(|(layer, a, b, prob)| EdgeRow {
            layer: layer.name().into(),
            agent_a: a,
            agent_b: b,
            prob,
        })
        .collect()
}

pub fn state_rows(strategy: &str, state: &EpidemicState) -> Vec<StateRow> {
    state
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| StateRow {
            strategy: strategy.into(),
            agent: i,
            compartment: s.compartment.name().into(),
            isolated: s.isolated,
            days_in_compartment: s.days_in_compartment,
        })
        .collect()
}

/// Git-style content hash of a file: SHA-256 over `blob <len>\0<bytes>`.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(&bytes);
    Ok(hex(&h.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// Write every per-cell file into `dir` and return the written paths.
pub fn write_cell(dir: &Path, result: &CellResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let runs = &result.strategies;
    let summaries: Vec<MonteCarloSummary> = runs.iter().map(|s| s.summary.clone()).collect();

    let p = dir.join("trajectory.csv");
    write_csv(&p, &TRAJECTORY_HEADER, &trajectory_rows(runs))?;
    written.push(p);
    let p = dir.join("finals.csv");
    write_csv(&p, &FINALS_HEADER, &finals_rows(&summaries))?;
    written.push(p);
    let p = dir.join("designs.csv");
    write_csv(&p, &DESIGNS_HEADER, &designs_rows(&summaries))?;
    written.push(p);
    let p = dir.join("days.csv");
    write_csv(&p, &DAYS_HEADER, &days_rows(runs))?;
    written.push(p);

    let online: Vec<&StrategyRuns> = runs.iter().filter(|s| selector_name(s.name()).is_some()).collect();
    if !online.is_empty() {
        let p = dir.join("ledger.csv");
        write_csv(&p, &LEDGER_HEADER, &ledger_rows(runs))?;
        written.push(p);
        let log_dir = dir.join("selector_log");
        fs::create_dir_all(&log_dir)?;
        for s in online {
            for (rep, r) in s.records.iter().enumerate() {
                let p = log_dir.join(format!("{}_r{rep}.csv", s.name()));
                write_csv(&p, &SELECTOR_HEADER, &selector_rows(r))?;
                written.push(p);
            }
        }
    }
    if runs.iter().any(|s| s.config.record_tests) {
        let p = dir.join("tests.csv");
        write_csv(&p, &TESTS_HEADER, &test_rows(runs))?;
        written.push(p);
    }
    Ok(written)
}

/// Hash the written files and store the manifest next to them.
pub fn write_manifest(
    dir: &Path,
    config: &ExperimentConfig,
    result: &CellResult,
    replicate_seeds: Vec<u64>,
    written: &[PathBuf],
) -> Result<Manifest> {
    let mut files = BTreeMap::new();
    for p in written {
        files.insert(relative(dir, p), file_hash(p)?);
    }
    let mut h = Sha256::new();
    for (name, hash) in &files {
        h.update(format!("{name} {hash}\n").as_bytes());
    }
    let manifest = Manifest {
        config: config.clone(),
        budget: result.budget,
        risk_scale: result.risk_scale,
        replicate_seeds,
        files,
        content_hash: hex(&h.finalize()),
    };
    fs::write(dir.join("run_manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn sweep_finals_rows(cells: &[CellResult]) -> Vec<SweepFinalsRow> {
    let mut rows = Vec::new();
    for c in cells {
        for s in &c.strategies {
            rows.push(SweepFinalsRow {
                budget: c.budget,
                risk_scale: c.risk_scale,
                strategy: s.name().into(),
                mean: s.summary.final_mean,
                ci_lo: s.summary.final_ci.0,
                ci_hi: s.summary.final_ci.1,
            });
        }
    }
    rows
}

/// Directory name of a sweep cell.
pub fn cell_dir_name(budget: usize, risk_scale: f64) -> String {
    format!("k{budget}_rs{risk_scale}")
}

/// Rebuild trajectory records from `days.csv`, enough to recompute summaries.
pub fn records_from_days(rows: &[DaysRow]) -> Vec<TrajectoryRecord> {
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    let mut key: Option<(String, usize)> = None;
    for row in rows {
        let k = (row.strategy.clone(), row.replicate);
        if key.as_ref() != Some(&k) {
            out.push(TrajectoryRecord {
                strategy: row.strategy.clone(),
                seed: row.replicate as u64,
                design_labels: Vec::new(),
                learner_names: Vec::new(),
                days: Vec::new(),
                tests: Vec::new(),
                ledger: Vec::new(),
            });
            key = Some(k);
        }
        let rec = out.last_mut().expect("record started");
        let design = match rec.design_labels.iter().position(|l| *l == row.design) {
            Some(i) => i,
            None => {
                rec.design_labels.push(row.design.clone());
                rec.design_labels.len() - 1
            }
        };
        rec.days.push(DayRecord {
            t: row.t,
            counts: [row.s, row.e, row.it, row.is, row.ia, row.r],
            tests: row.tests,
            positives: row.positives,
            cumulative_incidence: row.cumulative_incidence,
            design,
            selected: None,
            estimates: Vec::new(),
            true_detection: Vec::new(),
            max_eif_mean: 0.0,
            degenerate_fits: 0,
            fallback: false,
        });
    }
    out
}

/// Recompute finals.csv and designs.csv of a cell from its days.csv.
pub fn replay_cell(from: &Path, to: &Path, bucket_width: u32) -> Result<Vec<MonteCarloSummary>> {
    let rows: Vec<DaysRow> = read_csv(&from.join("days.csv"))?;
    let records = records_from_days(&rows);
    let mut order: Vec<String> = Vec::new();
    for r in &records {
        if !order.contains(&r.strategy) {
            order.push(r.strategy.clone());
        }
    }
    let summaries: Vec<MonteCarloSummary> = order
        .iter()
        .map(|s| {
            let recs: Vec<TrajectoryRecord> = records.iter().filter(|r| &r.strategy == s).cloned().collect();
            MonteCarloSummary::from_records(&recs, bucket_width)
        })
        .collect();
    fs::create_dir_all(to)?;
    write_csv(&to.join("finals.csv"), &FINALS_HEADER, &finals_rows(&summaries))?;
    write_csv(&to.join("designs.csv"), &DESIGNS_HEADER, &designs_rows(&summaries))?;
    Ok(summaries)
}
