//! Aggregation of replicate trajectories.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::surveillance::TrajectoryRecord;
use crate::tmle::Z95;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignFrequency {
    pub design: String,
    /// First day of the bucket.
    pub bucket_start: u32,
    /// Share of (replicate, day) pairs in the bucket that used the design.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub strategy: String,
    pub replicates: usize,
    /// Mean cumulative incidence per day.
    pub mean_curve: Vec<f64>,
    pub finals: Vec<f64>,
    pub final_mean: f64,
    pub final_se: f64,
    pub final_ci: (f64, f64),
    pub design_frequencies: Vec<DesignFrequency>,
}

impl MonteCarloSummary {
    /// Summaries of one strategy's replicates. Panics on an empty slice.
    pub fn from_records(records: &[TrajectoryRecord], bucket_width: u32) -> Self {
        assert!(!records.is_empty(), "at least one record is needed");
        let reps = records.len();
        let horizon = records.iter().map(|r| r.days.len()).max().unwrap_or(0);
        let mut mean_curve = vec![0.0; horizon];
        for r in records {
            for (t, d) in r.days.iter().enumerate() {
                mean_curve[t] += d.cumulative_incidence / reps as f64;
            }
        }
        let finals: Vec<f64> = records.iter().map(TrajectoryRecord::final_incidence).collect();
        let final_mean = math::mean(&finals);
        let final_se = if reps > 1 {
            math::sample_sd(&finals) / math::sqrt(reps as f64)
        } else {
            0.0
        };
        let final_ci = (final_mean - Z95 * final_se, final_mean + Z95 * final_se);

        let bucket_width = bucket_width.max(1);
        let mut counts: BTreeMap<(u32, String), usize> = BTreeMap::new();
        let mut totals: BTreeMap<u32, usize> = BTreeMap::new();
        for r in records {
            for d in &r.days {
                let b = d.t / bucket_width * bucket_width;
                *totals.entry(b).or_default() += 1;
                if let Some(label) = r.design_labels.get(d.design) {
                    *counts.entry((b, label.clone())).or_default() += 1;
                }
            }
        }
        let design_frequencies = counts
            .into_iter()
            .map(|((b, design), c)| DesignFrequency {
                design,
                bucket_start: b,
                frequency: c as f64 / totals[&b] as f64,
            })
            .collect();

        MonteCarloSummary {
            strategy: records[0].strategy.clone(),
            replicates: reps,
            mean_curve,
            finals,
            final_mean,
            final_se,
            final_ci,
            design_frequencies,
        }
    }

    /// Intervals of two summaries overlap.
    pub fn overlaps(&self, other: &MonteCarloSummary) -> bool {
        self.final_ci.0 <= other.final_ci.1 && other.final_ci.0 <= self.final_ci.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surveillance::DayRecord;

    fn rec(finals: &[f64], design: usize) -> TrajectoryRecord {
        TrajectoryRecord {
            strategy: "x".into(),
            seed: 0,
            design_labels: vec!["a".into(), "b".into()],
            learner_names: Vec::new(),
            days: finals
                .iter()
                .enumerate()
                .map(|(t, &c)| DayRecord {
                    t: t as u32,
                    counts: [0; 6],
                    tests: 0,
                    positives: 0,
                    cumulative_incidence: c,
                    design,
                    selected: None,
                    estimates: Vec::new(),
                    true_detection: Vec::new(),
                    max_eif_mean: 0.0,
                    degenerate_fits: 0,
                    fallback: false,
                })
                .collect(),
            tests: Vec::new(),
            ledger: Vec::new(),
        }
    }

    #[test]
    fn single_replicate_equals_record() {
        let s = MonteCarloSummary::from_records(&[rec(&[0.1, 0.2], 0)], 10);
        assert_eq!(s.mean_curve, vec![0.1, 0.2]);
        assert_eq!(s.final_ci, (0.2, 0.2));
    }

    #[test]
    fn means_and_frequencies() {
        let s = MonteCarloSummary::from_records(&[rec(&[0.1, 0.2], 0), rec(&[0.1, 0.4], 1)], 10);
        assert!((s.final_mean - 0.3).abs() < 1e-15);
        let se = (0.02f64).sqrt() / 2f64.sqrt();
        assert!((s.final_se - se).abs() < 1e-15);
        assert_eq!(s.design_frequencies.len(), 2);
        assert!(s.design_frequencies.iter().all(|f| (f.frequency - 0.5).abs() < 1e-15));
    }
}
