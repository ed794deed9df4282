//! Invariant self-test battery behind `adaptsurv validate`.

use adaptsurv_core::designs::{allocate_sample, sample_inclusion};
use adaptsurv_core::online_cv::OnlineCvLedger;
use adaptsurv_core::population::PopulationConfig;
use adaptsurv_core::rng::{stream, Purpose};
use adaptsurv_core::surveillance::{run_trajectory, Strategy, SurveillanceConfig, STRATEGY_NAMES};
use adaptsurv_core::tmle;

use crate::experiment::audit_record;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

/// Small configuration used by the battery: every strategy finishes quickly.
pub fn small_config(strategy: Strategy) -> SurveillanceConfig {
    SurveillanceConfig {
        population: PopulationConfig {
            n: 300,
            ..PopulationConfig::default()
        },
        horizon: 30,
        budget: 12,
        strategy,
        ..SurveillanceConfig::default()
    }
}

fn trajectories_audit(seed: u64) -> Result<(), String> {
    for name in STRATEGY_NAMES {
        let cfg = small_config(Strategy::from_name(name, 5).map_err(|e| e.to_string())?);
        let rec = run_trajectory(&cfg, seed).map_err(|e| e.to_string())?;
        audit_record(&cfg, &rec).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// IPW prevalence under successive sampling is unbiased: the Monte Carlo mean
/// of `(1/n) Σ A Y / π` over many draws matches the true prevalence.
fn identification() -> Result<(), String> {
    let g = [0.9, 0.5, 0.3, 0.2, 0.1];
    let y = [true, false, true, true, false];
    let k = 2;
    let pi = sample_inclusion(&g, k);
    let truth = y.iter().filter(|&&v| v).count() as f64 / 5.0;
    let mut rng = stream(11, Purpose::Testing);
    let draws = 20_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let tested = allocate_sample(&g, k, &mut rng).map_err(|e| e.to_string())?;
        let v: f64 = tested.iter().filter(|&&i| y[i]).map(|&i| 1.0 / pi[i]).sum::<f64>() / 5.0;
        s += v;
        s2 += v * v;
    }
    let m = s / draws as f64;
    let se = ((s2 / draws as f64 - m * m) / draws as f64).sqrt();
    if (m - truth).abs() > 4.0 * se {
        return Err(format!("IPW mean {m} vs truth {truth} (se {se})"));
    }
    Ok(())
}

fn targeting_fixture() -> Result<(), String> {
    let q = [0.1, 0.4, 0.7, 0.2, 0.5, 0.3];
    let tested = [0, 1, 2, 4];
    let results = [true, false, true, false];
    let weights = [1.5, 0.5, 2.0, 1.0];
    let fit = tmle::tmle_fluctuate(&q, &tested, &results, &weights).map_err(|e| e.to_string())?;
    let m = tmle::eif_mean(&fit).abs();
    if m >= 1e-8 {
        return Err(format!("EIF mean {m} after targeting"));
    }
    Ok(())
}

fn ensemble_dominance() -> Result<(), String> {
    let mut l = OnlineCvLedger::new(3);
    let mut rng_state = 7u64;
    let mut next = || {
        rng_state = adaptsurv_core::rng::splitmix64(rng_state);
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    for day in 0..20 {
        let preds: Vec<Vec<f64>> = (0..3).map(|_| (0..10).map(|_| next()).collect()).collect();
        let tested: Vec<usize> = (0..10).collect();
        let results: Vec<bool> = (0..10).map(|_| next() < 0.3).collect();
        let g = vec![0.5; 10];
        l.update(day, &preds, &tested, &results, &g);
    }
    l.set_eligible(&[true, true, true]);
    let beta = l.ensemble_fit().ok_or("no ensemble")?;
    let best = l.discrete_select().ok_or("no winner")?;
    let (e, d) = (l.ensemble_risk(&beta), l.cumulative[best]);
    if e > d + 1e-12 {
        return Err(format!("ensemble risk {e} above discrete risk {d}"));
    }
    Ok(())
}

pub fn run_battery(seed: u64) -> Vec<Check> {
    vec![
        Check {
            name: "trajectory invariants (budget, conservation, incidence, targeting, value bounds)",
            outcome: trajectories_audit(seed),
        },
        Check {
            name: "IPW identification under sample allocation",
            outcome: identification(),
        },
        Check {
            name: "targeting solves the EIF equation",
            outcome: targeting_fixture(),
        },
        Check {
            name: "ensemble never worse than discrete winner",
            outcome: ensemble_dominance(),
        },
    ]
}
