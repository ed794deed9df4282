//! Independent oracles: exhaustive enumeration, brute-force grids, analytic
//! moments and simulation-level coverage.

use adaptsurv_core::designs::{
    allocate_rank, allocate_sample, exact_successive_inclusion, rank_inclusion, sample_inclusion, TestRound,
};
use adaptsurv_core::epidemic::{DiseaseCourse, ASYMPTOMATIC_GAMMA, DETECTABLE_GAMMA, LATENT_GAMMA, SYMPTOMATIC_GAMMA};
use adaptsurv_core::features::Observations;
use adaptsurv_core::math::{expit, logit};
use adaptsurv_core::online_cv::OnlineCvLedger;
use adaptsurv_core::population::{sample_random_layer, truncated_neg_binomial, PopulationConfig};
use adaptsurv_core::rng::{day_stream, stream, Purpose};
use adaptsurv_core::surveillance::build_world;
use adaptsurv_core::tmle::{confidence_interval, eif_variance, plugin_value, tmle_fluctuate};
use rand::Rng;

/// Every ordered draw sequence of successive sampling, with its probability.
fn successive_sets(w: &[f64], k: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(w: &[f64], k: usize, chosen: &mut Vec<usize>, p: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if chosen.len() == k {
            out.push((chosen.clone(), p));
            return;
        }
        let rest: f64 = (0..w.len()).filter(|i| !chosen.contains(i)).map(|i| w[i]).sum();
        for i in 0..w.len() {
            if chosen.contains(&i) || w[i] == 0.0 {
                continue;
            }
            chosen.push(i);
            rec(w, k, chosen, p * w[i] / rest, out);
            chosen.pop();
        }
    }
    let mut out = Vec::new();
    rec(w, k, &mut Vec::new(), 1.0, &mut out);
    out
}

#[test]
fn ipw_is_unbiased_by_enumeration() {
    // For n <= 6 the expectation over every allocation is computed exactly.
    let fixtures: [(&[f64], &[bool], usize); 3] = [
        (&[0.9, 0.5, 0.3, 0.2, 0.1], &[true, false, true, true, false], 2),
        (&[1.0, 1.0, 2.0, 0.5, 3.0, 0.25], &[false, true, true, false, true, true], 3),
        (&[0.2, 0.7, 0.1, 0.4], &[true, true, false, true], 1),
    ];
    for (g, y, k) in fixtures {
        let n = g.len() as f64;
        let pi = sample_inclusion(g, k);
        let mut expect = 0.0;
        for (set, p) in successive_sets(g, k) {
            expect += p * set.iter().filter(|&&i| y[i]).map(|&i| 1.0 / pi[i]).sum::<f64>() / n;
        }
        let truth = y.iter().filter(|&&v| v).count() as f64 / n;
        assert!((expect - truth).abs() < 1e-12, "{expect} vs {truth}");
    }
}

#[test]
fn exact_inclusion_matches_enumeration() {
    let w = [0.3, 1.2, 0.7, 2.0, 0.1, 0.9];
    for k in 1..=5 {
        let mut pi = [0.0; 6];
        for (set, p) in successive_sets(&w, k) {
            for i in set {
                pi[i] += p;
            }
        }
        let dp = exact_successive_inclusion(&w, k);
        for i in 0..6 {
            assert!((pi[i] - dp[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn rank_plugin_matches_enumerated_allocation() {
    // Unequal values, k = 2: the top two scores are tested with certainty.
    let q = [0.4, 0.1, 0.3, 0.2];
    let g = [0.9, 0.2, 0.6, 0.5];
    let a = rank_inclusion(&g, 2);
    assert_eq!(a, vec![1.0, 0.0, 1.0, 0.0]);
    assert!((plugin_value(&q, &a) - (0.4 + 0.3) / 4.0).abs() < 1e-15);
    // A tie at the cut splits the remaining test evenly; check against the
    // empirical allocation frequency of the shuffled rank rule.
    let g = [0.9, 0.5, 0.5, 0.1];
    let a = rank_inclusion(&g, 2);
    assert_eq!(a, vec![1.0, 0.5, 0.5, 0.0]);
    let mut rng = stream(5, Purpose::Testing);
    let mut hits = [0usize; 4];
    for _ in 0..20_000 {
        for i in allocate_rank(&g, 2, &mut rng) {
            hits[i] += 1;
        }
    }
    assert!((hits[1] as f64 / 20_000.0 - 0.5).abs() < 0.02);
}

fn score(eps: f64, q: &[f64], y: &[bool], w: &[f64]) -> f64 {
    q.iter()
        .zip(y)
        .zip(w)
        .map(|((&q, &y), &w)| w * (f64::from(u8::from(y)) - expit(logit(q) + eps)))
        .sum()
}

/// Grid point in [-10, 10] at 1e-6 spacing with the smallest |score|.
fn grid_root(q: &[f64], y: &[bool], w: &[f64]) -> f64 {
    let steps = 20_000_000i64;
    let mut best = (f64::INFINITY, 0.0);
    for s in 0..=steps {
        let eps = -10.0 + s as f64 * 1e-6;
        let v = score(eps, q, y, w).abs();
        if v < best.0 {
            best = (v, eps);
        }
    }
    best.1
}

#[test]
fn fluctuation_matches_grid_search_on_hand_fixture() {
    let q = [0.2, 0.6, 0.35];
    let y = [true, false, true];
    let g = [0.5, 0.25, 0.8];
    let g_star = [1.0, 0.5, 0.2];
    let w: Vec<f64> = g_star.iter().zip(&g).map(|(a, b)| a / b).collect();
    let fit = tmle_fluctuate(&q, &[0, 1, 2], &y, &w).unwrap();
    let grid = grid_root(&q, &y, &w);
    assert!((fit.epsilon - grid).abs() < 1e-4, "{} vs {grid}", fit.epsilon);
}

#[test]
fn gamma_durations_match_parameter_table() {
    // Published means per stage and analytic variances shape / rate².
    let draws = 100_000;
    let mut rng = stream(11, Purpose::Epidemic);
    let mut e = Vec::with_capacity(draws);
    let mut it = Vec::with_capacity(draws);
    let mut is = Vec::with_capacity(draws);
    let mut ia = Vec::with_capacity(draws);
    for _ in 0..draws {
        let c = DiseaseCourse::draw(&mut rng, true);
        e.push(c.dur_e);
        it.push(c.dur_it);
        is.push(c.dur_i);
        ia.push(DiseaseCourse::draw(&mut rng, false).dur_i);
    }
    for (xs, mean, (shape, rate)) in [
        (&e, 4.5, LATENT_GAMMA),
        (&it, 1.0, DETECTABLE_GAMMA),
        (&ia, 7.5, ASYMPTOMATIC_GAMMA),
        (&is, 13.0, SYMPTOMATIC_GAMMA),
    ] {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        let sd = (shape / (rate * rate)).sqrt();
        assert!((m - mean).abs() < 3.0 * sd / n.sqrt(), "mean {m} vs {mean}");
        let v = shape / (rate * rate);
        let var_se = v * ((2.0 + 6.0 / shape) / n).sqrt();
        assert!((var - v).abs() < 3.0 * var_se, "variance {var} vs {v}");
    }
    // Quartiles. The detectable stage is gamma(1, 1), an exponential, so its
    // quartiles are ln(4/3) and ln 4.
    let quartiles = |xs: &mut Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        (xs[xs.len() / 4], xs[3 * xs.len() / 4])
    };
    for (xs, q1, q3, tol) in [
        (&mut e, 3.4, 5.4, 0.1),
        (&mut ia, 5.5, 9.1, 0.15),
        (&mut is, 10.4, 15.2, 0.15),
        (&mut it, (4.0f64 / 3.0).ln(), 4.0f64.ln(), 0.02),
    ] {
        let (a, b) = quartiles(xs);
        assert!((a - q1).abs() < tol && (b - q3).abs() < tol, "quartiles ({a}, {b}) vs ({q1}, {q3})");
    }
}

#[test]
fn truncated_neg_binomial_mean_matches_series() {
    // Size-one negative binomial is geometric with p = 1 / (1 + mean).
    for (mean, lo, hi) in [(8.0, 3u32, 25u32), (2.0, 1, 8), (20.0, 15, 25)] {
        let p: f64 = 1.0 / (1.0 + mean);
        let (mut num, mut den) = (0.0, 0.0);
        for x in lo..=hi {
            let px = p * (1.0 - p).powi(x as i32);
            num += x as f64 * px;
            den += px;
        }
        let exact = num / den;
        let mut rng = stream(3, Purpose::Network);
        let draws = 100_000;
        let xs: Vec<f64> = (0..draws).map(|_| truncated_neg_binomial(&mut rng, mean, lo, hi) as f64).collect();
        let m = xs.iter().sum::<f64>() / draws as f64;
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws as f64 - 1.0)).sqrt();
        assert!((m - exact).abs() < 4.0 * sd / (draws as f64).sqrt(), "{m} vs {exact}");
        assert!(xs.iter().all(|&x| x >= lo as f64 && x <= hi as f64));
    }
}

#[test]
fn planted_candidate_wins_after_burn_in() {
    let n = 200;
    let k = 6;
    let mut rng = stream(17, Purpose::Selector);
    let mut ledger = OnlineCvLedger::new(k);
    ledger.set_eligible(&vec![true; k]);
    let mut wins_after_30 = 0;
    let days = 120;
    for day in 0..days {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let truth: Vec<f64> = x.iter().map(|&v| expit(-1.5 + 1.2 * v)).collect();
        let mut preds = vec![truth.clone()];
        preds.push(vec![0.25; n]);
        preds.push(x.iter().map(|&v| expit(-1.5 - 1.2 * v)).collect());
        preds.push(truth.iter().map(|&p| (p + 0.15).min(1.0)).collect());
        preds.push(truth.iter().map(|&p| (p * 0.5).max(0.0)).collect());
        preds.push((0..n).map(|_| rng.random::<f64>()).collect());
        let g: Vec<f64> = x.iter().map(|&v| 0.1 + 0.2 * expit(v)).collect();
        let mut tested = Vec::new();
        let mut results = Vec::new();
        for i in 0..n {
            if rng.random::<f64>() < g[i] {
                tested.push(i);
                results.push(rng.random::<f64>() < truth[i]);
            }
        }
        ledger.update(day, &preds, &tested, &results, &g);
        if day >= 30 && ledger.discrete_select() == Some(0) {
            wins_after_30 += 1;
        }
    }
    let share = wins_after_30 as f64 / (days - 30) as f64;
    assert!(share >= 0.95, "planted candidate won {share} of days");
}

#[test]
fn ensemble_fixture_beats_both_vertices() {
    let mut l = OnlineCvLedger::new(3);
    l.update(
        0,
        &[vec![0.9, 0.1, 0.5], vec![0.5, 0.5, 0.1], vec![0.0, 0.0, 0.0]],
        &[0, 1, 2],
        &[true, false, false],
        &[0.5, 0.5, 0.5],
    );
    l.set_eligible(&[true, true, false]);
    let beta = l.ensemble_fit().unwrap();
    assert_eq!(beta[2], 0.0);
    let best = l.cumulative[..2].iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(l.ensemble_risk(&beta) <= best + 1e-12);
    // Risk of a convex combination, recomputed by hand from its predictions.
    let p: Vec<f64> = (0..3).map(|i| beta[0] * [0.9, 0.1, 0.5][i] + beta[1] * [0.5, 0.5, 0.1][i]).collect();
    let direct = 2.0 * ((1.0 - p[0]).powi(2) + p[1].powi(2) + p[2].powi(2));
    assert!((l.ensemble_risk(&beta) - direct).abs() < 1e-12);
}

#[test]
fn contact_tracing_follows_known_network() {
    let cfg = PopulationConfig {
        n: 400,
        ..PopulationConfig::default()
    };
    let (agents, mut layers) = build_world(&cfg, 9).unwrap();
    let prev = sample_random_layer(&agents, &cfg, 0.5, 0, &mut day_stream(9, Purpose::Contacts, 0));
    layers.random = sample_random_layer(&agents, &cfg, 0.5, 1, &mut day_stream(9, Purpose::Contacts, 1));
    let n = agents.len();
    // Agent 0 and agent 7 tested; only agent 0 is positive.
    let mut latent = vec![false; n];
    latent[0] = true;
    let round = TestRound::new(1, vec![0, 7], &latent, vec![0.5; n]).unwrap();
    let mut obs = Observations::new(n);
    obs.record_round(&round, &layers, &prev);
    let traced = obs.traced(2);

    let mut oracle_layers = layers.clone();
    oracle_layers.random = prev;
    let nb = oracle_layers.neighbors_of(0).unwrap();
    let mut expected = vec![false; n];
    for c in nb.household.iter().chain(&nb.class).chain(&nb.random) {
        expected[c.agent as usize] = true;
    }
    expected[0] = false;
    assert_eq!(traced, expected);
    assert!(!obs.available()[0]);
    assert!(obs.traced(3).iter().all(|&v| !v), "tracing looks back one day only");
}

#[test]
fn confidence_intervals_cover_true_detection_rate() {
    // Truth: ψ = (1/n) Σ a_i q0_i for a fixed target design a, estimated from
    // tests allocated by a different (uniform) design with a misspecified
    // constant initial fit.
    let n = 400;
    let k = 80;
    let mut rng = stream(31, Purpose::Testing);
    let q0: Vec<f64> = (0..n).map(|i| 0.05 + 0.45 * (i % 10) as f64 / 9.0).collect();
    let target_scores: Vec<f64> = (0..n).map(|i| 1.0 + (i % 10) as f64).collect();
    let a = sample_inclusion(&target_scores, k);
    let psi0 = plugin_value(&q0, &a);
    let g_used = vec![k as f64 / n as f64; n];
    let q_init = vec![0.2; n];
    let reps = 500;
    let mut covered = 0;
    for _ in 0..reps {
        let latent: Vec<bool> = q0.iter().map(|&p| rng.random::<f64>() < p).collect();
        let tested = allocate_sample(&vec![1.0; n], k, &mut rng).unwrap();
        let results: Vec<bool> = tested.iter().map(|&i| latent[i]).collect();
        let w: Vec<f64> = tested.iter().map(|&i| a[i] / g_used[i]).collect();
        let fit = tmle_fluctuate(&q_init, &tested, &results, &w).unwrap();
        let psi = plugin_value(&fit.q_star, &a);
        let sigma = eif_variance(&fit, &tested, &results).sqrt();
        let (lo, hi) = confidence_interval(psi, sigma, n);
        if lo <= psi0 && psi0 <= hi {
            covered += 1;
        }
    }
    let share = covered as f64 / reps as f64;
    assert!(share >= 0.90, "coverage {share}");
}
