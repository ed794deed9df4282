//! Targeting step and EIF-based inference for one design on one day.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

pub const EPS_BOUND: f64 = 10.0;
pub const SCORE_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 200;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct TmleFit {
    pub epsilon: f64,
    /// Targeted predictions for every agent.
    pub q_star: Vec<f64>,
    /// `g*/g` on tested rows, aligned with the rows passed to [`tmle_fluctuate`].
    pub weights: Vec<f64>,
    /// All positively weighted outcomes were identical; ε was clamped.
    pub degenerate: bool,
    /// Weighted score `Σ w (Y - Q̄*)` at the returned ε.
    pub score: f64,
    pub iterations: usize,
}

fn score_and_slope(eps: f64, offsets: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let mut s = 0.0;
    let mut d = 0.0;
    for ((&o, &yy), &ww) in offsets.iter().zip(y).zip(w) {
        if ww == 0.0 {
            continue;
        }
        let mu = math::expit(o + eps);
        s += ww * (yy - mu);
        d -= ww * mu * (1.0 - mu);
    }
    (s, d)
}

/// Solve `Σ_tested w_r (Y_r - expit(logit Q̄_r + ε)) = 0` for ε.
///
/// `q_init` covers every agent; `tested`, `results` and `weights` describe the
/// tested rows. Newton steps are kept inside a sign-change bracket and replaced
/// by bisection when they leave it.
pub fn tmle_fluctuate(q_init: &[f64], tested: &[usize], results: &[bool], weights: &[f64]) -> Result<TmleFit> {
    if tested.len() != results.len() || tested.len() != weights.len() {
        return Err(Error::Contract("tested rows, results and weights differ in length".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Contract("TMLE weights must be finite and non-negative".into()));
    }
    let offsets: Vec<f64> = tested.iter().map(|&i| math::logit(math::clip_prob(q_init[i]))).collect();
    let y: Vec<f64> = results.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
    let active: Vec<usize> = (0..weights.len()).filter(|&r| weights[r] > 0.0).collect();

    let finish = |eps: f64, degenerate: bool, iterations: usize| {
        let q_star: Vec<f64> = q_init
            .iter()
            .map(|&q| math::expit(math::logit(math::clip_prob(q)) + eps))
            .collect();
        let score = tested
            .iter()
            .zip(&y)
            .zip(weights)
            .map(|((&i, &yy), &w)| w * (yy - q_star[i]))
            .sum();
        TmleFit {
            epsilon: eps,
            q_star,
            weights: weights.to_vec(),
            degenerate,
            score,
            iterations,
        }
    };

    if active.is_empty() {
        return Ok(finish(0.0, false, 0));
    }
    let first = y[active[0]];
    if active.iter().all(|&r| y[r] == first) {
        let eps = if first > 0.5 { EPS_BOUND } else { -EPS_BOUND };
        return Ok(finish(eps, true, 0));
    }

    let (s0, _) = score_and_slope(0.0, &offsets, &y, weights);
    if s0.abs() < SCORE_TOL {
        return Ok(finish(0.0, false, 0));
    }
    // Score is strictly decreasing in ε; grow the bracket until it changes sign.
    let (mut lo, mut hi) = (-EPS_BOUND, EPS_BOUND);
    while score_and_slope(lo, &offsets, &y, weights).0 < 0.0 && lo > -1e3 {
        lo *= 2.0;
    }
    while score_and_slope(hi, &offsets, &y, weights).0 > 0.0 && hi < 1e3 {
        hi *= 2.0;
    }
    let mut eps = 0.0f64.clamp(lo, hi);
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let (s, d) = score_and_slope(eps, &offsets, &y, weights);
        if s.abs() < SCORE_TOL {
            break;
        }
        if s > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let newton = if d < 0.0 { eps - s / d } else { f64::NAN };
        eps = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + eps.abs()) {
            break;
        }
    }
    Ok(finish(eps, false, iterations))
}

/// `(1/n) Σ_i a_i Q̄*_i` for effective test probabilities `a`.
pub fn plugin_value(q: &[f64], a: &[f64]) -> f64 {
    let n = q.len() as f64;
    q.iter().zip(a).map(|(q, a)| q * a).sum::<f64>() / n
}

/// `(1/n) Σ_tested (w (Y - Q̄*))²`; untested rows contribute 0.
pub fn eif_variance(fit: &TmleFit, tested: &[usize], results: &[bool]) -> f64 {
    let n = fit.q_star.len() as f64;
    tested
        .iter()
        .zip(results)
        .zip(&fit.weights)
        .map(|((&i, &y), &w)| {
            let r = w * (if y { 1.0 } else { 0.0 } - fit.q_star[i]);
            r * r
        })
        .sum::<f64>()
        / n
}

/// `(1/n) Σ_tested w (Y - Q̄*)`, the empirical mean of the EIF.
pub fn eif_mean(fit: &TmleFit) -> f64 {
    fit.score / fit.q_star.len() as f64
}

/// Normal-approximation interval `ψ ± 1.96 σ / √n`.
pub fn confidence_interval(psi: f64, sigma: f64, n: usize) -> (f64, f64) {
    let half = Z95 * sigma / math::sqrt(n as f64);
    (psi - half, psi + half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn root_at_zero_when_already_solved() {
        // Weighted mean of Y equals Q̄ on the tested rows.
        let q = [0.5, 0.5, 0.3];
        let fit = tmle_fluctuate(&q, &[0, 1], &[true, false], &[1.0, 1.0]).unwrap();
        assert_eq!(fit.epsilon, 0.0);
        assert_eq!(fit.q_star[..2], q[..2]);
    }

    #[test]
    fn solves_estimating_equation() {
        let q = [0.1, 0.2, 0.7, 0.4, 0.05];
        let fit = tmle_fluctuate(&q, &[0, 2, 3], &[true, false, true], &[2.0, 0.5, 1.5]).unwrap();
        assert!(!fit.degenerate);
        assert!(fit.score.abs() < 1e-10);
    }

    #[test]
    fn identical_outcomes_are_degenerate() {
        let fit = tmle_fluctuate(&[0.2, 0.3], &[0, 1], &[false, false], &[1.0, 1.0]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.epsilon, -EPS_BOUND);
        let fit = tmle_fluctuate(&[0.2, 0.3], &[0, 1], &[true, true], &[1.0, 1.0]).unwrap();
        assert_eq!(fit.epsilon, EPS_BOUND);
    }

    #[test]
    fn zero_weights_leave_fit_untouched() {
        let fit = tmle_fluctuate(&[0.2, 0.3], &[0, 1], &[true, false], &[0.0, 0.0]).unwrap();
        assert_eq!(fit.epsilon, 0.0);
        assert!(!fit.degenerate);
    }

    #[test]
    fn plugin_and_variance_by_substitution() {
        assert_eq!(plugin_value(&[0.3; 4], &[0.0; 4]), 0.0);
        assert!((plugin_value(&[0.3; 4], &[0.5; 4]) - 2.0 * 0.3 / 4.0).abs() < 1e-15);
        let fit = TmleFit {
            epsilon: 0.0,
            q_star: vec![0.25, 0.5, 0.5, 0.5],
            weights: vec![2.0],
            degenerate: false,
            score: 0.0,
            iterations: 0,
        };
        assert!((eif_variance(&fit, &[0], &[true]) - (2.0f64 * 0.75).powi(2) / 4.0).abs() < 1e-15);
        let (lo, hi) = confidence_interval(0.1, 0.3, 100);
        assert!((lo - (0.1 - 1.96 * 0.03)).abs() < 1e-15 && (hi - (0.1 + 1.96 * 0.03)).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_weights() {
        assert!(tmle_fluctuate(&[0.2], &[0], &[true], &[-1.0]).is_err());
    }
}
