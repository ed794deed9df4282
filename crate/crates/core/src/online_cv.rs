//! Prequential (online) cross-validation over the candidate bank.
//!
//! Every day's tested rows are scored by models fitted on data through the
//! previous day, with the inverse-probability weighted squared error
//! `(1/g)(Y^l - p)^2`. The ledger keeps cumulative risks for the discrete
//! super learner and the weighted Gram statistics needed to fit convex
//! ensemble weights.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineCvLedger {
    k: usize,
    /// Cumulative online CV risk per candidate.
    pub cumulative: Vec<f64>,
    /// Per-day held-out loss per candidate.
    pub daily: Vec<(u32, Vec<f64>)>,
    /// Candidates currently eligible for selection (fitted).
    pub eligible: Vec<bool>,
    gram: Vec<f64>,
    cross: Vec<f64>,
    yy: f64,
}

impl OnlineCvLedger {
    pub fn new(k: usize) -> Self {
        OnlineCvLedger {
            k,
            cumulative: vec![0.0; k],
            daily: Vec::new(),
            eligible: vec![false; k],
            gram: vec![0.0; k * k],
            cross: vec![0.0; k],
            yy: 0.0,
        }
    }

    pub fn candidates(&self) -> usize {
        self.k
    }

    /// Score one day. `predictions[c][i]` is candidate `c`'s honest prediction
    /// for agent `i`; only tested agents are read.
    pub fn update(&mut self, day: u32, predictions: &[Vec<f64>], tested: &[usize], results: &[bool], g: &[f64]) {
        assert_eq!(predictions.len(), self.k, "one prediction vector per candidate");
        let mut losses = vec![0.0; self.k];
        for (&i, &y) in tested.iter().zip(results) {
            let w = 1.0 / g[i];
            let y = if y { 1.0 } else { 0.0 };
            self.yy += w * y * y;
            for a in 0..self.k {
                let pa = predictions[a][i];
                let r = y - pa;
                losses[a] += w * r * r;
                self.cross[a] += w * y * pa;
                for b in 0..=a {
                    self.gram[a * self.k + b] += w * pa * predictions[b][i];
                }
            }
        }
        for a in 0..self.k {
            for b in 0..a {
                self.gram[b * self.k + a] = self.gram[a * self.k + b];
            }
            self.cumulative[a] += losses[a];
        }
        self.daily.push((day, losses));
    }

    pub fn set_eligible(&mut self, fitted: &[bool]) {
        self.eligible.copy_from_slice(fitted);
    }

    /// Argmin of cumulative risk among eligible candidates; ties to the lowest id.
    pub fn discrete_select(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for c in 0..self.k {
            if !self.eligible[c] {
                continue;
            }
            match best {
                Some(b) if self.cumulative[c] >= self.cumulative[b] => {}
                _ => best = Some(c),
            }
        }
        best
    }

    /// Online CV risk of the combination `Σ β_c p_c`.
    pub fn ensemble_risk(&self, beta: &[f64]) -> f64 {
        let k = self.k;
        let mut quad = 0.0;
        for a in 0..k {
            if beta[a] == 0.0 {
                continue;
            }
            let row: f64 = (0..k).map(|b| self.gram[a * k + b] * beta[b]).sum();
            quad += beta[a] * row;
        }
        let lin: f64 = self.cross.iter().zip(beta).map(|(c, b)| c * b).sum();
        quad - 2.0 * lin + self.yy
    }

    pub fn vertex(&self, c: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        v[c] = 1.0;
        v
    }

    /// Convex weights over eligible candidates minimising the online CV risk.
    ///
    /// Projected gradient descent with step halving, started at the best
    /// vertex and accepting only non-increasing steps, so the result is never
    /// worse than any single eligible candidate.
    pub fn ensemble_fit(&self) -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..self.k).filter(|&c| self.eligible[c]).collect();
        if idx.is_empty() {
            return None;
        }
        let start = *idx
            .iter()
            .min_by(|&&a, &&b| {
                self.ensemble_risk(&self.vertex(a))
                    .total_cmp(&self.ensemble_risk(&self.vertex(b)))
                    .then(a.cmp(&b))
            })
            .unwrap();
        let mut beta = self.vertex(start);
        if idx.len() == 1 {
            return Some(beta);
        }
        let k = self.k;
        let scale = idx
            .iter()
            .map(|&a| idx.iter().map(|&b| self.gram[a * k + b].abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        if !(scale > 0.0) {
            return Some(beta);
        }
        let mut step = 1.0 / (2.0 * scale);
        let mut risk = self.ensemble_risk(&beta);
        for _ in 0..500 {
            let grad: Vec<f64> = idx
                .iter()
                .map(|&a| 2.0 * (idx.iter().map(|&b| self.gram[a * k + b] * beta[b]).sum::<f64>() - self.cross[a]))
                .collect();
            let mut accepted = false;
            for _ in 0..60 {
                let raw: Vec<f64> = idx.iter().zip(&grad).map(|(&a, g)| beta[a] - step * g).collect();
                let proj = project_simplex(&raw);
                let mut cand = vec![0.0; k];
                for (&a, v) in idx.iter().zip(proj) {
                    cand[a] = v;
                }
                let r = self.ensemble_risk(&cand);
                if r <= risk {
                    let moved = cand.iter().zip(&beta).any(|(x, y)| x != y);
                    beta = cand;
                    risk = r;
                    accepted = moved;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Some(beta)
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        css += x;
        let t = (css - 1.0) / (j as f64 + 1.0);
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        for x in &mut out {
            *x /= s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_half_one_positive() {
        let mut l = OnlineCvLedger::new(1);
        l.update(1, &[vec![0.5, 0.5]], &[0], &[true], &[0.5, 0.5]);
        assert!((l.cumulative[0] - 0.5).abs() < 1e-15);
        assert!((l.ensemble_risk(&[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictor_adds_zero() {
        let mut l = OnlineCvLedger::new(2);
        l.update(1, &[vec![1.0, 0.0], vec![0.3, 0.3]], &[0, 1], &[true, false], &[0.2, 0.2]);
        assert_eq!(l.cumulative[0], 0.0);
        l.set_eligible(&[true, true]);
        assert_eq!(l.discrete_select(), Some(0));
    }

    #[test]
    fn empty_day_adds_nothing() {
        let mut l = OnlineCvLedger::new(2);
        l.update(3, &[vec![0.1], vec![0.2]], &[], &[], &[1.0]);
        assert_eq!(l.cumulative, vec![0.0, 0.0]);
        assert_eq!(l.discrete_select(), None);
    }

    #[test]
    fn ties_go_to_lowest_eligible() {
        let mut l = OnlineCvLedger::new(3);
        l.set_eligible(&[false, true, true]);
        assert_eq!(l.discrete_select(), Some(1));
    }

    #[test]
    fn projection_stays_on_simplex() {
        for v in [vec![0.2, 0.3, 0.5], vec![3.0, -1.0, 0.0], vec![-5.0, -5.0], vec![0.9, 0.9]] {
            let p = project_simplex(&v);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        assert_eq!(project_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
    }

    #[test]
    fn complementary_errors_split_evenly() {
        let mut l = OnlineCvLedger::new(2);
        // Each candidate misses by 0.4 on the row where the other is exact.
        l.update(1, &[vec![1.0, 0.6], vec![0.6, 1.0]], &[0, 1], &[true, true], &[1.0, 1.0]);
        l.set_eligible(&[true, true]);
        let beta = l.ensemble_fit().unwrap();
        assert!((beta[0] - 0.5).abs() < 1e-6 && (beta[1] - 0.5).abs() < 1e-6);
        let r = l.ensemble_risk(&beta);
        assert!((r - 0.08).abs() < 1e-9);
        assert!(r < l.cumulative[0] && r < l.cumulative[1]);
    }
}
