//! Candidate risk learners: row-weighted ridge logistic regressions on the
//! tested rows of a training buffer.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::Error;
use crate::features::{FeatureSet, SummaryFeatures, FULL_DIM};
use crate::math;

pub const RIDGE: f64 = 1e-4;
pub const RIDGE_MAX: f64 = 1e-1;
pub const MAX_ITER: usize = 100;
pub const TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    FullHistory,
    /// Rows with `lag <= w` get weight 1, older rows 0.
    Window(u32),
    /// Row weight `(1 - rate)^lag`.
    Exponential(f64),
}

impl Weighting {
    pub fn weight(self, lag: u32) -> f64 {
        match self {
            Weighting::FullHistory => 1.0,
            Weighting::Window(w) => {
                if lag <= w {
                    1.0
                } else {
                    0.0
                }
            }
            Weighting::Exponential(rate) => math::exp(f64::from(lag) * math::ln(1.0 - rate)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSpec {
    pub weighting: Weighting,
    pub features: FeatureSet,
}

impl LearnerSpec {
    pub fn name(&self) -> String {
        let w = match self.weighting {
            Weighting::FullHistory => String::from("full"),
            Weighting::Window(w) => format!("win{w}"),
            Weighting::Exponential(r) => format!("exp{r}"),
        };
        format!("{w}_{}", self.features.name())
    }

    /// Full history on both feature sets, windows {7,10,14} and exponential
    /// rates {0.01,0.05,0.1} on the network feature set.
    pub fn default_bank() -> Vec<LearnerSpec> {
        let mut bank = vec![
            LearnerSpec {
                weighting: Weighting::FullHistory,
                features: FeatureSet::Base,
            },
            LearnerSpec {
                weighting: Weighting::FullHistory,
                features: FeatureSet::BaseNetwork,
            },
        ];
        for w in [7, 10, 14] {
            bank.push(LearnerSpec {
                weighting: Weighting::Window(w),
                features: FeatureSet::BaseNetwork,
            });
        }
        for r in [0.01, 0.05, 0.1] {
            bank.push(LearnerSpec {
                weighting: Weighting::Exponential(r),
                features: FeatureSet::BaseNetwork,
            });
        }
        bank
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    /// `full:base`, `window:7:net`, `exp:0.05:net`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Config(format!("bad learner spec `{s}`"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let features = match *parts.last().ok_or_else(bad)? {
            "base" => FeatureSet::Base,
            "net" | "base+network" => FeatureSet::BaseNetwork,
            _ => return Err(bad()),
        };
        let weighting = match parts.as_slice() {
            ["full", _] => Weighting::FullHistory,
            ["window", w, _] => {
                let w: u32 = w.parse().map_err(|_| bad())?;
                if w == 0 {
                    return Err(bad());
                }
                Weighting::Window(w)
            }
            ["exp", r, _] => {
                let r: f64 = r.parse().map_err(|_| bad())?;
                if !(r > 0.0 && r < 1.0) {
                    return Err(bad());
                }
                Weighting::Exponential(r)
            }
            _ => return Err(bad()),
        };
        Ok(LearnerSpec { weighting, features })
    }
}

/// Tested rows: day, agent, features, raw result and the test probability.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingBuffer {
    pub day: Vec<u32>,
    pub agent: Vec<u32>,
    pub y: Vec<bool>,
    pub g: Vec<f64>,
    x: Vec<f64>,
}

impl TrainingBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.day.len()
    }

    pub fn is_empty(&self) -> bool {
        self.day.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * FULL_DIM..(r + 1) * FULL_DIM]
    }

    pub fn push(&mut self, day: u32, agent: usize, x: &[f64], y: bool, g: f64) {
        assert_eq!(x.len(), FULL_DIM, "feature row has wrong dimension");
        self.day.push(day);
        self.agent.push(agent as u32);
        self.y.push(y);
        self.g.push(g);
        self.x.extend_from_slice(x);
    }

    /// Append the tested rows of one day.
    pub fn push_round(&mut self, features: &SummaryFeatures, tested: &[usize], results: &[bool], g: &[f64]) {
        for (&i, &y) in tested.iter().zip(results) {
            self.push(features.day, i, features.row(i), y, g[i]);
        }
    }

    /// Smoothed pooled positivity `(positives + 0.5) / (rows + 1)`.
    pub fn pooled_rate(&self) -> f64 {
        let pos = self.y.iter().filter(|&&y| y).count() as f64;
        (pos + 0.5) / (self.len() as f64 + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLearner {
    pub spec: LearnerSpec,
    /// Intercept followed by one slope per feature.
    pub coef: Vec<f64>,
    pub fitted: bool,
    /// Last day whose rows entered the fit.
    pub fit_through: Option<u32>,
    pub ridge: f64,
}

struct Eval {
    obj: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl CandidateLearner {
    pub fn new(spec: LearnerSpec) -> Self {
        CandidateLearner {
            spec,
            coef: vec![0.0; spec.features.dim() + 1],
            fitted: false,
            fit_through: None,
            ridge: RIDGE,
        }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coef[0] + self.coef[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        math::clip_prob(math::expit(self.linear_predictor(x)))
    }

    pub fn predict(&self, f: &SummaryFeatures) -> Vec<f64> {
        (0..f.n).map(|i| self.predict_row(f.row(i))).collect()
    }

    /// Refit on all rows up to and including day `now`, warm-starting from
    /// the current coefficients. Returns whether the learner is fitted.
    pub fn fit(&mut self, buf: &TrainingBuffer, now: u32) -> bool {
        let p = self.spec.features.dim() + 1;
        let rows: Vec<(usize, f64)> = (0..buf.len())
            .filter(|&r| buf.day[r] <= now)
            .map(|r| (r, self.spec.weighting.weight(now - buf.day[r])))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let has_pos = rows.iter().any(|&(r, _)| buf.y[r]);
        let has_neg = rows.iter().any(|&(r, _)| !buf.y[r]);
        if !(has_pos && has_neg) {
            self.fitted = false;
            self.fit_through = Some(now);
            return false;
        }
        let start = if self.fitted { self.coef.clone() } else { vec![0.0; p] };
        let mut ridge = RIDGE;
        let mut warm = Some(start);
        loop {
            let init = warm.take().unwrap_or_else(|| vec![0.0; p]);
            if let Some(beta) = irls(buf, &rows, p, ridge, init) {
                self.coef = beta;
                self.ridge = ridge;
                self.fitted = true;
                self.fit_through = Some(now);
                return true;
            }
            if ridge >= RIDGE_MAX * (1.0 - 1e-12) {
                break;
            }
            ridge = (ridge * 10.0).min(RIDGE_MAX);
        }
        self.fitted = false;
        self.fit_through = Some(now);
        false
    }
}

fn evaluate(buf: &TrainingBuffer, rows: &[(usize, f64)], p: usize, ridge: f64, beta: &[f64]) -> Eval {
    let mut obj = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut z = vec![0.0; p];
    z[0] = 1.0;
    for &(r, w) in rows {
        z[1..].copy_from_slice(&buf.row(r)[..p - 1]);
        let eta: f64 = beta.iter().zip(&z).map(|(b, v)| b * v).sum();
        let mu = math::expit(eta);
        let y = if buf.y[r] { 1.0 } else { 0.0 };
        // log(1 + e^eta) computed stably.
        let softplus = if eta > 0.0 {
            eta + math::ln(1.0 + math::exp(-eta))
        } else {
            math::ln(1.0 + math::exp(eta))
        };
        obj += w * (y * eta - softplus);
        let resid = w * (y - mu);
        let h = w * mu * (1.0 - mu);
        for a in 0..p {
            grad[a] += resid * z[a];
            let ha = h * z[a];
            if ha != 0.0 {
                for b in 0..=a {
                    hess[a * p + b] += ha * z[b];
                }
            }
        }
    }
    for a in 1..p {
        obj -= 0.5 * ridge * beta[a] * beta[a];
        grad[a] -= ridge * beta[a];
        hess[a * p + a] += ridge;
    }
    // Tiny jitter on the intercept keeps the system positive definite.
    hess[0] += 1e-12;
    for a in 0..p {
        for b in 0..a {
            hess[b * p + a] = hess[a * p + b];
        }
    }
    Eval { obj, grad, hess }
}

/// Penalised Newton–Raphson with step halving. `None` when not converged.
fn irls(buf: &TrainingBuffer, rows: &[(usize, f64)], p: usize, ridge: f64, mut beta: Vec<f64>) -> Option<Vec<f64>> {
    let mut cur = evaluate(buf, rows, p, ridge, &beta);
    for _ in 0..MAX_ITER {
        let delta = cholesky_solve(&cur.hess, &cur.grad, p)?;
        let mut step = 1.0;
        let (cand, next) = loop {
            let cand: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let next = evaluate(buf, rows, p, ridge, &cand);
            if (next.obj.is_finite() && next.obj >= cur.obj - 1e-10 * (1.0 + cur.obj.abs())) || step < 1e-10 {
                break (cand, next);
            }
            step *= 0.5;
        };
        let change = delta.iter().fold(0.0f64, |m, d| m.max((step * d).abs()));
        if !change.is_finite() || cand.iter().any(|b| !b.is_finite()) {
            return None;
        }
        beta = cand;
        cur = next;
        if change < TOL {
            return Some(beta);
        }
    }
    None
}

/// Solve `H x = g` for symmetric positive definite `H` (row-major `p × p`).
pub fn cholesky_solve(h: &[f64], g: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = h[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * p + i] = math::sqrt(s);
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = g[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FULL_DIM;

    fn row(v: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; FULL_DIM];
        x[..v.len()].copy_from_slice(v);
        x
    }

    #[test]
    fn weights_follow_scheme() {
        assert_eq!(Weighting::Window(7).weight(7), 1.0);
        assert_eq!(Weighting::Window(7).weight(8), 0.0);
        assert!((Weighting::Exponential(0.1).weight(2) - 0.81).abs() < 1e-15);
        assert_eq!(Weighting::FullHistory.weight(1000), 1.0);
    }

    #[test]
    fn parse_specs() {
        let s: LearnerSpec = "window:10:net".parse().unwrap();
        assert_eq!(s.weighting, Weighting::Window(10));
        assert_eq!(s.name(), "win10_net");
        assert!("exp:1.5:net".parse::<LearnerSpec>().is_err());
        assert!("full:other".parse::<LearnerSpec>().is_err());
        assert_eq!(LearnerSpec::default_bank().len(), 8);
    }

    #[test]
    fn zero_coefficients_predict_half() {
        let l = CandidateLearner::new(LearnerSpec {
            weighting: Weighting::FullHistory,
            features: FeatureSet::Base,
        });
        assert_eq!(l.predict_row(&row(&[1.0, 2.0, 3.0])), 0.5);
    }

    #[test]
    fn hand_computed_prediction() {
        let mut l = CandidateLearner::new(LearnerSpec {
            weighting: Weighting::FullHistory,
            features: FeatureSet::Base,
        });
        l.coef[..4].copy_from_slice(&[-1.0, 0.5, -0.25, 2.0]);
        let eta: f64 = -1.0 + 0.5 * 1.0 - 0.25 * 2.0 + 2.0 * 0.3;
        let want = 1.0 / (1.0 + (-eta).exp());
        assert!((l.predict_row(&row(&[1.0, 2.0, 0.3])) - want).abs() < 1e-15);
    }

    #[test]
    fn null_model_recovers_positive_fraction() {
        // Over whole 28-row cycles every (x, y) pair is equally frequent.
        let mut buf = TrainingBuffer::new();
        for r in 0..420 {
            let x = (r % 7) as f64 / 7.0;
            buf.push(0, r, &row(&[x]), r % 4 == 0, 1.0);
        }
        let mut l = CandidateLearner::new(LearnerSpec {
            weighting: Weighting::FullHistory,
            features: FeatureSet::Base,
        });
        assert!(l.fit(&buf, 0));
        assert!(l.coef[1].abs() < 1e-3);
        assert!((l.coef[0] - math::logit(0.25)).abs() < 1e-3);
    }

    #[test]
    fn unfittable_without_both_outcomes() {
        let mut buf = TrainingBuffer::new();
        buf.push(0, 0, &row(&[1.0]), true, 1.0);
        let mut l = CandidateLearner::new(LearnerSpec {
            weighting: Weighting::FullHistory,
            features: FeatureSet::Base,
        });
        assert!(!l.fit(&buf, 0));
    }

    #[test]
    fn cholesky_matches_known_solution() {
        let h = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&h, &[2.0, 1.0], 2).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(cholesky_solve(&[0.0, 0.0, 0.0, 0.0], &[1.0, 1.0], 2).is_none());
    }
}
