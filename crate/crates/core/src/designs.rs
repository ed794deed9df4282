//! Testing strategies as stochastic interventions.
//!
//! A design first maps the observed past to a per-agent score `g*(1 | past)`;
//! an allocation function then turns scores into a test assignment under the
//! daily budget. Rank allocation tests the top-k scores, sample allocation
//! draws k agents without replacement with weights proportional to the
//! score. The inclusion probabilities of the resulting assignment are the
//! design's effective treatment mechanism and are what the IPW loss, the TMLE
//! weights and the plug-in value consume.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AllocationMode {
    Rank,
    Sample,
}

impl AllocationMode {
    pub fn name(self) -> &'static str {
        match self {
            AllocationMode::Rank => "rank",
            AllocationMode::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DesignKind {
    NoTesting,
    Random,
    Symptomatic,
    ContactTracing,
    SymptomaticContact,
    RiskBased { learner: usize, mode: AllocationMode },
    Perfect,
}

impl DesignKind {
    /// Rule-based and benchmark designs allocate by rank with uniform tie-breaking,
    /// which tests eligible agents first and spreads surplus tests uniformly.
    pub fn mode(self) -> AllocationMode {
        match self {
            DesignKind::RiskBased { mode, .. } => mode,
            _ => AllocationMode::Rank,
        }
    }

    pub fn needs_learner(self) -> Option<usize> {
        match self {
            DesignKind::RiskBased { learner, .. } => Some(learner),
            _ => None,
        }
    }

    /// Stable identifier; risk-based designs embed the learner's name.
    pub fn label(self, learner_names: &[String]) -> String {
        match self {
            DesignKind::NoTesting => "no_testing".into(),
            DesignKind::Random => "random".into(),
            DesignKind::Symptomatic => "symptomatic".into(),
            DesignKind::ContactTracing => "contact_tracing".into(),
            DesignKind::SymptomaticContact => "symptomatic_contact".into(),
            DesignKind::Perfect => "perfect".into(),
            DesignKind::RiskBased { learner, mode } => {
                let name = learner_names
                    .get(learner)
                    .cloned()
                    .unwrap_or_else(|| format!("learner{learner}"));
                format!("risk_{name}_{}", mode.name())
            }
        }
    }
}

/// Observables a design may read on day t (plus the latent status, which only
/// the perfect benchmark uses).
#[derive(Debug, Clone, Copy)]
pub struct DesignContext<'a> {
    /// Currently showing symptoms (compartment Is).
    pub symptomatic: &'a [bool],
    /// In the known network of an agent who tested positive yesterday.
    pub traced: &'a [bool],
    pub latent: &'a [bool],
    /// Risk predictions of the learners, indexed by learner; `None` when not fitted.
    pub risk: &'a [Option<Vec<f64>>],
}

/// Scores `g*(1 | past)` of a design. Returns the scores and whether a
/// risk-based design had to fall back to uniform scores.
pub fn design_probabilities(kind: DesignKind, ctx: &DesignContext<'_>) -> (Vec<f64>, bool) {
    let n = ctx.symptomatic.len();
    let indicator = |v: &[bool]| v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    match kind {
        DesignKind::NoTesting => (vec![0.0; n], false),
        DesignKind::Random => (vec![1.0 / n as f64; n], false),
        DesignKind::Symptomatic => (indicator(ctx.symptomatic), false),
        DesignKind::ContactTracing => (indicator(ctx.traced), false),
        DesignKind::SymptomaticContact => (
            ctx.symptomatic
                .iter()
                .zip(ctx.traced)
                .map(|(&s, &c)| if s || c { 1.0 } else { 0.0 })
                .collect(),
            false,
        ),
        DesignKind::Perfect => (indicator(ctx.latent), false),
        DesignKind::RiskBased { learner, .. } => match ctx.risk.get(learner).and_then(|r| r.as_ref()) {
            Some(r) => (r.clone(), false),
            None => (vec![1.0 / n as f64; n], true),
        },
    }
}

/// Indices of the `k` largest scores; ties broken by a uniform shuffle.
pub fn allocate_rank<R: Rng + ?Sized>(g: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let k = k.min(g.len());
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| g[b].total_cmp(&g[a]));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Draw `k` indices without replacement, each successive draw proportional to
/// the weights of the agents not yet drawn. Zero-weight agents are never drawn.
pub fn allocate_sample<R: Rng + ?Sized>(g: &[f64], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    if g.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Contract("sample allocation needs finite non-negative weights".into()));
    }
    let positive = g.iter().filter(|&&w| w > 0.0).count();
    if positive == 0 {
        return Err(Error::Contract("sample allocation with all-zero weights".into()));
    }
    // Exponential-key form of successive sampling: the k smallest E_i / w_i.
    let mut keys: Vec<(f64, usize)> = g
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| {
            let u: f64 = rng.random();
            (-math::ln(1.0 - u) / w, i)
        })
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut chosen: Vec<usize> = keys.iter().take(k).map(|&(_, i)| i).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Exact inclusion probabilities of [`allocate_rank`].
pub fn rank_inclusion(g: &[f64], k: usize) -> Vec<f64> {
    let n = g.len();
    let k = k.min(n);
    if k == 0 {
        return vec![0.0; n];
    }
    if k == n {
        return vec![1.0; n];
    }
    let mut sorted = g.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cut = sorted[k - 1];
    let above = g.iter().filter(|&&x| x > cut).count();
    let tied = g.iter().filter(|&&x| x == cut).count();
    let share = (k - above) as f64 / tied as f64;
    g.iter()
        .map(|&x| {
            if x > cut {
                1.0
            } else if x == cut {
                share
            } else {
                0.0
            }
        })
        .collect()
}

/// Largest number of positive weights for which sample inclusion is computed
/// exactly by subset dynamic programming.
pub const EXACT_SAMPLE_LIMIT: usize = 16;

/// Inclusion probabilities of [`allocate_sample`].
///
/// Exact when `k = 1`, when every positive-weight agent is drawn, or when at
/// most [`EXACT_SAMPLE_LIMIT`] agents carry weight; otherwise the successive
/// sampling approximation `π_i = 1 - exp(-λ w_i)` with `Σ π_i = k`.
pub fn sample_inclusion(g: &[f64], k: usize) -> Vec<f64> {
    let n = g.len();
    let support: Vec<usize> = (0..n).filter(|&i| g[i] > 0.0).collect();
    let mut pi = vec![0.0; n];
    if k == 0 || support.is_empty() {
        return pi;
    }
    if k >= support.len() {
        for &i in &support {
            pi[i] = 1.0;
        }
        return pi;
    }
    let total: f64 = support.iter().map(|&i| g[i]).sum();
    if k == 1 {
        for &i in &support {
            pi[i] = g[i] / total;
        }
        return pi;
    }
    if support.len() <= EXACT_SAMPLE_LIMIT {
        let w: Vec<f64> = support.iter().map(|&i| g[i]).collect();
        for (p, &i) in exact_successive_inclusion(&w, k).into_iter().zip(&support) {
            pi[i] = p;
        }
        return pi;
    }
    // Σ (1 - e^{-λ g}) is concave and increasing in λ, so Newton from λ = 0
    // approaches the root monotonically from below.
    let mut lambda = 0.0f64;
    for _ in 0..200 {
        let (mut f, mut d) = (-(k as f64), 0.0);
        for &i in &support {
            let e = math::exp(-lambda * g[i]);
            f += 1.0 - e;
            d += g[i] * e;
        }
        if !(f < 0.0) || !(d > 0.0) {
            break;
        }
        let step = -f / d;
        lambda += step;
        if step <= 1e-15 * lambda {
            break;
        }
    }
    for &i in &support {
        pi[i] = 1.0 - math::exp(-lambda * g[i]);
    }
    pi
}

/// Exact successive-sampling inclusion probabilities by dynamic programming
/// over the set of agents drawn so far. `w` must be strictly positive.
pub fn exact_successive_inclusion(w: &[f64], k: usize) -> Vec<f64> {
    let m = w.len();
    assert!(m <= 24, "subset dynamic programming limited to 24 agents");
    let total: f64 = w.iter().sum();
    let mut prob = vec![0.0f64; 1 << m];
    prob[0] = 1.0;
    let mut pi = vec![0.0; m];
    for set in 0usize..(1 << m) {
        let p = prob[set];
        if p == 0.0 {
            continue;
        }
        let size = set.count_ones() as usize;
        if size == k {
            for (i, pi_i) in pi.iter_mut().enumerate() {
                if set & (1 << i) != 0 {
                    *pi_i += p;
                }
            }
            continue;
        }
        let used: f64 = (0..m).filter(|&i| set & (1 << i) != 0).map(|i| w[i]).sum();
        let rest = total - used;
        for i in 0..m {
            if set & (1 << i) == 0 {
                prob[set | (1 << i)] += p * w[i] / rest;
            }
        }
    }
    pi
}

pub fn inclusion_probabilities(g: &[f64], mode: AllocationMode, k: usize) -> Vec<f64> {
    match mode {
        AllocationMode::Rank => rank_inclusion(g, k),
        AllocationMode::Sample => sample_inclusion(g, k),
    }
}

/// Observed outcome `A · Y^l / g`.
pub fn observed_outcome(assigned: bool, latent: bool, g: f64) -> Result<f64> {
    if !assigned {
        return Ok(0.0);
    }
    if !(g > 0.0) {
        return Err(Error::Positivity { agent: usize::MAX, g });
    }
    Ok(if latent { 1.0 / g } else { 0.0 })
}

/// A design instantiated for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct TestingDesign {
    pub kind: DesignKind,
    /// Scores over all agents.
    pub g: Vec<f64>,
    pub mode: AllocationMode,
    pub budget: usize,
    /// Agents that may be tested (not already known positive).
    pub available: Vec<bool>,
}

impl TestingDesign {
    pub fn new(kind: DesignKind, g: Vec<f64>, budget: usize, available: Vec<bool>) -> Self {
        let budget = if kind == DesignKind::NoTesting { 0 } else { budget };
        TestingDesign {
            kind,
            mode: kind.mode(),
            g,
            budget,
            available,
        }
    }

    fn pool(&self) -> Vec<usize> {
        (0..self.g.len()).filter(|&i| self.available[i]).collect()
    }

    fn effective_budget(&self, pool: usize) -> usize {
        self.budget.min(pool)
    }

    /// Inclusion probabilities over all agents; zero outside the available pool.
    pub fn inclusion(&self) -> Vec<f64> {
        let pool = self.pool();
        let sub: Vec<f64> = pool.iter().map(|&i| self.g[i]).collect();
        let pi_sub = inclusion_probabilities(&sub, self.mode, self.effective_budget(pool.len()));
        let mut pi = vec![0.0; self.g.len()];
        for (&i, p) in pool.iter().zip(pi_sub) {
            pi[i] = p;
        }
        pi
    }

    /// Draw the day's assignment.
    pub fn allocate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        let pool = self.pool();
        let sub: Vec<f64> = pool.iter().map(|&i| self.g[i]).collect();
        let k = self.effective_budget(pool.len());
        let picked = match self.mode {
            AllocationMode::Rank => allocate_rank(&sub, k, rng),
            AllocationMode::Sample => {
                if k == 0 || sub.iter().all(|&w| w <= 0.0) {
                    Vec::new()
                } else {
                    allocate_sample(&sub, k, rng)?
                }
            }
        };
        Ok(picked.into_iter().map(|j| pool[j]).collect())
    }
}

/// One day of testing.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRound {
    pub day: u32,
    /// Tested agents in increasing order.
    pub tested: Vec<usize>,
    /// Latent status of each tested agent (tests are perfect).
    pub results: Vec<bool>,
    /// Inclusion probabilities of the mechanism that generated the assignment.
    pub g_used: Vec<f64>,
}

impl TestRound {
    pub fn new(day: u32, tested: Vec<usize>, latent: &[bool], g_used: Vec<f64>) -> Result<Self> {
        for &i in &tested {
            if !(g_used[i] > 0.0) {
                return Err(Error::Positivity { agent: i, g: g_used[i] });
            }
        }
        let results = tested.iter().map(|&i| latent[i]).collect();
        Ok(TestRound {
            day,
            tested,
            results,
            g_used,
        })
    }

    pub fn assigned(&self) -> Vec<bool> {
        let mut a = vec![false; self.g_used.len()];
        for &i in &self.tested {
            a[i] = true;
        }
        a
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.tested.iter().zip(&self.results).filter(|(_, &r)| r).map(|(&i, _)| i)
    }

    /// Horvitz–Thompson estimate `(1/n) Σ A_i Y^l_i / g_i` of the latent prevalence.
    pub fn ipw_prevalence(&self) -> f64 {
        let n = self.g_used.len() as f64;
        self.tested
            .iter()
            .zip(&self.results)
            .map(|(&i, &y)| observed_outcome(true, y, self.g_used[i]).unwrap_or(0.0))
            .sum::<f64>()
            / n
    }
}
