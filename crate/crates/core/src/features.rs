//! Fixed-dimensional summaries of the observed past.
//!
//! Everything here is computed from observed data only: test results, the
//! static network, recorded random contacts of detected agents, and visible
//! symptoms. The latent infection status is never read.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::designs::TestRound;
use crate::math;
use crate::population::{AgentAttributes, NetworkLayers, RandomLayer};

/// Lookback windows (days) for positive-contact counts.
pub const CONTACT_WINDOWS: [u32; 3] = [1, 3, 7];
/// Cap (days) on the time since the last negative test.
pub const NEGATIVE_TEST_CAP: u32 = 14;
/// Days of pooled positivity.
pub const POSITIVITY_WINDOW: u32 = 7;

pub const BASE_DIM: usize = 13;
pub const NETWORK_DIM: usize = 9;
pub const FULL_DIM: usize = BASE_DIM + NETWORK_DIM;

/// Column layout of [`SummaryFeatures`].
pub mod col {
    pub const SYMPTOMATIC: usize = 0;
    pub const COMMUNAL: usize = 1;
    pub const IN_PERSON: usize = 2;
    pub const AGE: usize = 3;
    pub const BASELINE_RISK: usize = 9;
    pub const SINCE_NEGATIVE: usize = 10;
    pub const POSITIVITY: usize = 11;
    pub const DAY: usize = 12;
    /// Positive-contact counts, `ln(1 + count)`, ordered layer-major:
    /// household {1,3,7}, class {1,3,7}, random {1,3,7}.
    pub const CONTACTS: usize = 13;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSet {
    Base,
    BaseNetwork,
}

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::Base => BASE_DIM,
            FeatureSet::BaseNetwork => FULL_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Base => "base",
            FeatureSet::BaseNetwork => "net",
        }
    }
}

/// Row-major `n × FULL_DIM` feature matrix for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryFeatures {
    pub day: u32,
    pub n: usize,
    pub data: Vec<f64>,
}

impl SummaryFeatures {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * FULL_DIM..(i + 1) * FULL_DIM]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DayContacts {
    day: u32,
    counts: Vec<[u16; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct DayTests {
    day: u32,
    tests: usize,
    positives: usize,
}

/// Observed history needed for features and the contact-tracing design.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    n: usize,
    known_positive: Vec<bool>,
    last_negative: Vec<Option<u32>>,
    contacts: VecDeque<DayContacts>,
    tests: VecDeque<DayTests>,
}

impl Observations {
    pub fn new(n: usize) -> Self {
        Observations {
            n,
            known_positive: vec![false; n],
            last_negative: vec![None; n],
            contacts: VecDeque::new(),
            tests: VecDeque::new(),
        }
    }

    pub fn known_positive(&self) -> &[bool] {
        &self.known_positive
    }

    /// Agents that may still be tested.
    pub fn available(&self) -> Vec<bool> {
        self.known_positive.iter().map(|&k| !k).collect()
    }

    /// Record a day's results. The known network of a detected agent is its
    /// household, its classmates, and `recorded` (the previous day's random contacts).
    pub fn record_round(&mut self, round: &TestRound, layers: &NetworkLayers, recorded: &RandomLayer) {
        let day = round.day;
        let mut counts = vec![[0u16; 3]; self.n];
        let mut positives = 0;
        for (&j, &y) in round.tested.iter().zip(&round.results) {
            if !y {
                self.last_negative[j] = Some(day);
                continue;
            }
            positives += 1;
            self.known_positive[j] = true;
            for &i in layers.household_members(j) {
                if i as usize != j {
                    counts[i as usize][0] = counts[i as usize][0].saturating_add(1);
                }
            }
            layers.for_each_classmate(j, |i| {
                counts[i as usize][1] = counts[i as usize][1].saturating_add(1);
            });
            if let Some(adj) = recorded.adjacency.get(j) {
                for &i in adj {
                    counts[i as usize][2] = counts[i as usize][2].saturating_add(1);
                }
            }
        }
        self.contacts.push_back(DayContacts { day, counts });
        while self.contacts.len() > *CONTACT_WINDOWS.last().unwrap() as usize {
            self.contacts.pop_front();
        }
        self.tests.push_back(DayTests {
            day,
            tests: round.tested.len(),
            positives,
        });
        while self.tests.len() > POSITIVITY_WINDOW as usize {
            self.tests.pop_front();
        }
    }

    /// In the known network of an agent detected on day `t - 1`, and not yet known positive.
    pub fn traced(&self, t: u32) -> Vec<bool> {
        let mut out = vec![false; self.n];
        if t == 0 {
            return out;
        }
        if let Some(dc) = self.contacts.iter().find(|dc| dc.day == t - 1) {
            for (i, c) in dc.counts.iter().enumerate() {
                out[i] = !self.known_positive[i] && c.iter().any(|&x| x > 0);
            }
        }
        out
    }

    /// Observed positivity over the last seven days (0 when nobody was tested).
    pub fn recent_positivity(&self, t: u32) -> f64 {
        let (tests, pos) = self
            .tests
            .iter()
            .filter(|d| d.day < t && d.day + POSITIVITY_WINDOW >= t)
            .fold((0usize, 0usize), |(a, b), d| (a + d.tests, b + d.positives));
        if tests == 0 {
            0.0
        } else {
            pos as f64 / tests as f64
        }
    }

    /// Features for day `t` from history before `t` plus today's visible symptoms.
    pub fn extract(&self, t: u32, agents: &[AgentAttributes], symptomatic: &[bool]) -> SummaryFeatures {
        let n = self.n;
        let positivity = self.recent_positivity(t);
        let mut data = vec![0.0; n * FULL_DIM];
        for (i, a) in agents.iter().enumerate() {
            let row = &mut data[i * FULL_DIM..(i + 1) * FULL_DIM];
            row[col::SYMPTOMATIC] = f64::from(u8::from(symptomatic[i]));
            row[col::COMMUNAL] = f64::from(u8::from(a.communal));
            row[col::IN_PERSON] = f64::from(u8::from(a.attends_in_person));
            row[col::AGE + a.age_band.index()] = 1.0;
            row[col::BASELINE_RISK] = a.baseline_risk;
            row[col::SINCE_NEGATIVE] = match self.last_negative[i] {
                Some(d) => f64::from((t - d).min(NEGATIVE_TEST_CAP)) / f64::from(NEGATIVE_TEST_CAP),
                None => 1.0,
            };
            row[col::POSITIVITY] = positivity;
            row[col::DAY] = f64::from(t) / 100.0;
        }
        let mut acc = vec![[0u32; 9]; n];
        for dc in &self.contacts {
            if dc.day >= t {
                continue;
            }
            let lag = t - dc.day;
            for (w, &window) in CONTACT_WINDOWS.iter().enumerate() {
                if lag > window {
                    continue;
                }
                for (i, c) in dc.counts.iter().enumerate() {
                    for layer in 0..3 {
                        acc[i][layer * 3 + w] += u32::from(c[layer]);
                    }
                }
            }
        }
        for (i, a) in acc.iter().enumerate() {
            for (k, &c) in a.iter().enumerate() {
                data[i * FULL_DIM + col::CONTACTS + k] = math::ln(1.0 + f64::from(c));
            }
        }
        SummaryFeatures { day: t, n, data }
    }
}
