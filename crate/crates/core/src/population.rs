//! Synthetic campus population and its layered contact network.
//!
//! Three static layers (households, communal rooms and in-person classes) are
//! built once per replicate; the random-encounter layer is regenerated every
//! simulated day.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::sampling;

/// Sampling weights of the six age bands.
pub const AGE_BAND_WEIGHTS: [f64; 6] = [0.1, 0.5, 0.2, 0.07, 0.07, 0.06];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    StudentOffCampus,
    StudentOnCampus,
    FacultyStaff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBand {
    Under18,
    From18To28,
    From29To38,
    From39To48,
    From49To68,
    Over68,
}

impl AgeBand {
    pub const ALL: [AgeBand; 6] = [
        AgeBand::Under18,
        AgeBand::From18To28,
        AgeBand::From29To38,
        AgeBand::From39To48,
        AgeBand::From49To68,
        AgeBand::Over68,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Probability that an infection in this band becomes symptomatic.
    pub fn symptomatic_probability(self) -> f64 {
        match self {
            AgeBand::Under18 | AgeBand::From18To28 => 0.4,
            AgeBand::From29To38 | AgeBand::From39To48 => 0.6,
            AgeBand::From49To68 | AgeBand::Over68 => 0.8,
        }
    }

    /// Bands up to 28 years are students; older agents are faculty/staff.
    pub fn is_student_age(self) -> bool {
        matches!(self, AgeBand::Under18 | AgeBand::From18To28)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentAttributes {
    pub id: usize,
    pub group: Group,
    pub age_band: AgeBand,
    pub baseline_risk: f64,
    pub communal: bool,
    pub attends_in_person: bool,
    pub symptomatic_if_infected: bool,
}

/// Per-layer transmission probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerProbs {
    pub household: f64,
    pub communal_bonus: f64,
    pub class: f64,
    pub random: f64,
}

impl Default for LayerProbs {
    fn default() -> Self {
        LayerProbs {
            household: 0.03,
            communal_bonus: 0.01,
            class: 0.01,
            random: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub n: usize,
    pub frac_on_campus: f64,
    pub frac_in_person: f64,
    /// Off-campus student houses per capita.
    pub student_houses_per_capita: f64,
    pub student_house_mean: f64,
    pub student_house_max: u32,
    /// Faculty/staff houses per capita.
    pub faculty_houses_per_capita: f64,
    pub faculty_house_mean: f64,
    pub faculty_house_max: u32,
    pub communal_buildings: usize,
    pub room_mean: f64,
    pub room_max: u32,
    /// In-person classes per capita (314 classes for 20,000 people).
    pub classes_per_capita: f64,
    pub class_size_mean: f64,
    pub class_size_min: u32,
    pub class_size_max: u32,
    /// Mean of the untruncated negative binomial behind daily random encounters.
    pub random_contacts_mean: f64,
    pub random_degree_min: u32,
    pub random_degree_max: u32,
    /// Baseline risk is Beta(1, n / risk_beta_divisor).
    pub risk_beta_divisor: f64,
    pub probs: LayerProbs,
    pub rng_seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n: 2000,
            frac_on_campus: 0.05,
            frac_in_person: 0.18,
            student_houses_per_capita: 0.01,
            student_house_mean: 2.0,
            student_house_max: 8,
            faculty_houses_per_capita: 0.005,
            faculty_house_mean: 0.5,
            faculty_house_max: 2,
            communal_buildings: 25,
            room_mean: 2.0,
            room_max: 8,
            classes_per_capita: 314.0 / 20_000.0,
            class_size_mean: 20.0,
            class_size_min: 15,
            class_size_max: 25,
            random_contacts_mean: 8.0,
            random_degree_min: 3,
            random_degree_max: 25,
            risk_beta_divisor: 36_000.0,
            probs: LayerProbs::default(),
            rng_seed: 1,
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || v.is_nan() {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!("population size must be at least 10, got {}", self.n)));
        }
        check_fraction("frac_on_campus", self.frac_on_campus)?;
        check_fraction("frac_in_person", self.frac_in_person)?;
        for (name, v) in [
            ("household probability", self.probs.household),
            ("communal bonus", self.probs.communal_bonus),
            ("class probability", self.probs.class),
            ("random probability", self.probs.random),
        ] {
            check_fraction(name, v)?;
        }
        if self.probs.household + self.probs.communal_bonus > 1.0 {
            return Err(Error::Config("household probability plus communal bonus exceeds 1".into()));
        }
        for (name, v) in [
            ("student_houses_per_capita", self.student_houses_per_capita),
            ("faculty_houses_per_capita", self.faculty_houses_per_capita),
            ("classes_per_capita", self.classes_per_capita),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [
            ("student_house_mean", self.student_house_mean),
            ("faculty_house_mean", self.faculty_house_mean),
            ("room_mean", self.room_mean),
            ("class_size_mean", self.class_size_mean),
            ("random_contacts_mean", self.random_contacts_mean),
            ("risk_beta_divisor", self.risk_beta_divisor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.student_house_max == 0 || self.room_max == 0 {
            return Err(Error::Config("house and room size maxima must be at least 1".into()));
        }
        if self.class_size_min == 0 || self.class_size_min > self.class_size_max {
            return Err(Error::Config("class size bounds must satisfy 1 <= min <= max".into()));
        }
        if self.random_degree_min > self.random_degree_max {
            return Err(Error::Config("random degree bounds must satisfy min <= max".into()));
        }
        if self.communal_buildings == 0 {
            return Err(Error::Config("at least one communal building is required".into()));
        }
        Ok(())
    }
}

/// Negative binomial with size 1 and the given mean (a geometric draw).
pub fn neg_binomial<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    sampling::geometric(rng, mean)
}

/// Negative binomial draw conditioned on `[min, max]` by rejection.
///
/// After 10,000 rejections the last draw is clamped into range.
pub fn truncated_neg_binomial<R: Rng + ?Sized>(rng: &mut R, mean: f64, min: u32, max: u32) -> u32 {
    let mut x = 0;
    for _ in 0..10_000 {
        x = neg_binomial(rng, mean);
        if (min..=max).contains(&x) {
            return x;
        }
    }
    x.clamp(min, max)
}

/// Draw the agent list for `cfg`.
pub fn synthesize_population(cfg: &PopulationConfig) -> Result<Vec<AgentAttributes>> {
    cfg.validate()?;
    let mut rng = crate::rng::stream(cfg.rng_seed, crate::rng::Purpose::Population);
    let n = cfg.n;
    let risk_b = n as f64 / cfg.risk_beta_divisor;

    let mut agents: Vec<AgentAttributes> = (0..n)
        .map(|id| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut band = AgeBand::Over68;
            for (b, w) in AgeBand::ALL.iter().zip(AGE_BAND_WEIGHTS) {
                acc += w;
                if u < acc {
                    band = *b;
                    break;
                }
            }
            let baseline_risk = sampling::beta_one(&mut rng, risk_b);
            let symptomatic_if_infected = rng.random_bool(band.symptomatic_probability());
            AgentAttributes {
                id,
                group: if band.is_student_age() { Group::StudentOffCampus } else { Group::FacultyStaff },
                age_band: band,
                baseline_risk: baseline_risk.clamp(0.0, 1.0),
                communal: false,
                attends_in_person: false,
                symptomatic_if_infected,
            }
        })
        .collect();

    let mut students: Vec<usize> = agents
        .iter()
        .filter(|a| a.group == Group::StudentOffCampus)
        .map(|a| a.id)
        .collect();
    students.shuffle(&mut rng);
    let on_campus = (math::round(cfg.frac_on_campus * n as f64) as usize).min(students.len());
    for &id in &students[..on_campus] {
        agents[id].group = Group::StudentOnCampus;
        agents[id].communal = true;
    }

    let mut everyone: Vec<usize> = (0..n).collect();
    everyone.shuffle(&mut rng);
    let in_person = (math::round(cfg.frac_in_person * n as f64) as usize).min(n);
    for &id in &everyone[..in_person] {
        agents[id].attends_in_person = true;
    }
    Ok(agents)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    StudentHouse,
    FacultyHouse,
    CommunalRoom { building: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdUnit {
    pub kind: UnitKind,
    pub members: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Household,
    Class,
    Random,
}

impl Layer {
    pub fn name(self) -> &'static str {
        match self {
            Layer::Household => "household",
            Layer::Class => "class",
            Layer::Random => "random",
        }
    }
}

/// The random-encounter layer of one day.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RandomLayer {
    pub day: u32,
    pub adjacency: Vec<Vec<u32>>,
}

impl RandomLayer {
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Undirected pairs with `a < b`.
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (a, nb) in self.adjacency.iter().enumerate() {
            for &b in nb {
                if (a as u32) < b {
                    out.push((a as u32, b));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayers {
    pub probs: LayerProbs,
    pub households: Vec<HouseholdUnit>,
    pub household_of: Vec<Option<u32>>,
    pub classes: Vec<Vec<u32>>,
    pub classes_of: Vec<Vec<u32>>,
    pub communal: Vec<bool>,
    pub random: RandomLayer,
}

/// A neighbor together with the base transmission probability of the edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub agent: u32,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Neighbors {
    pub household: Vec<Contact>,
    pub class: Vec<Contact>,
    pub random: Vec<Contact>,
}

impl Neighbors {
    pub fn layer(&self, layer: Layer) -> &[Contact] {
        match layer {
            Layer::Household => &self.household,
            Layer::Class => &self.class,
            Layer::Random => &self.random,
        }
    }

    pub fn total(&self) -> usize {
        self.household.len() + self.class.len() + self.random.len()
    }
}

/// Build household, communal-room and class layers. The random layer starts empty.
pub fn build_static_layers<R: Rng + ?Sized>(
    agents: &[AgentAttributes],
    cfg: &PopulationConfig,
    rng: &mut R,
) -> NetworkLayers {
    let n = agents.len();
    let mut households = Vec::new();

    // Off-campus students, grouped by age band before filling houses.
    let mut students: Vec<u32> = agents
        .iter()
        .filter(|a| a.group == Group::StudentOffCampus)
        .map(|a| a.id as u32)
        .collect();
    students.shuffle(rng);
    students.sort_by_key(|&i| agents[i as usize].age_band);
    let n_student_houses = math::round(cfg.student_houses_per_capita * n as f64) as usize;
    fill_units(
        &mut households,
        &students,
        n_student_houses,
        UnitKind::StudentHouse,
        |rng| truncated_neg_binomial(rng, cfg.student_house_mean, 1, cfg.student_house_max),
        rng,
    );

    let mut faculty: Vec<u32> = agents
        .iter()
        .filter(|a| a.group == Group::FacultyStaff)
        .map(|a| a.id as u32)
        .collect();
    faculty.shuffle(rng);
    let n_faculty_houses = math::round(cfg.faculty_houses_per_capita * n as f64) as usize;
    fill_units(
        &mut households,
        &faculty,
        n_faculty_houses,
        UnitKind::FacultyHouse,
        |rng| truncated_neg_binomial(rng, cfg.faculty_house_mean, 0, cfg.faculty_house_max),
        rng,
    );

    // Every on-campus student gets a room in one of the communal buildings.
    let mut residents: Vec<u32> = agents.iter().filter(|a| a.communal).map(|a| a.id as u32).collect();
    residents.shuffle(rng);
    let mut next = 0;
    while next < residents.len() {
        let size = truncated_neg_binomial(rng, cfg.room_mean, 1, cfg.room_max) as usize;
        let end = (next + size).min(residents.len());
        let building = rng.random_range(0..cfg.communal_buildings);
        households.push(HouseholdUnit {
            kind: UnitKind::CommunalRoom { building },
            members: residents[next..end].to_vec(),
        });
        next = end;
    }

    let mut household_of = vec![None; n];
    for (u, unit) in households.iter().enumerate() {
        for &m in &unit.members {
            household_of[m as usize] = Some(u as u32);
        }
    }

    // Classes: seats are filled round-robin over a shuffled attendee list so
    // that every attendee sits in at least one class when seats allow.
    let attendees: Vec<u32> = agents
        .iter()
        .filter(|a| a.attends_in_person)
        .map(|a| a.id as u32)
        .collect();
    let mut classes: Vec<Vec<u32>> = Vec::new();
    if attendees.len() >= cfg.class_size_min as usize {
        let n_classes = math::round(cfg.classes_per_capita * n as f64) as usize;
        let mut order = attendees.clone();
        order.shuffle(rng);
        let mut cursor = 0;
        for _ in 0..n_classes {
            let size = truncated_neg_binomial(rng, cfg.class_size_mean, cfg.class_size_min, cfg.class_size_max)
                as usize;
            let size = size.min(attendees.len());
            let mut members: Vec<u32> = Vec::with_capacity(size);
            let mut skipped = 0;
            while members.len() < size {
                if cursor == order.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                let cand = order[cursor];
                cursor += 1;
                if members.contains(&cand) {
                    skipped += 1;
                    if skipped > 4 * order.len() {
                        break;
                    }
                    continue;
                }
                members.push(cand);
            }
            members.sort_unstable();
            classes.push(members);
        }
    }
    let mut classes_of = vec![Vec::new(); n];
    for (c, members) in classes.iter().enumerate() {
        for &m in members {
            classes_of[m as usize].push(c as u32);
        }
    }

    NetworkLayers {
        probs: cfg.probs,
        households,
        household_of,
        classes,
        classes_of,
        communal: agents.iter().map(|a| a.communal).collect(),
        random: RandomLayer {
            day: 0,
            adjacency: vec![Vec::new(); n],
        },
    }
}

fn fill_units<R: Rng + ?Sized>(
    out: &mut Vec<HouseholdUnit>,
    candidates: &[u32],
    count: usize,
    kind: UnitKind,
    mut size: impl FnMut(&mut R) -> u32,
    rng: &mut R,
) {
    let mut next = 0;
    for _ in 0..count {
        let s = size(rng) as usize;
        let end = (next + s).min(candidates.len());
        out.push(HouseholdUnit {
            kind,
            members: candidates[next..end].to_vec(),
        });
        next = end;
    }
}

/// Draw one day's random-encounter graph.
///
/// Agent `i` asks for `d_i = clamp(round(NB · (1 + risk_scale · risk_i)), min, max)`
/// encounters; requests are paired by shuffled stub matching without self loops
/// or repeated pairs, and agents left below the minimum are topped up with
/// partners that still have room.
pub fn sample_random_layer<R: Rng + ?Sized>(
    agents: &[AgentAttributes],
    cfg: &PopulationConfig,
    risk_scale: f64,
    day: u32,
    rng: &mut R,
) -> RandomLayer {
    let n = agents.len();
    let lo = cfg.random_degree_min as usize;
    let hi = cfg.random_degree_max as usize;
    let target: Vec<usize> = agents
        .iter()
        .map(|a| random_degree_target(rng, cfg, risk_scale, a.baseline_risk))
        .collect();

    let mut stubs: Vec<u32> = Vec::with_capacity(target.iter().sum());
    for (i, &d) in target.iter().enumerate() {
        stubs.extend(core::iter::repeat_n(i as u32, d));
    }
    stubs.shuffle(rng);

    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut leftover = Vec::new();
    for pair in stubs.chunks(2) {
        if let [a, b] = *pair {
            if a != b && !adjacency[a as usize].contains(&b) {
                adjacency[a as usize].push(b);
                adjacency[b as usize].push(a);
            } else {
                leftover.push(a);
                leftover.push(b);
            }
        }
    }
    // Retry the rejected stubs a few times before giving up on them.
    for _ in 0..4 {
        if leftover.len() < 2 {
            break;
        }
        leftover.shuffle(rng);
        let mut still = Vec::new();
        for pair in leftover.chunks(2) {
            if let [a, b] = *pair {
                if a != b && !adjacency[a as usize].contains(&b) {
                    adjacency[a as usize].push(b);
                    adjacency[b as usize].push(a);
                } else {
                    still.push(a);
                    still.push(b);
                }
            }
        }
        leftover = still;
    }

    if n > lo {
        for i in 0..n {
            let mut attempts = 0;
            while adjacency[i].len() < lo && attempts < 64 * n {
                attempts += 1;
                let j = rng.random_range(0..n);
                if j == i || adjacency[j].len() >= hi || adjacency[i].contains(&(j as u32)) {
                    continue;
                }
                adjacency[i].push(j as u32);
                adjacency[j].push(i as u32);
            }
        }
    }
    RandomLayer { day, adjacency }
}

fn random_degree_target<R: Rng + ?Sized>(rng: &mut R, cfg: &PopulationConfig, risk_scale: f64, risk: f64) -> usize {
    let draw = neg_binomial(rng, cfg.random_contacts_mean) as f64;
    let scaled = math::round(draw * (1.0 + risk_scale * risk));
    (scaled as usize).clamp(cfg.random_degree_min as usize, cfg.random_degree_max as usize)
}

impl NetworkLayers {
    pub fn n(&self) -> usize {
        self.household_of.len()
    }

    pub fn household_members(&self, i: usize) -> &[u32] {
        match self.household_of[i] {
            Some(u) => &self.households[u as usize].members,
            None => &[],
        }
    }

    /// Base probability of the household edge `i`–`j`.
    pub fn household_prob(&self, i: usize, j: usize) -> f64 {
        if self.communal[i] && self.communal[j] {
            self.probs.household + self.probs.communal_bonus
        } else {
            self.probs.household
        }
    }

    /// Classmates of `i` with multiplicity (one entry per shared class).
    pub fn for_each_classmate(&self, i: usize, mut f: impl FnMut(u32)) {
        for &c in &self.classes_of[i] {
            for &j in &self.classes[c as usize] {
                if j as usize != i {
                    f(j);
                }
            }
        }
    }

    /// Per-layer neighbors of `id`, tagged with the base edge probability.
    ///
    /// Random-layer edges carry the base probability; the susceptible's risk
    /// multiplier is applied by the hazard.
    pub fn neighbors_of(&self, id: usize) -> Result<Neighbors> {
        if id >= self.n() {
            return Err(Error::UnknownAgent(id));
        }
        let household = self
            .household_members(id)
            .iter()
            .filter(|&&j| j as usize != id)
            .map(|&j| Contact {
                agent: j,
                prob: self.household_prob(id, j as usize),
            })
            .collect();
        let mut class = Vec::new();
        self.for_each_classmate(id, |j| {
            class.push(Contact {
                agent: j,
                prob: self.probs.class,
            })
        });
        let random = self.random.adjacency[id]
            .iter()
            .map(|&j| Contact {
                agent: j,
                prob: self.probs.random,
            })
            .collect();
        Ok(Neighbors { household, class, random })
    }

    /// Edge list `(layer, a, b, prob)` with `a < b`; class pairs are listed once per shared class.
    pub fn edge_list(&self) -> Vec<(Layer, u32, u32, f64)> {
        let mut out = Vec::new();
        for unit in &self.households {
            for (x, &a) in unit.members.iter().enumerate() {
                for &b in &unit.members[x + 1..] {
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    out.push((Layer::Household, a, b, self.household_prob(a as usize, b as usize)));
                }
            }
        }
        for members in &self.classes {
            for (x, &a) in members.iter().enumerate() {
                for &b in &members[x + 1..] {
                    out.push((Layer::Class, a.min(b), a.max(b), self.probs.class));
                }
            }
        }
        for (a, b) in self.random.pairs() {
            out.push((Layer::Random, a, b, self.probs.random));
        }
        out
    }
}
