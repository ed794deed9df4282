//! Daily latent infection process.
//!
//! Compartments follow S → E → It → (Is | Ia) → R. Continuous gamma stage
//! durations are read as whole-day clocks: an agent leaves a stage on the
//! first daily step at which its time in the stage reaches the drawn duration,
//! so a duration `d` occupies `ceil(d)` daily states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::population::{AgentAttributes, NetworkLayers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Compartment {
    S,
    E,
    It,
    Is,
    Ia,
    R,
}

impl Compartment {
    pub const ALL: [Compartment; 6] = [
        Compartment::S,
        Compartment::E,
        Compartment::It,
        Compartment::Is,
        Compartment::Ia,
        Compartment::R,
    ];

    /// Infectious and test-detectable.
    pub fn is_infectious(self) -> bool {
        matches!(self, Compartment::It | Compartment::Is | Compartment::Ia)
    }

    pub fn name(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::It => "It",
            Compartment::Is => "Is",
            Compartment::Ia => "Ia",
            Compartment::R => "R",
        }
    }
}

/// Stage durations in days (gamma shape, rate).
pub const LATENT_GAMMA: (f64, f64) = (9.0, 2.0);
pub const DETECTABLE_GAMMA: (f64, f64) = (1.0, 1.0);
pub const SYMPTOMATIC_GAMMA: (f64, f64) = (13.0, 1.0);
pub const ASYMPTOMATIC_GAMMA: (f64, f64) = (7.5, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiseaseCourse {
    pub dur_e: f64,
    pub dur_it: f64,
    pub dur_i: f64,
    pub will_be_symptomatic: bool,
}

fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, (shape, rate): (f64, f64)) -> f64 {
    crate::sampling::gamma(rng, shape, rate).max(1e-9)
}

impl DiseaseCourse {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, will_be_symptomatic: bool) -> Self {
        let dur_e = gamma_draw(rng, LATENT_GAMMA);
        let dur_it = gamma_draw(rng, DETECTABLE_GAMMA);
        let dur_i = if will_be_symptomatic {
            gamma_draw(rng, SYMPTOMATIC_GAMMA)
        } else {
            gamma_draw(rng, ASYMPTOMATIC_GAMMA)
        };
        DiseaseCourse {
            dur_e,
            dur_it,
            dur_i,
            will_be_symptomatic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HealthState {
    pub compartment: Compartment,
    pub isolated: bool,
    pub days_in_compartment: u32,
    pub course: Option<DiseaseCourse>,
}

impl HealthState {
    pub const SUSCEPTIBLE: HealthState = HealthState {
        compartment: Compartment::S,
        isolated: false,
        days_in_compartment: 0,
        course: None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicParams {
    pub risk_scale: f64,
    /// Residual infectiousness of isolated agents (0 = full isolation).
    pub isolation_factor: f64,
    /// Daily per-agent probability of infection from outside the campus.
    pub importation_prob: f64,
    /// Relative infectiousness of asymptomatic cases.
    pub asymptomatic_factor: f64,
    /// Lower bound of the decaying infectiousness in Is / Ia.
    pub decay_floor: f64,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        EpidemicParams {
            risk_scale: 0.5,
            isolation_factor: 0.0,
            importation_prob: 0.0,
            asymptomatic_factor: 0.61,
            decay_floor: 0.1,
        }
    }
}

impl EpidemicParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("risk_scale", self.risk_scale),
            ("isolation_factor", self.isolation_factor),
            ("importation_prob", self.importation_prob),
            ("asymptomatic_factor", self.asymptomatic_factor),
            ("decay_floor", self.decay_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Initial counts per compartment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedCounts {
    pub e: usize,
    pub it: usize,
    pub is: usize,
    pub ia: usize,
}

impl SeedCounts {
    pub fn total(&self) -> usize {
        self.e + self.it + self.is + self.ia
    }
}

impl Default for SeedCounts {
    fn default() -> Self {
        SeedCounts { e: 8, it: 2, is: 2, ia: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    pub day: u32,
    pub states: Vec<HealthState>,
    pub cumulative_infections: usize,
}

impl EpidemicState {
    pub fn new(n: usize) -> Self {
        EpidemicState {
            day: 0,
            states: vec![HealthState::SUSCEPTIBLE; n],
            cumulative_infections: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    /// Counts in `Compartment::ALL` order.
    pub fn compartment_counts(&self) -> [usize; 6] {
        let mut c = [0; 6];
        for s in &self.states {
            c[s.compartment as usize] += 1;
        }
        c
    }

    /// Latent outcome: currently infectious, hence test-positive.
    pub fn latent_positive(&self, i: usize) -> bool {
        self.states[i].compartment.is_infectious()
    }

    pub fn latent_outcomes(&self) -> Vec<bool> {
        self.states.iter().map(|s| s.compartment.is_infectious()).collect()
    }

    pub fn cumulative_incidence(&self) -> f64 {
        self.cumulative_infections as f64 / self.n() as f64
    }
}

/// Place randomly chosen agents into the seeded compartments with fresh courses.
pub fn seed_epidemic<R: Rng + ?Sized>(
    state: &mut EpidemicState,
    agents: &[AgentAttributes],
    seeds: SeedCounts,
    rng: &mut R,
) -> Result<()> {
    let n = state.n();
    if seeds.total() > n {
        return Err(Error::Config(format!("{} seeds exceed population of {n}", seeds.total())));
    }
    let chosen = rand::seq::index::sample(rng, n, seeds.total());
    let plan = core::iter::repeat_n(Compartment::E, seeds.e)
        .chain(core::iter::repeat_n(Compartment::It, seeds.it))
        .chain(core::iter::repeat_n(Compartment::Is, seeds.is))
        .chain(core::iter::repeat_n(Compartment::Ia, seeds.ia));
    for (i, comp) in chosen.iter().zip(plan) {
        let symptomatic = match comp {
            Compartment::Is => true,
            Compartment::Ia => false,
            _ => agents[i].symptomatic_if_infected,
        };
        state.states[i] = HealthState {
            compartment: comp,
            isolated: false,
            days_in_compartment: 0,
            course: Some(DiseaseCourse::draw(rng, symptomatic)),
        };
    }
    state.cumulative_infections += seeds.total();
    Ok(())
}

/// Relative infectiousness of an infectious agent.
///
/// It ramps linearly up to the transition, Is decays linearly to a floor, and
/// Ia follows the Is decay scaled by the asymptomatic factor. Isolation
/// multiplies the result by the isolation factor.
pub fn infectiousness_at(state: &HealthState, params: &EpidemicParams) -> Result<f64> {
    let course = state
        .course
        .as_ref()
        .ok_or_else(|| Error::Contract("infectiousness of an agent without a disease course".into()))?;
    let d = state.days_in_compartment as f64;
    let decay = || (1.0 - d / course.dur_i).max(params.decay_floor);
    let phi = match state.compartment {
        Compartment::It => ((d + 1.0) / (course.dur_it + 1.0)).min(1.0),
        Compartment::Is => decay(),
        Compartment::Ia => params.asymptomatic_factor * decay(),
        c => {
            return Err(Error::Contract(format!(
                "infectiousness requested for non-infectious compartment {}",
                c.name()
            )))
        }
    };
    Ok(if state.isolated { phi * params.isolation_factor } else { phi })
}

fn phi_or_zero(state: &HealthState, params: &EpidemicParams) -> f64 {
    if state.compartment.is_infectious() {
        infectiousness_at(state, params).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Infection probability of agent `i` over the coming day.
///
/// `1 - (1 - import) · Π_j (1 - p_layer(i, j) · φ_j)` over infectious neighbors,
/// where the random-layer probability is scaled by `1 + risk_scale · risk_i`.
pub fn hazard_of(
    i: usize,
    agents: &[AgentAttributes],
    layers: &NetworkLayers,
    states: &[HealthState],
    params: &EpidemicParams,
) -> f64 {
    let mut survival = 1.0 - params.importation_prob;
    for &j in layers.household_members(i) {
        let j = j as usize;
        if j != i {
            survival *= 1.0 - layers.household_prob(i, j) * phi_or_zero(&states[j], params);
        }
    }
    layers.for_each_classmate(i, |j| {
        survival *= 1.0 - layers.probs.class * phi_or_zero(&states[j as usize], params);
    });
    let p_rand = random_edge_prob(layers, agents, i, params);
    for &j in &layers.random.adjacency[i] {
        survival *= 1.0 - p_rand * phi_or_zero(&states[j as usize], params);
    }
    1.0 - survival
}

#[inline]
fn random_edge_prob(layers: &NetworkLayers, agents: &[AgentAttributes], i: usize, params: &EpidemicParams) -> f64 {
    (layers.probs.random * (1.0 + params.risk_scale * agents[i].baseline_risk)).min(1.0)
}

/// Per-agent infection probabilities for the coming day, computed by pushing
/// exposure from infectious agents onto their neighbors. Non-susceptible
/// agents get 0.
pub fn hazards(
    agents: &[AgentAttributes],
    layers: &NetworkLayers,
    states: &[HealthState],
    params: &EpidemicParams,
) -> Vec<f64> {
    let n = states.len();
    let mut survival = vec![1.0 - params.importation_prob; n];
    for (j, sj) in states.iter().enumerate() {
        let phi = phi_or_zero(sj, params);
        if phi <= 0.0 {
            continue;
        }
        for &i in layers.household_members(j) {
            let i = i as usize;
            if i != j && states[i].compartment == Compartment::S {
                survival[i] *= 1.0 - layers.household_prob(i, j) * phi;
            }
        }
        layers.for_each_classmate(j, |i| {
            let i = i as usize;
            if states[i].compartment == Compartment::S {
                survival[i] *= 1.0 - layers.probs.class * phi;
            }
        });
        for &i in &layers.random.adjacency[j] {
            let i = i as usize;
            if states[i].compartment == Compartment::S {
                survival[i] *= 1.0 - random_edge_prob(layers, agents, i, params) * phi;
            }
        }
    }
    states
        .iter()
        .zip(survival)
        .map(|(s, surv)| if s.compartment == Compartment::S { 1.0 - surv } else { 0.0 })
        .collect()
}

/// Advance one day. Exactly one uniform is drawn per agent (in index order)
/// before any course draws, so infection coin flips line up across runs that
/// share the day's stream.
pub fn advance_day<R: Rng + ?Sized>(
    state: &mut EpidemicState,
    agents: &[AgentAttributes],
    layers: &NetworkLayers,
    params: &EpidemicParams,
    rng: &mut R,
) {
    let hz = hazards(agents, layers, &state.states, params);
    let coins: Vec<f64> = (0..state.n()).map(|_| rng.random::<f64>()).collect();

    let mut newly = Vec::new();
    for (i, s) in state.states.iter_mut().enumerate() {
        match s.compartment {
            Compartment::S => {
                if coins[i] < hz[i] {
                    newly.push(i);
                }
            }
            Compartment::R => {
                s.days_in_compartment = s.days_in_compartment.saturating_add(1);
            }
            _ => step_clock(s),
        }
    }
    for &i in &newly {
        state.states[i] = HealthState {
            compartment: Compartment::E,
            isolated: false,
            days_in_compartment: 0,
            course: Some(DiseaseCourse::draw(rng, agents[i].symptomatic_if_infected)),
        };
    }
    state.cumulative_infections += newly.len();
    state.day += 1;
}

fn step_clock(s: &mut HealthState) {
    let course = s.course.expect("clocked compartments carry a course");
    s.days_in_compartment += 1;
    let d = s.days_in_compartment as f64;
    let next = match s.compartment {
        Compartment::E if d >= course.dur_e => Some(Compartment::It),
        Compartment::It if d >= course.dur_it => Some(if course.will_be_symptomatic {
            Compartment::Is
        } else {
            Compartment::Ia
        }),
        Compartment::Is | Compartment::Ia if d >= course.dur_i => Some(Compartment::R),
        _ => None,
    };
    if let Some(c) = next {
        s.compartment = c;
        s.days_in_compartment = 0;
    }
}

/// Flag detected agents as isolated. Every detected agent must be infectious.
pub fn apply_isolation(state: &mut EpidemicState, detected: &[usize]) -> Result<()> {
    for &i in detected {
        let s = state.states.get(i).ok_or(Error::UnknownAgent(i))?;
        if !s.compartment.is_infectious() {
            return Err(Error::Contract(format!(
                "agent {i} isolated while in {}",
                s.compartment.name()
            )));
        }
    }
    for &i in detected {
        state.states[i].isolated = true;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{AgeBand, Group, HouseholdUnit, LayerProbs, RandomLayer, UnitKind};
    use crate::rng::{stream, Purpose};

    fn agent(id: usize) -> AgentAttributes {
        AgentAttributes {
            id,
            group: Group::StudentOffCampus,
            age_band: AgeBand::From18To28,
            baseline_risk: 0.5,
            communal: false,
            attends_in_person: false,
            symptomatic_if_infected: true,
        }
    }

    /// Agent 0 shares a house with 1 and a class with 2.
    fn fixture() -> (Vec<AgentAttributes>, NetworkLayers) {
        let agents: Vec<_> = (0..3).map(agent).collect();
        let layers = NetworkLayers {
            probs: LayerProbs::default(),
            households: vec![HouseholdUnit {
                kind: UnitKind::StudentHouse,
                members: vec![0, 1],
            }],
            household_of: vec![Some(0), Some(0), None],
            classes: vec![vec![0, 2]],
            classes_of: vec![vec![0], vec![], vec![0]],
            communal: vec![false; 3],
            random: RandomLayer {
                day: 0,
                adjacency: vec![vec![]; 3],
            },
        };
        (agents, layers)
    }

    fn infectious(comp: Compartment, days: u32) -> HealthState {
        HealthState {
            compartment: comp,
            isolated: false,
            days_in_compartment: days,
            course: Some(DiseaseCourse {
                dur_e: 4.5,
                dur_it: 1.0,
                dur_i: 10.0,
                will_be_symptomatic: comp == Compartment::Is,
            }),
        }
    }

    #[test]
    fn infectiousness_profiles() {
        let p = EpidemicParams::default();
        let ia = infectiousness_at(&infectious(Compartment::Ia, 0), &p).unwrap();
        assert!((ia - 0.61).abs() < 1e-15);
        let is_end = infectiousness_at(&infectious(Compartment::Is, 10), &p).unwrap();
        assert!((is_end - 0.1).abs() < 1e-15);
        let it0 = infectiousness_at(&infectious(Compartment::It, 0), &p).unwrap();
        assert!((it0 - 0.5).abs() < 1e-15);
        let mut iso = infectious(Compartment::Is, 0);
        iso.isolated = true;
        assert_eq!(infectiousness_at(&iso, &p).unwrap(), 0.0);
        assert!(infectiousness_at(&HealthState::SUSCEPTIBLE, &p).is_err());
        let mut e = infectious(Compartment::E, 0);
        e.compartment = Compartment::E;
        assert!(matches!(infectiousness_at(&e, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn hazard_complement_product() {
        let (agents, layers) = fixture();
        let p = EpidemicParams::default();
        let mut states = vec![HealthState::SUSCEPTIBLE; 3];
        assert_eq!(hazard_of(0, &agents, &layers, &states, &p), 0.0);
        // Is at day 0 has φ = 1.
        states[1] = infectious(Compartment::Is, 0);
        assert!((hazard_of(0, &agents, &layers, &states, &p) - 0.03).abs() < 1e-15);
        states[2] = infectious(Compartment::Is, 0);
        assert!((hazard_of(0, &agents, &layers, &states, &p) - 0.0397).abs() < 1e-12);
        let pushed = hazards(&agents, &layers, &states, &p);
        assert!((pushed[0] - 0.0397).abs() < 1e-12);
        assert_eq!(pushed[1], 0.0);
    }

    #[test]
    fn latent_clock_occupies_ceil_days() {
        let (agents, layers) = fixture();
        let p = EpidemicParams::default();
        let mut st = EpidemicState::new(3);
        st.states[0] = HealthState {
            compartment: Compartment::E,
            isolated: false,
            days_in_compartment: 0,
            course: Some(DiseaseCourse {
                dur_e: 4.5,
                dur_it: 2.0,
                dur_i: 3.0,
                will_be_symptomatic: false,
            }),
        };
        let mut rng = stream(1, Purpose::Epidemic);
        let mut e_days = 0;
        while st.states[0].compartment == Compartment::E {
            e_days += 1;
            advance_day(&mut st, &agents, &layers, &p, &mut rng);
        }
        assert_eq!(e_days, 5);
        assert_eq!(st.states[0].compartment, Compartment::It);
        advance_day(&mut st, &agents, &layers, &p, &mut rng);
        advance_day(&mut st, &agents, &layers, &p, &mut rng);
        assert_eq!(st.states[0].compartment, Compartment::Ia);
    }

    #[test]
    fn all_recovered_is_absorbing() {
        let (agents, layers) = fixture();
        let mut st = EpidemicState::new(3);
        for s in st.states.iter_mut() {
            s.compartment = Compartment::R;
        }
        let before = st.compartment_counts();
        advance_day(&mut st, &agents, &layers, &EpidemicParams::default(), &mut stream(2, Purpose::Epidemic));
        assert_eq!(st.compartment_counts(), before);
        assert_eq!(st.day, 1);
    }

    #[test]
    fn seeding_matches_plan() {
        let agents: Vec<_> = (0..50).map(agent).collect();
        let mut st = EpidemicState::new(50);
        seed_epidemic(&mut st, &agents, SeedCounts::default(), &mut stream(3, Purpose::Seeding)).unwrap();
        let c = st.compartment_counts();
        assert_eq!(c, [38, 8, 2, 2, 0, 0]);
        assert_eq!(st.cumulative_infections, 12);
        let too_many = SeedCounts { e: 51, it: 0, is: 0, ia: 0 };
        assert!(seed_epidemic(&mut EpidemicState::new(50), &agents, too_many, &mut stream(3, Purpose::Seeding)).is_err());
    }

    #[test]
    fn isolation_rejects_non_infectious() {
        let mut st = EpidemicState::new(3);
        assert!(apply_isolation(&mut st, &[0]).is_err());
        st.states[1] = infectious(Compartment::Ia, 2);
        apply_isolation(&mut st, &[1]).unwrap();
        assert!(st.states[1].isolated);
        apply_isolation(&mut st, &[]).unwrap();
    }
}
