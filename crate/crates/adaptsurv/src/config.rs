//! Experiment configuration: a TOML file with typed sections and no unknown keys.
//!
//! ```toml
//! [experiment]
//! strategies = ["no_testing", "symptomatic_contact", "osl_tmle_ci"]
//! replicates = 20
//! seed = 2024
//! horizon = 120
//! budget_fraction = 0.03   # or `budget = 60` tests per day
//!
//! [epidemic]
//! risk_scale = 0.5
//!
//! [sweep]
//! budget_fractions = [0.01, 0.02, 0.03, 0.04]
//! risk_scales = [0.5]
//! ```
//!
//! Every key is optional; omitted keys take the defaults shown by
//! `ExperimentConfig::default()`.

use std::path::Path;

use adaptsurv_core::designs::{AllocationMode, DesignKind};
use adaptsurv_core::epidemic::{EpidemicParams, SeedCounts};
use adaptsurv_core::learners::LearnerSpec;
use adaptsurv_core::population::{LayerProbs, PopulationConfig};
use adaptsurv_core::surveillance::{Strategy, SurveillanceConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub strategies: Vec<String>,
    pub replicates: usize,
    pub seed: u64,
    /// Days per trajectory.
    pub horizon: u32,
    /// Tests per day. Mutually exclusive with `budget_fraction`.
    pub budget: Option<usize>,
    /// Tests per day as a fraction of the population.
    pub budget_fraction: Option<f64>,
    /// Trailing window (days) of the loss-based selector.
    pub loss_window: usize,
    /// Width (days) of the time buckets in designs.csv.
    pub design_bucket: u32,
    pub use_ensemble: bool,
    /// Keep per-test logs (day, agent, design, g, result).
    pub record_tests: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            strategies: vec![
                "no_testing".into(),
                "random".into(),
                "symptomatic_contact".into(),
                "perfect".into(),
                "osl_tmle_ci".into(),
            ],
            replicates: 20,
            seed: 2024,
            horizon: 120,
            budget: None,
            budget_fraction: None,
            loss_window: 5,
            design_bucket: 10,
            use_ensemble: false,
            record_tests: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    /// Candidate learners as `full:base`, `window:7:net` or `exp:0.05:net`.
    pub learners: Vec<String>,
    /// Rule-based designs offered to the online selectors.
    pub rule_designs: Vec<String>,
    /// Allocation modes paired with every learner (`rank`, `sample`).
    pub risk_modes: Vec<String>,
}

impl Default for CatalogSection {
    fn default() -> Self {
        CatalogSection {
            learners: vec![
                "full:base".into(),
                "full:net".into(),
                "window:7:net".into(),
                "window:10:net".into(),
                "window:14:net".into(),
                "exp:0.01:net".into(),
                "exp:0.05:net".into(),
                "exp:0.1:net".into(),
            ],
            rule_designs: vec!["symptomatic_contact".into()],
            risk_modes: vec!["rank".into(), "sample".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub n: usize,
    pub frac_on_campus: f64,
    pub frac_in_person: f64,
    pub student_houses_per_capita: f64,
    pub student_house_mean: f64,
    pub student_house_max: u32,
    pub faculty_houses_per_capita: f64,
    pub faculty_house_mean: f64,
    pub faculty_house_max: u32,
    pub communal_buildings: usize,
    pub room_mean: f64,
    pub room_max: u32,
    pub classes_per_capita: f64,
    pub class_size_mean: f64,
    pub class_size_min: u32,
    pub class_size_max: u32,
    pub random_contacts_mean: f64,
    pub random_degree_min: u32,
    pub random_degree_max: u32,
    pub risk_beta_divisor: f64,
    pub p_household: f64,
    pub p_communal_bonus: f64,
    pub p_class: f64,
    pub p_random: f64,
}

impl Default for PopulationSection {
    fn default() -> Self {
        let c = PopulationConfig::default();
        PopulationSection {
            n: c.n,
            frac_on_campus: c.frac_on_campus,
            frac_in_person: c.frac_in_person,
            student_houses_per_capita: c.student_houses_per_capita,
            student_house_mean: c.student_house_mean,
            student_house_max: c.student_house_max,
            faculty_houses_per_capita: c.faculty_houses_per_capita,
            faculty_house_mean: c.faculty_house_mean,
            faculty_house_max: c.faculty_house_max,
            communal_buildings: c.communal_buildings,
            room_mean: c.room_mean,
            room_max: c.room_max,
            classes_per_capita: c.classes_per_capita,
            class_size_mean: c.class_size_mean,
            class_size_min: c.class_size_min,
            class_size_max: c.class_size_max,
            random_contacts_mean: c.random_contacts_mean,
            random_degree_min: c.random_degree_min,
            random_degree_max: c.random_degree_max,
            risk_beta_divisor: c.risk_beta_divisor,
            p_household: c.probs.household,
            p_communal_bonus: c.probs.communal_bonus,
            p_class: c.probs.class,
            p_random: c.probs.random,
        }
    }
}

impl PopulationSection {
    pub fn to_core(&self) -> PopulationConfig {
        PopulationConfig {
            n: self.n,
            frac_on_campus: self.frac_on_campus,
            frac_in_person: self.frac_in_person,
            student_houses_per_capita: self.student_houses_per_capita,
            student_house_mean: self.student_house_mean,
            student_house_max: self.student_house_max,
            faculty_houses_per_capita: self.faculty_houses_per_capita,
            faculty_house_mean: self.faculty_house_mean,
            faculty_house_max: self.faculty_house_max,
            communal_buildings: self.communal_buildings,
            room_mean: self.room_mean,
            room_max: self.room_max,
            classes_per_capita: self.classes_per_capita,
            class_size_mean: self.class_size_mean,
            class_size_min: self.class_size_min,
            class_size_max: self.class_size_max,
            random_contacts_mean: self.random_contacts_mean,
            random_degree_min: self.random_degree_min,
            random_degree_max: self.random_degree_max,
            risk_beta_divisor: self.risk_beta_divisor,
            probs: LayerProbs {
                household: self.p_household,
                communal_bonus: self.p_communal_bonus,
                class: self.p_class,
                random: self.p_random,
            },
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpidemicSection {
    pub risk_scale: f64,
    pub isolation_factor: f64,
    pub importation_prob: f64,
    pub asymptomatic_factor: f64,
    pub decay_floor: f64,
}

impl Default for EpidemicSection {
    fn default() -> Self {
        let p = EpidemicParams::default();
        EpidemicSection {
            risk_scale: p.risk_scale,
            isolation_factor: p.isolation_factor,
            importation_prob: p.importation_prob,
            asymptomatic_factor: p.asymptomatic_factor,
            decay_floor: p.decay_floor,
        }
    }
}

impl EpidemicSection {
    pub fn to_core(&self) -> EpidemicParams {
        EpidemicParams {
            risk_scale: self.risk_scale,
            isolation_factor: self.isolation_factor,
            importation_prob: self.importation_prob,
            asymptomatic_factor: self.asymptomatic_factor,
            decay_floor: self.decay_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    pub e: usize,
    pub it: usize,
    pub is: usize,
    pub ia: usize,
}

impl Default for SeedSection {
    fn default() -> Self {
        let s = SeedCounts::default();
        SeedSection {
            e: s.e,
            it: s.it,
            is: s.is,
            ia: s.ia,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub budget_fractions: Vec<f64>,
    pub risk_scales: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            budget_fractions: vec![0.01, 0.02, 0.03, 0.04],
            risk_scales: vec![0.5],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub catalog: CatalogSection,
    pub population: PopulationSection,
    pub epidemic: EpidemicSection,
    pub seeds: SeedSection,
    pub sweep: SweepSection,
}

/// One point of an experiment: a budget and a risk scale, with every strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub budget: usize,
    pub risk_scale: f64,
    pub runs: Vec<SurveillanceConfig>,
}

fn parse_mode(s: &str) -> Result<AllocationMode> {
    match s {
        "rank" => Ok(AllocationMode::Rank),
        "sample" => Ok(AllocationMode::Sample),
        other => Err(HarnessError::Config(format!("unknown allocation mode `{other}`"))),
    }
}

fn parse_rule(s: &str) -> Result<DesignKind> {
    match Strategy::from_name(s, 1)? {
        Strategy::Fixed(kind) => Ok(kind),
        _ => Err(HarnessError::Config(format!("`{s}` is not a rule-based design"))),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Budget in tests per day for a given fraction, at least one test when
    /// the fraction is positive.
    pub fn budget_for_fraction(&self, fraction: f64) -> usize {
        let k = (fraction * self.population.n as f64).round() as usize;
        if fraction > 0.0 {
            k.max(1)
        } else {
            0
        }
    }

    pub fn budget(&self) -> Result<usize> {
        match (self.experiment.budget, self.experiment.budget_fraction) {
            (Some(_), Some(_)) => Err(HarnessError::Config(
                "set either `budget` or `budget_fraction`, not both".into(),
            )),
            (Some(k), None) => Ok(k),
            (None, Some(f)) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(HarnessError::Config(format!("budget_fraction must lie in [0, 1], got {f}")));
                }
                Ok(self.budget_for_fraction(f))
            }
            (None, None) => Ok(self.budget_for_fraction(0.03)),
        }
    }

    /// Surveillance configuration of one strategy at a given budget and risk scale.
    pub fn surveillance(&self, strategy: &str, budget: usize, risk_scale: f64) -> Result<SurveillanceConfig> {
        let learners = self
            .catalog
            .learners
            .iter()
            .map(|s| s.parse::<LearnerSpec>().map_err(HarnessError::from))
            .collect::<Result<Vec<_>>>()?;
        let rule_designs = self
            .catalog
            .rule_designs
            .iter()
            .map(|s| parse_rule(s))
            .collect::<Result<Vec<_>>>()?;
        let risk_modes = self
            .catalog
            .risk_modes
            .iter()
            .map(|s| parse_mode(s))
            .collect::<Result<Vec<_>>>()?;
        let mut epidemic = self.epidemic.to_core();
        epidemic.risk_scale = risk_scale;
        let cfg = SurveillanceConfig {
            population: self.population.to_core(),
            epidemic,
            seeds: SeedCounts {
                e: self.seeds.e,
                it: self.seeds.it,
                is: self.seeds.is,
                ia: self.seeds.ia,
            },
            horizon: self.experiment.horizon,
            budget,
            strategy: Strategy::from_name(strategy, self.experiment.loss_window)?,
            learners,
            rule_designs,
            risk_modes,
            use_ensemble: self.experiment.use_ensemble,
            record_tests: self.experiment.record_tests,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn cell(&self, budget: usize, risk_scale: f64) -> Result<Cell> {
        let runs = self
            .experiment
            .strategies
            .iter()
            .map(|s| self.surveillance(s, budget, risk_scale))
            .collect::<Result<Vec<_>>>()?;
        Ok(Cell {
            budget,
            risk_scale,
            runs,
        })
    }

    fn check_common(&self) -> Result<()> {
        if self.experiment.replicates < 1 {
            return Err(HarnessError::Config("replicates must be at least 1".into()));
        }
        if self.experiment.strategies.is_empty() {
            return Err(HarnessError::Config("no strategies listed".into()));
        }
        Ok(())
    }

    /// The single cell of a `run`.
    pub fn run_cell(&self) -> Result<Cell> {
        self.check_common()?;
        self.cell(self.budget()?, self.epidemic.risk_scale)
    }

    /// Cross product of sweep budgets and risk scales, budgets varying slowest.
    pub fn sweep_cells(&self) -> Result<Vec<Cell>> {
        self.check_common()?;
        if self.sweep.budget_fractions.is_empty() || self.sweep.risk_scales.is_empty() {
            return Err(HarnessError::Config("sweep needs at least one budget and one risk scale".into()));
        }
        let mut cells = Vec::new();
        for &f in &self.sweep.budget_fractions {
            if !(0.0..=1.0).contains(&f) {
                return Err(HarnessError::Config(format!("budget fraction must lie in [0, 1], got {f}")));
            }
            for &rs in &self.sweep.risk_scales {
                cells.push(self.cell(self.budget_for_fraction(f), rs)?);
            }
        }
        Ok(cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.budget().unwrap(), 60);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[experiment]\nreplicate = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[nonsense]\n").is_err());
    }

    #[test]
    fn round_trip_through_toml() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn budget_and_fraction_conflict() {
        let c = ExperimentConfig::from_toml("[experiment]\nbudget = 5\nbudget_fraction = 0.01\n").unwrap();
        assert!(matches!(c.budget(), Err(HarnessError::Config(_))));
    }

    #[test]
    fn sweep_is_a_cross_product() {
        let c = ExperimentConfig::from_toml("[sweep]\nbudget_fractions = [0.01, 0.02]\nrisk_scales = [0.4, 0.6]\n").unwrap();
        let cells = c.sweep_cells().unwrap();
        let grid: Vec<(usize, f64)> = cells.iter().map(|c| (c.budget, c.risk_scale)).collect();
        assert_eq!(grid, vec![(20, 0.4), (20, 0.6), (40, 0.4), (40, 0.6)]);
    }

    #[test]
    fn unknown_strategy_is_a_config_error() {
        let c = ExperimentConfig::from_toml("[experiment]\nstrategies = [\"oracle\"]\n").unwrap();
        let e = c.run_cell().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
