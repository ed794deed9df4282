//! Adaptive sequential surveillance on a synthetic campus.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! engine: population and contact-network synthesis, the daily SEIR-style
//! epidemic engine, testing designs expressed as stochastic interventions,
//! online risk learners with an online cross-validated super learner, and the
//! loss-, TMLE- and TMLE-CI-based design selectors that drive the daily
//! surveillance loop. File formats, configuration and parallel Monte Carlo
//! execution live in the `adaptsurv` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod designs;
pub mod epidemic;
pub mod error;
pub mod features;
pub mod learners;
pub mod math;
pub mod online_cv;
pub mod population;
pub mod rng;
pub mod sampling;
pub mod selectors;
pub mod summary;
pub mod surveillance;
pub mod tmle;

pub use designs::{AllocationMode, DesignKind, TestRound, TestingDesign};
pub use epidemic::{Compartment, DiseaseCourse, EpidemicParams, EpidemicState, HealthState};
pub use error::{Error, Result};
pub use features::{FeatureSet, Observations, SummaryFeatures};
pub use learners::{CandidateLearner, LearnerSpec, TrainingBuffer, Weighting};
pub use online_cv::OnlineCvLedger;
pub use population::{AgeBand, AgentAttributes, Group, NetworkLayers, PopulationConfig};
pub use selectors::{DesignEstimate, SelectorKind};
pub use summary::MonteCarloSummary;
pub use surveillance::{DayRecord, Strategy, SurveillanceConfig, TrajectoryRecord};
pub use tmle::TmleFit;
