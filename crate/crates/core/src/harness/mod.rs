//! Scenario files, the closed-loop runner, Monte Carlo batches, reports,
//! offline verification and plot output.

mod montecarlo;
mod plots;
mod report;
mod run;
mod scenario;

use thiserror::Error;

pub use montecarlo::{aggregate, montecarlo, wilson_interval, Aggregate, SeedResult};
pub use plots::{emit_plots, SvgFrame};
pub use report::{summarize, verify, IsolationEvent, RunReport};
pub use run::{audit_belief, run, RunRecord, Termination};
pub use scenario::{
    AttackSpec, Controller, PerPattern, PlantSpec, PointSpec, PredicateSpec, Scenario, ScenarioConfig, TaskSource,
    SynthesisSpec, Thresholds,
};

use crate::automata::AutomataError;
use crate::barrier::BarrierError;
use crate::ekf::EkfError;
use crate::sde::SdeError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Plant(#[from] SdeError),
    #[error(transparent)]
    Filter(#[from] EkfError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Automata(#[from] AutomataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("plot: {0}")]
    Plot(String),
}
