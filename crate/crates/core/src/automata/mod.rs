//! Belief-space temporal formulas, Rabin automata, accepting runs and their
//! decomposition into reach-avoid sub-tasks.

mod decompose;
mod dra;
mod formula;
mod lasso;
mod predicate;
mod trace;

use thiserror::Error;

pub use decompose::{decompose, minimal_cover, Cube, SubTask};
pub use dra::{build_sequencing_dra, dra_from_file, load_dra, Dra, DraFile, Letter, PairEntry, RabinPair, TransitionEntry, MAX_PROPOSITIONS};
pub use formula::{sequencing_fragment, to_ltl, Formula, PropositionMap, Sequencing};
pub use lasso::{next_accepting_run, select_accepting_run, AcceptingRun};
pub use predicate::{label, Labeler, Predicate};
pub use trace::{check_letters, check_trace, TraceMonitor, Verdict, ViolationReason};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AutomataError {
    #[error("formula parse error: {0}")]
    Parse(String),
    #[error("unsupported formula: {0}")]
    Unsupported(String),
    #[error("automaton schema error: {0}")]
    Schema(String),
    #[error("no transition from state `{state}` on letter {letter:?}")]
    MissingTransition { state: String, letter: Vec<String> },
    #[error("task is unsatisfiable: no accepting lasso")]
    Unsatisfiable,
    #[error("no predicate bound to `{0}`")]
    UnknownPredicate(String),
}
