use serde::Serialize;

use super::{AutomataError, Letter, PropositionMap};
use crate::barrier::BarrierFn;
use crate::ekf::BeliefState;

/// Named belief predicate. The proposition holds where `holds(b) >= 0`.
#[derive(Debug, Clone)]
pub struct Predicate {
    pub name: String,
    pub holds: BarrierFn,
}

impl Predicate {
    pub fn new(name: impl Into<String>, holds: BarrierFn) -> Self {
        Self { name: name.into(), holds }
    }

    pub fn is_true(&self, b: &BeliefState) -> bool {
        self.holds.value(b) >= 0.0
    }
}

/// Maps beliefs to automaton letters. Bit `j` of a letter is the `j`-th
/// proposition of the automaton alphabet.
#[derive(Debug, Clone, Serialize)]
pub struct Labeler {
    propositions: Vec<String>,
    #[serde(skip)]
    holds: Vec<BarrierFn>,
}

impl Labeler {
    /// Binds each alphabet proposition to its predicate through `map`.
    pub fn new(alphabet: &[String], map: &PropositionMap, predicates: &[Predicate]) -> Result<Self, AutomataError> {
        let holds = alphabet
            .iter()
            .map(|prop| {
                let name = map.predicate_of(prop).ok_or_else(|| AutomataError::UnknownPredicate(prop.clone()))?;
                predicates
                    .iter()
                    .find(|p| p.name == name)
                    .map(|p| p.holds.clone())
                    .ok_or_else(|| AutomataError::UnknownPredicate(name.to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { propositions: alphabet.to_vec(), holds })
    }

    pub fn propositions(&self) -> &[String] {
        &self.propositions
    }

    /// Barrier of each proposition, in alphabet order.
    pub fn holds(&self) -> &[BarrierFn] {
        &self.holds
    }

    pub fn label(&self, b: &BeliefState) -> Letter {
        self.holds.iter().enumerate().filter(|(_, h)| h.value(b) >= 0.0).fold(0, |acc, (j, _)| acc | 1 << j)
    }
}

/// Names of the propositions whose predicates hold at `b`.
pub fn label(b: &BeliefState, predicates: &[Predicate], map: &PropositionMap) -> Vec<String> {
    predicates
        .iter()
        .filter(|p| p.is_true(b))
        .filter_map(|p| map.proposition_of(&p.name).map(str::to_string))
        .collect()
}
