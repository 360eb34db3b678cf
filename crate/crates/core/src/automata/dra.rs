use serde::{Deserialize, Serialize};

use super::AutomataError;

/// Largest supported alphabet, in propositions.
pub const MAX_PROPOSITIONS: usize = 16;

/// Letter `σ ⊆ Π` as a bitmask: bit `j` set when proposition `j` holds.
pub type Letter = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RabinPair {
    /// States the recurring part must avoid.
    pub avoid: Vec<usize>,
    /// States the recurring part must visit.
    pub accept: Vec<usize>,
}

/// Deterministic Rabin automaton with a total transition function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dra {
    states: Vec<String>,
    propositions: Vec<String>,
    /// `transitions[state * num_letters + letter]`.
    transitions: Vec<usize>,
    initial: usize,
    pairs: Vec<RabinPair>,
}

impl Dra {
    pub fn new(
        states: Vec<String>,
        propositions: Vec<String>,
        transitions: Vec<usize>,
        initial: usize,
        pairs: Vec<RabinPair>,
    ) -> Result<Self, AutomataError> {
        if propositions.len() > MAX_PROPOSITIONS {
            return Err(AutomataError::Schema(format!(
                "{} propositions, at most {MAX_PROPOSITIONS} supported",
                propositions.len()
            )));
        }
        let n = states.len();
        if n == 0 || initial >= n {
            return Err(AutomataError::Schema("initial state out of range".into()));
        }
        if transitions.len() != n << propositions.len() {
            return Err(AutomataError::Schema("transition table has the wrong size".into()));
        }
        if transitions.iter().any(|&t| t >= n) {
            return Err(AutomataError::Schema("transition target out of range".into()));
        }
        if pairs.iter().any(|p| p.avoid.iter().chain(&p.accept).any(|&s| s >= n)) {
            return Err(AutomataError::Schema("Rabin pair names an unknown state".into()));
        }
        Ok(Self { states, propositions, transitions, initial, pairs })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }
    pub fn num_letters(&self) -> usize {
        1 << self.propositions.len()
    }
    pub fn state_names(&self) -> &[String] {
        &self.states
    }
    pub fn propositions(&self) -> &[String] {
        &self.propositions
    }
    pub fn initial(&self) -> usize {
        self.initial
    }
    pub fn rabin_pairs(&self) -> &[RabinPair] {
        &self.pairs
    }

    pub fn next(&self, state: usize, letter: Letter) -> usize {
        self.transitions[state * self.num_letters() + letter as usize]
    }

    /// Letters taking `from` to `to`, ascending.
    pub fn letters_between(&self, from: usize, to: usize) -> Vec<Letter> {
        (0..self.num_letters() as Letter).filter(|&l| self.next(from, l) == to).collect()
    }

    /// Distinct successors of `state`, ascending.
    pub fn successors(&self, state: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.num_letters() as Letter).map(|l| self.next(state, l)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn letter_names(&self, letter: Letter) -> Vec<&str> {
        self.propositions
            .iter()
            .enumerate()
            .filter(|(j, _)| letter >> j & 1 == 1)
            .map(|(_, p)| p.as_str())
            .collect()
    }

    pub fn to_file(&self) -> DraFile {
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for s in 0..self.num_states() {
            for l in 0..self.num_letters() as Letter {
                transitions.push(TransitionEntry {
                    from: self.states[s].clone(),
                    letter: self.letter_names(l).into_iter().map(str::to_string).collect(),
                    to: self.states[self.next(s, l)].clone(),
                });
            }
        }
        DraFile {
            states: self.states.clone(),
            alphabet: self.propositions.clone(),
            transitions,
            initial: self.states[self.initial].clone(),
            rabin_pairs: self
                .pairs
                .iter()
                .map(|p| PairEntry {
                    avoid: p.avoid.iter().map(|&s| self.states[s].clone()).collect(),
                    accept: p.accept.iter().map(|&s| self.states[s].clone()).collect(),
                })
                .collect(),
        }
    }
}

/// On-disk automaton. Every `(state, letter)` must appear exactly once; a
/// letter lists the propositions that hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DraFile {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub transitions: Vec<TransitionEntry>,
    pub initial: String,
    pub rabin_pairs: Vec<PairEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub letter: Vec<String>,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    #[serde(rename = "B")]
    pub avoid: Vec<String>,
    #[serde(rename = "C")]
    pub accept: Vec<String>,
}

pub fn load_dra(json: &str) -> Result<Dra, AutomataError> {
    let file: DraFile = serde_json::from_str(json).map_err(|e| AutomataError::Schema(e.to_string()))?;
    dra_from_file(&file)
}

pub fn dra_from_file(file: &DraFile) -> Result<Dra, AutomataError> {
    let k = file.alphabet.len();
    if k > MAX_PROPOSITIONS {
        return Err(AutomataError::Schema(format!("{k} propositions, at most {MAX_PROPOSITIONS} supported")));
    }
    let state_index = |name: &str| -> Result<usize, AutomataError> {
        file.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| AutomataError::Schema(format!("unknown state `{name}`")))
    };
    for (i, s) in file.states.iter().enumerate() {
        if file.states[..i].contains(s) {
            return Err(AutomataError::Schema(format!("duplicate state `{s}`")));
        }
    }
    for (i, p) in file.alphabet.iter().enumerate() {
        if file.alphabet[..i].contains(p) {
            return Err(AutomataError::Schema(format!("duplicate proposition `{p}`")));
        }
    }
    let letters = 1usize << k;
    let mut table: Vec<Option<usize>> = vec![None; file.states.len() * letters];
    for t in &file.transitions {
        let from = state_index(&t.from)?;
        let to = state_index(&t.to)?;
        let mut letter = 0usize;
        for name in &t.letter {
            let j = file
                .alphabet
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| AutomataError::Schema(format!("unknown proposition `{name}`")))?;
            letter |= 1 << j;
        }
        let slot = &mut table[from * letters + letter];
        match slot {
            Some(prev) if *prev != to => {
                return Err(AutomataError::Schema(format!(
                    "conflicting transitions from `{}` on {:?}",
                    t.from, t.letter
                )));
            }
            _ => *slot = Some(to),
        }
    }
    let mut transitions = Vec::with_capacity(table.len());
    for (idx, entry) in table.iter().enumerate() {
        match entry {
            Some(to) => transitions.push(*to),
            None => {
                let state = file.states[idx / letters].clone();
                let letter = (0..k).filter(|j| (idx % letters) >> j & 1 == 1).map(|j| file.alphabet[j].clone()).collect();
                return Err(AutomataError::MissingTransition { state, letter });
            }
        }
    }
    let mut pairs = Vec::new();
    for p in &file.rabin_pairs {
        pairs.push(RabinPair {
            avoid: p.avoid.iter().map(|s| state_index(s)).collect::<Result<_, _>>()?,
            accept: p.accept.iter().map(|s| state_index(s)).collect::<Result<_, _>>()?,
        });
    }
    Dra::new(file.states.clone(), file.alphabet.clone(), transitions, state_index(&file.initial)?, pairs)
}

/// Chain automaton visiting the goals in order while every safety literal
/// holds. `goals` and `safety` index into `propositions`; a safety literal
/// `(j, true)` requires proposition `j`, `(j, false)` forbids it.
pub fn build_sequencing_dra(
    propositions: &[String],
    goals: &[usize],
    safety: &[(usize, bool)],
) -> Result<Dra, AutomataError> {
    if goals.is_empty() {
        return Err(AutomataError::Schema("at least one goal is required".into()));
    }
    let k = propositions.len();
    if goals.iter().chain(safety.iter().map(|(j, _)| j)).any(|&j| j >= k) {
        return Err(AutomataError::Schema("goal or safety index out of range".into()));
    }
    if k > MAX_PROPOSITIONS {
        return Err(AutomataError::Schema(format!("{k} propositions, at most {MAX_PROPOSITIONS} supported")));
    }
    let g = goals.len();
    let acc = g;
    let has_trap = !safety.is_empty();
    let trap = g + 1;
    let mut states: Vec<String> = (0..g).map(|j| format!("q{j}")).collect();
    states.push("acc".into());
    if has_trap {
        states.push("trap".into());
    }
    let letters = 1u32 << k;
    let safe = |l: Letter| safety.iter().all(|&(j, must)| (l >> j & 1 == 1) == must);
    let mut transitions = Vec::with_capacity(states.len() * letters as usize);
    for s in 0..states.len() {
        for l in 0..letters {
            let to = if has_trap && (s == trap || !safe(l)) {
                trap
            } else if s == acc {
                acc
            } else if l >> goals[s] & 1 == 1 {
                s + 1
            } else {
                s
            };
            transitions.push(to);
        }
    }
    let pairs = vec![RabinPair { avoid: if has_trap { vec![trap] } else { vec![] }, accept: vec![acc] }];
    Dra::new(states, propositions.to_vec(), transitions, 0, pairs)
}
