//! Reach-avoid sub-tasks, one per prefix transition of an accepting run.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{AcceptingRun, AutomataError, Dra, Letter};
use crate::barrier::BarrierFn;

/// Product term over proposition bits: bits outside `care` are free, bits
/// inside must equal `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Cube {
    pub care: u32,
    pub value: u32,
}

impl Cube {
    pub fn covers(&self, letter: Letter) -> bool {
        letter & self.care == self.value
    }

    /// `(proposition, positive)` literals in proposition order.
    pub fn literals(&self) -> Vec<(usize, bool)> {
        (0..32).filter(|j| self.care >> j & 1 == 1).map(|j| (j, self.value >> j & 1 == 1)).collect()
    }

    fn without(&self, literals: &[(usize, bool)]) -> Cube {
        let mut c = *self;
        for &(j, pos) in literals {
            if c.care >> j & 1 == 1 && (c.value >> j & 1 == 1) == pos {
                c.care &= !(1 << j);
                c.value &= !(1 << j);
            }
        }
        c
    }
}

/// Minimal-ish sum of products for `letters` over `num_props` bits: prime
/// implicants by Quine–McCluskey, then essential primes plus a greedy cover.
pub fn minimal_cover(letters: &[Letter], num_props: usize) -> Vec<Cube> {
    let full = if num_props >= 32 { u32::MAX } else { (1u32 << num_props) - 1 };
    let on: BTreeSet<Letter> = letters.iter().map(|&l| l & full).collect();
    if on.is_empty() {
        return Vec::new();
    }
    let mut level: BTreeSet<Cube> = on.iter().map(|&l| Cube { care: full, value: l }).collect();
    let mut primes = BTreeSet::new();
    while !level.is_empty() {
        let items: Vec<Cube> = level.iter().copied().collect();
        let mut merged = vec![false; items.len()];
        let mut next = BTreeSet::new();
        for a in 0..items.len() {
            for b in a + 1..items.len() {
                let (x, y) = (items[a], items[b]);
                if x.care != y.care {
                    continue;
                }
                let diff = x.value ^ y.value;
                if diff.count_ones() == 1 {
                    next.insert(Cube { care: x.care & !diff, value: x.value & !diff });
                    merged[a] = true;
                    merged[b] = true;
                }
            }
        }
        primes.extend(items.iter().zip(&merged).filter(|(_, &m)| !m).map(|(c, _)| *c));
        level = next;
    }
    let primes: Vec<Cube> = primes.into_iter().collect();
    let mut uncovered = on.clone();
    let mut chosen: Vec<Cube> = Vec::new();
    for &m in &on {
        let covering: Vec<&Cube> = primes.iter().filter(|p| p.covers(m)).collect();
        if covering.len() == 1 && !chosen.contains(covering[0]) {
            chosen.push(*covering[0]);
        }
    }
    uncovered.retain(|&m| !chosen.iter().any(|c| c.covers(m)));
    while !uncovered.is_empty() {
        // Most newly covered letters; fewer literals, then cube order, on ties.
        let best = primes
            .iter()
            .filter(|p| !chosen.contains(p))
            .max_by(|a, b| {
                let ca = uncovered.iter().filter(|&&m| a.covers(m)).count();
                let cb = uncovered.iter().filter(|&&m| b.covers(m)).count();
                ca.cmp(&cb).then(b.care.count_ones().cmp(&a.care.count_ones())).then(b.cmp(a))
            })
            .copied()
            .expect("primes cover every letter");
        chosen.push(best);
        uncovered.retain(|&m| !best.covers(m));
    }
    chosen.sort();
    chosen
}

fn literal(holds: &[BarrierFn], (j, positive): (usize, bool)) -> BarrierFn {
    if positive {
        holds[j].clone()
    } else {
        holds[j].negate()
    }
}

/// Barrier whose nonnegative set is the union of `cubes`.
fn cover_barrier(cubes: &[Cube], holds: &[BarrierFn]) -> BarrierFn {
    let terms: Vec<BarrierFn> = cubes
        .iter()
        .map(|c| {
            let mut lits: Vec<BarrierFn> = c.literals().into_iter().map(|l| literal(holds, l)).collect();
            match lits.len() {
                0 => BarrierFn::Const(1.0),
                1 => lits.pop().expect("one literal"),
                _ => BarrierFn::Min(lits),
            }
        })
        .collect();
    match terms.len() {
        0 => BarrierFn::Const(-1.0),
        1 => terms.into_iter().next().expect("one term"),
        _ => {
            if terms.iter().any(|t| matches!(t, BarrierFn::Const(v) if *v > 0.0)) {
                BarrierFn::Const(1.0)
            } else {
                BarrierFn::Max(terms)
            }
        }
    }
}

/// One transition `from -> to` of the run prefix.
#[derive(Debug, Clone, Serialize)]
pub struct SubTask {
    pub index: usize,
    pub from: usize,
    pub to: usize,
    /// Letters looping at `from`.
    pub stay_letters: Vec<Letter>,
    /// Letters moving `from -> to`.
    pub advance_letters: Vec<Letter>,
    /// Letters looping at `to`.
    pub next_stay_letters: Vec<Letter>,
    pub safety_cover: Vec<Cube>,
    pub goal_cover: Vec<Cube>,
    /// Nonnegative exactly on stay or advance letters.
    #[serde(skip)]
    pub safety: BarrierFn,
    /// Nonnegative on advance letters wherever `safety` holds.
    #[serde(skip)]
    pub goal: BarrierFn,
    pub warnings: Vec<String>,
}

impl SubTask {
    /// Whether `letter` keeps the safety set, by letter algebra.
    pub fn safe_letter(&self, letter: Letter) -> bool {
        self.stay_letters.contains(&letter) || self.advance_letters.contains(&letter)
    }
}

impl fmt::Display for SubTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] q{} -> q{}: keep {} ; reach {}", self.index, self.from, self.to, self.safety, self.goal)
    }
}

/// Splits the prefix of `run` into reach-avoid sub-tasks. `holds[j]` is the
/// barrier of proposition `j` of the automaton alphabet.
pub fn decompose(run: &AcceptingRun, dra: &Dra, holds: &[BarrierFn]) -> Result<Vec<SubTask>, AutomataError> {
    let k = dra.propositions().len();
    if holds.len() != k {
        return Err(AutomataError::Schema(format!("{} predicate barriers for {k} propositions", holds.len())));
    }
    if !run.is_valid(dra) {
        return Err(AutomataError::Schema("run is not an accepting lasso of the automaton".into()));
    }
    let names = dra.state_names();
    let mut tasks = Vec::with_capacity(run.loop_start);
    for j in 0..run.loop_start {
        let (from, to) = (run.states[j], run.states[j + 1]);
        let stay = dra.letters_between(from, from);
        let advance = dra.letters_between(from, to);
        let next_stay = dra.letters_between(to, to);
        let mut warnings = Vec::new();
        if stay.is_empty() {
            warnings.push(format!("state `{}` has no self-loop; the sub-task must advance at once", names[from]));
        }
        let keep: Vec<Letter> = stay.iter().chain(&advance).copied().collect();
        let safety_cover = minimal_cover(&keep, k);
        let mut goal_cover = minimal_cover(&advance, k);
        if let [single] = safety_cover.as_slice() {
            let implied = single.literals();
            goal_cover = goal_cover.iter().map(|c| c.without(&implied)).collect();
            goal_cover.sort();
            goal_cover.dedup();
        }
        tasks.push(SubTask {
            index: j,
            from,
            to,
            safety: cover_barrier(&safety_cover, holds),
            goal: cover_barrier(&goal_cover, holds),
            stay_letters: stay,
            advance_letters: advance,
            next_stay_letters: next_stay,
            safety_cover,
            goal_cover,
            warnings,
        });
    }
    Ok(tasks)
}
