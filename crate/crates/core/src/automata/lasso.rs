//! Shortest accepting lassos of a Rabin automaton.
//!
//! A lasso is a simple path `q0 … q_{N-1}` plus a back edge to `q_ℓ`. Runs
//! are ordered by `N`, then by the state sequence, then by `ℓ`. A shortest
//! accepting lasso is always simple, so only simple paths are searched.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AutomataError, Dra, Letter};

const UNREACHABLE: usize = usize::MAX / 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptingRun {
    /// `q0 … q_{N-1}`, pairwise distinct.
    pub states: Vec<usize>,
    /// Index of the first cycle state.
    pub loop_start: usize,
    /// Rabin pair the cycle satisfies.
    pub pair: usize,
}

impl AcceptingRun {
    pub fn prefix(&self) -> &[usize] {
        &self.states[..self.loop_start]
    }

    pub fn cycle(&self) -> &[usize] {
        &self.states[self.loop_start..]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Letters enabling each prefix transition, the last one entering the
    /// cycle.
    pub fn prefix_letters(&self, dra: &Dra) -> Vec<Vec<Letter>> {
        (0..self.loop_start).map(|j| dra.letters_between(self.states[j], self.states[j + 1])).collect()
    }

    /// Whether this is an accepting lasso of `dra` for its recorded pair.
    pub fn is_valid(&self, dra: &Dra) -> bool {
        let n = self.states.len();
        if n == 0 || self.loop_start >= n || self.states[0] != dra.initial() || self.pair >= dra.rabin_pairs().len() {
            return false;
        }
        let edge = |a: usize, b: usize| dra.successors(a).contains(&b);
        if !(0..n - 1).all(|j| edge(self.states[j], self.states[j + 1])) || !edge(self.states[n - 1], self.states[self.loop_start]) {
            return false;
        }
        cycle_accepts(dra, self.cycle(), self.pair)
    }
}

pub(crate) fn cycle_accepts(dra: &Dra, cycle: &[usize], pair: usize) -> bool {
    let p = &dra.rabin_pairs()[pair];
    cycle.iter().all(|s| !p.avoid.contains(s)) && cycle.iter().any(|s| p.accept.contains(s))
}

fn accepting_pair(dra: &Dra, cycle: &[usize]) -> Option<usize> {
    (0..dra.rabin_pairs().len()).find(|&s| cycle_accepts(dra, cycle, s))
}

struct Search<'a> {
    dra: &'a Dra,
    succ: Vec<Vec<usize>>,
    /// `dist1[a][b]`: fewest edges (at least one) from `a` to `b`.
    dist1: Vec<Vec<usize>>,
    /// Shortest accepting closed walk through each state, over all pairs.
    cyc: Vec<usize>,
}

impl<'a> Search<'a> {
    fn new(dra: &'a Dra) -> Self {
        let n = dra.num_states();
        let succ: Vec<Vec<usize>> = (0..n).map(|s| dra.successors(s)).collect();
        let dist1 = (0..n).map(|s| bfs(&succ, s, |_| true, true)).collect();
        let mut cyc = vec![UNREACHABLE; n];
        for pair in dra.rabin_pairs() {
            let allowed = |s: usize| !pair.avoid.contains(&s);
            let d0: Vec<Vec<usize>> = (0..n).map(|s| bfs(&succ, s, allowed, false)).collect();
            let d1: Vec<Vec<usize>> = (0..n).map(|s| bfs(&succ, s, allowed, true)).collect();
            for v in (0..n).filter(|&v| allowed(v)) {
                for &c in pair.accept.iter().filter(|&&c| allowed(c)) {
                    let len = if c == v { d1[v][v] } else { d0[v][c].saturating_add(d0[c][v]) };
                    cyc[v] = cyc[v].min(len);
                }
            }
        }
        Self { dra, succ, dist1, cyc }
    }

    /// Lower bound on the total length of any lasso extending `path`.
    fn lower_bound(&self, path: &[usize]) -> usize {
        let w = *path.last().expect("nonempty path");
        let close = path.iter().map(|&q| self.dist1[w][q]).min().unwrap_or(UNREACHABLE);
        let open = (0..self.succ.len())
            .filter(|v| !path.contains(v))
            .map(|v| self.dist1[w][v].saturating_add(self.cyc[v]))
            .min()
            .unwrap_or(UNREACHABLE);
        (path.len() - 1).saturating_add(close.min(open))
    }

    /// Visits lassos of exactly `len` states in order; stops when `visit`
    /// returns true.
    fn walk(&self, path: &mut Vec<usize>, len: usize, visit: &mut impl FnMut(AcceptingRun) -> bool) -> bool {
        if self.lower_bound(path) > len {
            return false;
        }
        if path.len() == len {
            let last = *path.last().expect("nonempty");
            for l in 0..len {
                if self.succ[last].contains(&path[l]) {
                    if let Some(pair) = accepting_pair(self.dra, &path[l..]) {
                        if visit(AcceptingRun { states: path.clone(), loop_start: l, pair }) {
                            return true;
                        }
                    }
                }
            }
            return false;
        }
        let last = *path.last().expect("nonempty");
        for &next in &self.succ[last] {
            if path.contains(&next) {
                continue;
            }
            path.push(next);
            let done = self.walk(path, len, visit);
            path.pop();
            if done {
                return true;
            }
        }
        false
    }
}

fn bfs(succ: &[Vec<usize>], from: usize, allowed: impl Fn(usize) -> bool, at_least_one: bool) -> Vec<usize> {
    let n = succ.len();
    let mut dist = vec![UNREACHABLE; n];
    if !allowed(from) {
        return dist;
    }
    let mut queue = VecDeque::new();
    if at_least_one {
        for &s in &succ[from] {
            if allowed(s) && dist[s] == UNREACHABLE {
                dist[s] = 1;
                queue.push_back(s);
            }
        }
    } else {
        dist[from] = 0;
        queue.push_back(from);
    }
    while let Some(a) = queue.pop_front() {
        for &b in &succ[a] {
            if allowed(b) && dist[b] == UNREACHABLE {
                dist[b] = dist[a] + 1;
                queue.push_back(b);
            }
        }
    }
    dist
}

/// Shortest accepting lasso.
pub fn select_accepting_run(dra: &Dra) -> Result<AcceptingRun, AutomataError> {
    next_accepting_run(dra, &[])?.ok_or(AutomataError::Unsatisfiable)
}

/// Shortest accepting lasso not in `exclude`, or `None` when every simple
/// accepting lasso is excluded. Errors when there is none at all.
pub fn next_accepting_run(dra: &Dra, exclude: &[AcceptingRun]) -> Result<Option<AcceptingRun>, AutomataError> {
    let search = Search::new(dra);
    let q0 = dra.initial();
    let reachable_cycle =
        (0..dra.num_states()).any(|v| (v == q0 || search.dist1[q0][v] < UNREACHABLE) && search.cyc[v] < UNREACHABLE);
    if !reachable_cycle {
        return Err(AutomataError::Unsatisfiable);
    }
    let mut found = None;
    for len in 1..=dra.num_states() {
        let mut path = vec![q0];
        let mut visit = |run: AcceptingRun| {
            let fresh = !exclude.iter().any(|e| e.states == run.states && e.loop_start == run.loop_start);
            if fresh {
                found = Some(run);
            }
            fresh
        };
        if search.walk(&mut path, len, &mut visit) {
            break;
        }
    }
    Ok(found)
}
