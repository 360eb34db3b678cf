//! Verdicts of sampled label sequences against a chosen accepting run.

use serde::{Deserialize, Serialize};

use super::{AcceptingRun, Dra, Letter};
use crate::sde::TrajectoryLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    /// Entered an avoid state of the run's Rabin pair.
    Safety,
    /// Left the run some other way.
    Deviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Reached the cycle of the run at `step`.
    Satisfied { step: usize },
    Violated { step: usize, reason: ViolationReason },
    /// Still on the prefix when the log ends.
    Inconclusive { horizon: usize },
}

impl Verdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Verdict::Satisfied { .. })
    }

    pub fn is_violated(&self) -> bool {
        matches!(self, Verdict::Violated { .. })
    }
}

/// Follows a letter sequence along the prefix of a run, one sample at a
/// time. Repeated letters are self-loops; a letter that moves to the next
/// prefix state is re-read there while it keeps advancing, so one sample
/// may cover several crossings.
#[derive(Debug, Clone)]
pub struct TraceMonitor<'a> {
    run: AcceptingRun,
    dra: &'a Dra,
    pos: usize,
    steps: usize,
    verdict: Option<Verdict>,
}

impl<'a> TraceMonitor<'a> {
    pub fn new(run: AcceptingRun, dra: &'a Dra) -> Self {
        let verdict = (run.loop_start == 0).then_some(Verdict::Satisfied { step: 0 });
        Self { run, dra, pos: 0, steps: 0, verdict }
    }

    /// Index of the current prefix state in the run.
    pub fn position(&self) -> usize {
        self.pos
    }

    /// The decisive verdict, once reached. Later letters are ignored.
    pub fn verdict(&self) -> Option<Verdict> {
        self.verdict
    }

    pub fn push(&mut self, letter: Letter) -> Option<Verdict> {
        let step = self.steps;
        self.steps += 1;
        if self.verdict.is_some() {
            return self.verdict;
        }
        let mut first = true;
        loop {
            let state = self.run.states[self.pos];
            let next = self.dra.next(state, letter);
            if next == self.run.states[self.pos + 1] && next != state {
                self.pos += 1;
                if self.pos == self.run.loop_start {
                    self.verdict = Some(Verdict::Satisfied { step });
                    return self.verdict;
                }
                first = false;
                continue;
            }
            if next == state || !first {
                // A re-read that does not advance is left to the next sample.
                return None;
            }
            let avoid = &self.dra.rabin_pairs()[self.run.pair].avoid;
            let reason = if avoid.contains(&next) { ViolationReason::Safety } else { ViolationReason::Deviation };
            self.verdict = Some(Verdict::Violated { step, reason });
            return self.verdict;
        }
    }

    /// Final verdict after the last sample.
    pub fn finish(&self) -> Verdict {
        self.verdict.unwrap_or(Verdict::Inconclusive { horizon: self.steps })
    }
}

pub fn check_letters(letters: &[Letter], run: &AcceptingRun, dra: &Dra) -> Verdict {
    let mut monitor = TraceMonitor::new(run.clone(), dra);
    for &l in letters {
        if let Some(v) = monitor.push(l) {
            return v;
        }
    }
    monitor.finish()
}

/// Verdict of the recorded labels of `log`.
pub fn check_trace(log: &TrajectoryLog, run: &AcceptingRun, dra: &Dra) -> Verdict {
    check_letters(&log.labels, run, dra)
}
