use std::collections::BTreeSet;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::SdeError;

/// Time profile of the injected signal on each attacked row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackShape {
    Zero,
    ConstantBias { magnitude: f64 },
    Ramp { slope: f64 },
    Sinusoid { amplitude: f64, frequency: f64, #[serde(default)] phase: f64 },
}

impl AttackShape {
    fn value(&self, elapsed: f64) -> f64 {
        match *self {
            AttackShape::Zero => 0.0,
            AttackShape::ConstantBias { magnitude } => magnitude,
            AttackShape::Ramp { slope } => slope * elapsed,
            AttackShape::Sinusoid { amplitude, frequency, phase } => {
                amplitude * (std::f64::consts::TAU * frequency * elapsed + phase).sin()
            }
        }
    }
}

/// Additive sensor attack on a fixed set of output rows (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSignal {
    output_dim: usize,
    support: Vec<usize>,
    shape: AttackShape,
    start: f64,
}

impl AttackSignal {
    pub fn none(output_dim: usize) -> Self {
        Self { output_dim, support: Vec::new(), shape: AttackShape::Zero, start: 0.0 }
    }

    pub fn new(
        output_dim: usize,
        support: impl IntoIterator<Item = usize>,
        shape: AttackShape,
    ) -> Result<Self, SdeError> {
        let support: BTreeSet<usize> = support.into_iter().collect();
        if let Some(&bad) = support.iter().find(|&&r| r >= output_dim) {
            return Err(SdeError::InvalidParameter(format!(
                "attacked row {bad} out of range for {output_dim} outputs"
            )));
        }
        Ok(Self { output_dim, support: support.into_iter().collect(), shape, start: 0.0 })
    }

    /// Signal is zero before `start`; ramps and sinusoids measure time from it.
    pub fn starting_at(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn shape(&self) -> AttackShape {
        self.shape
    }

    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        let mut a = DVector::zeros(self.output_dim);
        if t < self.start {
            return a;
        }
        let v = self.shape.value(t - self.start);
        for &r in &self.support {
            a[r] = v;
        }
        a
    }
}

/// Set of output rows (0-based) an adversary may corrupt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultPattern {
    rows: Vec<usize>,
}

impl FaultPattern {
    pub fn new(rows: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = rows.into_iter().collect();
        Self { rows: set.into_iter().collect() }
    }

    pub fn empty() -> Self {
        Self { rows: Vec::new() }
    }

    /// Sorted, duplicate-free removed rows.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn contains(&self, row: usize) -> bool {
        self.rows.binary_search(&row).is_ok()
    }

    pub fn union(&self, other: &FaultPattern) -> FaultPattern {
        FaultPattern::new(self.rows.iter().chain(other.rows.iter()).copied())
    }

    /// Rows of `0..q` not in the pattern.
    pub fn retained(&self, q: usize) -> Vec<usize> {
        (0..q).filter(|r| !self.contains(*r)).collect()
    }

    pub fn covers(&self, rows: &[usize]) -> bool {
        rows.iter().all(|r| self.contains(*r))
    }
}

impl std::fmt::Display for FaultPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rows: Vec<String> = self.rows.iter().map(|r| (r + 1).to_string()).collect();
        write!(f, "{{{}}}", rows.join(","))
    }
}

/// Distinct fault patterns over `q` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSet {
    output_dim: usize,
    patterns: Vec<FaultPattern>,
}

impl FaultSet {
    pub fn new(output_dim: usize, patterns: Vec<FaultPattern>) -> Result<Self, SdeError> {
        if patterns.is_empty() {
            return Err(SdeError::InvalidParameter("fault set is empty".into()));
        }
        for (i, p) in patterns.iter().enumerate() {
            if let Some(&r) = p.rows().iter().find(|&&r| r >= output_dim) {
                return Err(SdeError::InvalidParameter(format!(
                    "pattern {i} names row {r}, only {output_dim} outputs"
                )));
            }
            if patterns[..i].contains(p) {
                return Err(SdeError::InvalidParameter(format!("pattern {i} ({p}) is a duplicate")));
            }
        }
        Ok(Self { output_dim, patterns })
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn patterns(&self) -> &[FaultPattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}
