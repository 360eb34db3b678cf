use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Estimate and row-major covariance of one filter at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub estimate: Vec<f64>,
    pub covariance: Vec<f64>,
}

impl BeliefRecord {
    pub fn new(estimate: &DVector<f64>, covariance: &DMatrix<f64>) -> Self {
        let n = estimate.len();
        let mut cov = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                cov.push(covariance[(r, c)]);
            }
        }
        Self { estimate: estimate.iter().copied().collect(), covariance: cov }
    }

    pub fn estimate(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.estimate)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.estimate.len();
        DMatrix::from_row_slice(n, n, &self.covariance)
    }

    pub fn covariance_trace(&self) -> f64 {
        let n = self.estimate.len();
        (0..n).map(|i| self.covariance[i * n + i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    /// No pattern was active; the zero input is optimal.
    Unconstrained,
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// What the controller saw and decided at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub subtask: usize,
    pub active_before: Vec<usize>,
    pub after_isolation: Vec<usize>,
    pub active_after: Vec<usize>,
    pub qp_status: QpStatus,
    /// `(pattern, value)` of the finite-time condition for each retained pattern.
    pub sfcbf: Vec<(usize, f64)>,
    /// Whether the reach row of each retained pattern was tight at the solution.
    pub reach_row_active: Vec<(usize, bool)>,
    pub covariance_row_binding: bool,
}

/// Everything recorded along one closed-loop run.
///
/// Series indexed by sample have length `K + 1`. `inputs` and `diagnostics`
/// have length `K`, entry `k` acting on `[t_k, t_{k+1}]`. `outputs[k]` is the
/// increment observed over `[t_{k-1}, t_k]`, with `outputs[0]` zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    /// `beliefs[k][i]` is the belief of pattern `i` at sample `k`.
    pub beliefs: Vec<Vec<BeliefRecord>>,
    /// Active sub-task at each sample.
    pub subtask: Vec<usize>,
    /// Proposition names, bit `j` of a label is proposition `j`.
    pub propositions: Vec<String>,
    pub labels: Vec<u32>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Index into the accepting-run list used at each sample.
    #[serde(default)]
    pub run_index: Vec<usize>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.states[k])
    }

    pub fn num_patterns(&self) -> usize {
        self.beliefs.first().map_or(0, Vec::len)
    }

    /// Checks the length and time-grid invariants.
    pub fn validate(&self) -> Result<(), String> {
        let k1 = self.times.len();
        if k1 == 0 {
            return Err("log is empty".into());
        }
        for (name, len) in [
            ("states", self.states.len()),
            ("outputs", self.outputs.len()),
            ("beliefs", self.beliefs.len()),
            ("subtask", self.subtask.len()),
            ("labels", self.labels.len()),
        ] {
            if len != k1 {
                return Err(format!("{name} has {len} samples, times has {k1}"));
            }
        }
        for (name, len) in [("inputs", self.inputs.len()), ("diagnostics", self.diagnostics.len())] {
            if len + 1 != k1 {
                return Err(format!("{name} has {len} entries, expected {}", k1 - 1));
            }
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("time grid is not strictly increasing".into());
        }
        Ok(())
    }

    /// One row per sample. Columns: `t`, `x0..`, `dy0..`, `u0..` (blank on
    /// the final sample), `subtask`, `label`, then `xhat{i}_{j}..` and
    /// `trP{i}` for every pattern `i`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let n = self.states.first().map_or(0, Vec::len);
        let q = self.outputs.first().map_or(0, Vec::len);
        let p = self.inputs.first().map_or(0, Vec::len);
        let m = self.num_patterns();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|j| format!("x{j}")));
        header.extend((0..q).map(|j| format!("dy{j}")));
        header.extend((0..p).map(|j| format!("u{j}")));
        header.push("subtask".into());
        header.push("label".into());
        for i in 0..m {
            header.extend((0..n).map(|j| format!("xhat{i}_{j}")));
            header.push(format!("trP{i}"));
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for k in 0..self.len() {
            let mut row: Vec<String> = vec![self.times[k].to_string()];
            row.extend(self.states[k].iter().map(f64::to_string));
            row.extend(self.outputs[k].iter().map(f64::to_string));
            match self.inputs.get(k) {
                Some(u) => row.extend(u.iter().map(f64::to_string)),
                None => row.extend(std::iter::repeat_n(String::new(), p)),
            }
            row.push(self.subtask[k].to_string());
            row.push(self.label_names(self.labels[k]).join("|"));
            for b in &self.beliefs[k] {
                row.extend(b.estimate.iter().map(f64::to_string));
                row.push(b.covariance_trace().to_string());
            }
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn label_names(&self, label: u32) -> Vec<&str> {
        self.propositions
            .iter()
            .enumerate()
            .filter(|(j, _)| label >> j & 1 == 1)
            .map(|(_, s)| s.as_str())
            .collect()
    }
}
