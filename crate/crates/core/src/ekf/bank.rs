use nalgebra::{DMatrix, DVector};

use super::{BeliefState, EkfError, EkfInstance, DEFAULT_INNOVATION_WINDOW};
use crate::sde::{FaultPattern, FaultSet, SystemModel};

/// One filter per fault pattern plus one per pair of patterns that drops
/// the union of both patterns' rows.
///
/// Filters that would drop the same rows are shared, so a pair whose union
/// equals an existing pattern reuses that pattern's filter.
#[derive(Debug, Clone)]
pub struct EkfBank {
    faults: FaultSet,
    filters: Vec<EkfInstance>,
    primary: Vec<usize>,
    /// `leaveout[i][k]` indexes the filter for `rᵢ ∪ r_k`.
    leaveout: Vec<Vec<usize>>,
}

impl EkfBank {
    pub fn new(
        model: &SystemModel,
        faults: &FaultSet,
        estimate: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self, EkfError> {
        Self::with_window(model, faults, estimate, covariance, DEFAULT_INNOVATION_WINDOW)
    }

    pub fn with_window(
        model: &SystemModel,
        faults: &FaultSet,
        estimate: DVector<f64>,
        covariance: DMatrix<f64>,
        window_len: usize,
    ) -> Result<Self, EkfError> {
        if faults.output_dim() != model.output_dim() {
            return Err(EkfError::Dimension(format!(
                "fault set covers {} outputs, model has {}",
                faults.output_dim(),
                model.output_dim()
            )));
        }
        let mut removed: Vec<FaultPattern> = Vec::new();
        let mut filters = Vec::new();
        let mut index_of = |pattern: FaultPattern, filters: &mut Vec<EkfInstance>| -> Result<usize, EkfError> {
            if let Some(idx) = removed.iter().position(|p| *p == pattern) {
                return Ok(idx);
            }
            let ekf = EkfInstance::new(model, &pattern, estimate.clone(), covariance.clone(), window_len)?;
            removed.push(pattern);
            filters.push(ekf);
            Ok(filters.len() - 1)
        };
        let m = faults.len();
        let mut primary = Vec::with_capacity(m);
        for p in faults.patterns() {
            primary.push(index_of(p.clone(), &mut filters)?);
        }
        let mut leaveout = vec![vec![0; m]; m];
        for i in 0..m {
            leaveout[i][i] = primary[i];
            for k in (i + 1)..m {
                let union = faults.patterns()[i].union(&faults.patterns()[k]);
                let idx = index_of(union, &mut filters)?;
                leaveout[i][k] = idx;
                leaveout[k][i] = idx;
            }
        }
        Ok(Self { faults: faults.clone(), filters, primary, leaveout })
    }

    pub fn faults(&self) -> &FaultSet {
        &self.faults
    }

    pub fn num_patterns(&self) -> usize {
        self.primary.len()
    }

    /// Number of distinct filters actually run.
    pub fn num_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn filter(&self, i: usize) -> &EkfInstance {
        &self.filters[self.primary[i]]
    }

    pub fn leaveout_filter(&self, i: usize, k: usize) -> &EkfInstance {
        &self.filters[self.leaveout[i][k]]
    }

    pub fn belief(&self, i: usize) -> &BeliefState {
        self.filter(i).belief()
    }

    pub fn time(&self) -> f64 {
        self.filters[0].time()
    }

    /// Advances every filter with the same input and increment.
    pub fn step(&mut self, u: &DVector<f64>, dy: &DVector<f64>, dt: f64) -> Result<(), EkfError> {
        for ekf in &mut self.filters {
            ekf.step(u, dy, dt).map_err(|e| EkfError::Instance {
                pattern: ekf.pattern().to_string(),
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    /// `‖x̂ᵢ − x̂_k‖`.
    pub fn divergence(&self, i: usize, k: usize) -> f64 {
        (self.filter(i).estimate() - self.filter(k).estimate()).norm()
    }

    /// `‖x̂ᵢ − x̂ᵢₖ‖` against the filter that ignores both patterns.
    pub fn leaveout_divergence(&self, i: usize, k: usize) -> f64 {
        (self.filter(i).estimate() - self.leaveout_filter(i, k).estimate()).norm()
    }

    pub fn windowed_innovation(&self, i: usize) -> f64 {
        self.filter(i).windowed_innovation()
    }
}
