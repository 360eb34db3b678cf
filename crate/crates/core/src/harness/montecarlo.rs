use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::report::RunReport;
use super::run::{run, Termination};
use super::{HarnessError, Scenario};

/// One seed of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub termination: Termination,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub satisfied: usize,
    pub violated: usize,
    pub inconclusive: usize,
    pub infeasible_aborts: usize,
    pub diverged: usize,
    pub satisfaction_fraction: f64,
    /// Wilson 95% interval of the satisfaction probability.
    pub wilson_interval: (f64, f64),
    /// Overall minimum safety value at the audit belief, per seed.
    pub safety_minima: Vec<f64>,
    pub estimation_error_sups: Vec<f64>,
    /// Sorted by seed.
    pub per_seed: Vec<SeedResult>,
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

const Z95: f64 = 1.959_963_984_540_054;

pub fn aggregate(mut per_seed: Vec<SeedResult>) -> Aggregate {
    per_seed.sort_by_key(|r| r.seed);
    let count = |f: &dyn Fn(&SeedResult) -> bool| per_seed.iter().filter(|r| f(r)).count();
    let n = per_seed.len();
    let satisfied = count(&|r| r.report.verdict.is_satisfied());
    Aggregate {
        runs: n,
        satisfied,
        violated: count(&|r| r.report.verdict.is_violated()),
        inconclusive: count(&|r| !r.report.verdict.is_satisfied() && !r.report.verdict.is_violated()),
        infeasible_aborts: count(&|r| matches!(r.termination, Termination::InfeasibleAbort { .. })),
        diverged: count(&|r| matches!(r.termination, Termination::Diverged { .. })),
        satisfaction_fraction: if n == 0 { 0.0 } else { satisfied as f64 / n as f64 },
        wilson_interval: wilson_interval(satisfied, n, Z95),
        safety_minima: per_seed
            .iter()
            .map(|r| r.report.safety_min_true.iter().flatten().copied().fold(f64::INFINITY, f64::min))
            .collect(),
        estimation_error_sups: per_seed.iter().map(|r| r.report.max_estimation_error).collect(),
        per_seed,
    }
}

/// Runs every seed, spread over the available cores, and aggregates.
pub fn montecarlo(scenario: &Scenario, seeds: &[u64]) -> Result<Aggregate, HarnessError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Result<SeedResult, HarnessError>>> = Mutex::new(Vec::with_capacity(seeds.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().expect("index lock");
                    let idx = *guard;
                    *guard += 1;
                    idx
                };
                let Some(&seed) = seeds.get(idx) else { break };
                let out = run(scenario, seed).map(|rec| SeedResult { seed, termination: rec.termination, report: rec.report });
                results.lock().expect("result lock").push(out);
            });
        }
    });
    let per_seed = results.into_inner().expect("result lock").into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(per_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_values() {
        let (lo, hi) = wilson_interval(50, 50, Z95);
        assert!((lo - 0.928_652).abs() < 1e-5, "{lo}");
        assert_eq!(hi, 1.0);
        let (lo, hi) = wilson_interval(5, 10, Z95);
        assert!((lo - 0.236_593).abs() < 1e-5 && (hi - 0.763_407).abs() < 1e-5);
    }
}
