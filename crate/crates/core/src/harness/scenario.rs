use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::automata::{
    build_sequencing_dra, dra_from_file, sequencing_fragment, to_ltl, AcceptingRun, Dra, DraFile, Formula,
    Labeler, Predicate, PropositionMap, SubTask,
};
use crate::barrier::{BarrierFn, PointMap, SynthesisParams};
use crate::sde::{wmr_plant, AttackShape, AttackSignal, FaultPattern, FaultSet, SystemModel, WmrParams, DEFAULT_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    /// Filter bank over the fault set, error margins and fault isolation.
    #[default]
    Proposed,
    /// One filter using every sensor, zero margins.
    BaselineSingleEkf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    /// Unicycles stacked in order, state `(p1, p2, θ)` per robot.
    Wmr { robots: Vec<WmrParams> },
    /// `dx = (Ax + Bu) dt + Σ dW`, `dy = Cx dt + N dV`.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, nu: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSpec {
    /// State indices, 0-based.
    Coordinates(Vec<usize>),
    LookAhead { base: usize, offset: f64 },
}

impl PointSpec {
    fn to_map(&self) -> PointMap {
        match self {
            PointSpec::Coordinates(idx) => PointMap::Coordinates(idx.clone()),
            PointSpec::LookAhead { base, offset } => PointMap::LookAhead { base: *base, offset: *offset },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateSpec {
    /// Holds when any of the points lies in the closed ball.
    Ball { name: String, points: Vec<PointSpec>, center: Vec<f64>, radius: f64 },
    /// Holds on `{normalᵀ p ≥ offset}`.
    Halfspace { name: String, point: PointSpec, normal: Vec<f64>, offset: f64 },
    /// Holds while the covariance trace is at most `bound`.
    TraceAtMost { name: String, bound: f64 },
}

impl PredicateSpec {
    pub fn name(&self) -> &str {
        match self {
            PredicateSpec::Ball { name, .. }
            | PredicateSpec::Halfspace { name, .. }
            | PredicateSpec::TraceAtMost { name, .. } => name,
        }
    }

    fn build(&self, n: usize) -> Result<Predicate, HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(format!("predicate `{}`: {msg}", self.name())));
        let check_point = |p: &PointSpec, dim: usize| -> Result<(), HarnessError> {
            let (top, len) = match p {
                PointSpec::Coordinates(idx) => (idx.iter().max().copied().unwrap_or(0), idx.len()),
                PointSpec::LookAhead { base, offset } => {
                    if !(*offset > 0.0) {
                        return Err(HarnessError::Config(format!("predicate `{}`: offset must be positive", self.name())));
                    }
                    (base + 2, 2)
                }
            };
            if top >= n || len != dim || len == 0 {
                return Err(HarnessError::Config(format!("predicate `{}`: point does not fit the state", self.name())));
            }
            Ok(())
        };
        let holds = match self {
            PredicateSpec::Ball { points, center, radius, .. } => {
                if points.is_empty() {
                    return bad("no points".into());
                }
                if !(*radius > 0.0) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
                let mut balls = Vec::new();
                for p in points {
                    check_point(p, center.len())?;
                    balls.push(BarrierFn::ball_reach(p.to_map(), center, *radius));
                }
                if balls.len() == 1 {
                    balls.pop().expect("one ball")
                } else {
                    BarrierFn::Max(balls)
                }
            }
            PredicateSpec::Halfspace { point, normal, offset, .. } => {
                check_point(point, normal.len())?;
                if !(normal.iter().map(|v| v * v).sum::<f64>() > 0.0) {
                    return bad("normal must be nonzero".into());
                }
                BarrierFn::halfspace(point.to_map(), normal, *offset)
            }
            PredicateSpec::TraceAtMost { bound, .. } => {
                if !(*bound > 0.0) {
                    return bad(format!("bound must be positive, got {bound}"));
                }
                BarrierFn::trace_bound(*bound)
            }
        };
        Ok(Predicate::new(self.name(), holds))
    }
}

/// Either a formula in the sequencing fragment, or an automaton with its
/// proposition bindings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dra: Option<DraFile>,
    /// Path relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dra_file: Option<String>,
    /// Proposition name to predicate name, for automata.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bindings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPattern {
    Uniform(f64),
    Each(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Thresholds {
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    pub eps: PerPattern,
    pub theta: Thresholds,
    pub rho_safety: f64,
    pub rho_reach: f64,
    /// Diagonal of the input cost; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_diag: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    /// Sensor rows, 1-based.
    pub rows: Vec<usize>,
    pub shape: AttackShape,
    #[serde(default)]
    pub start: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_patience() -> usize {
    10
}

fn default_window() -> usize {
    crate::ekf::DEFAULT_INNOVATION_WINDOW
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantSpec,
    pub initial_state: Vec<f64>,
    /// Filter initial estimate; the true initial state when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_estimate: Option<Vec<f64>>,
    /// Diagonal of the filter initial covariance.
    pub initial_covariance: Vec<f64>,
    /// Fault patterns as lists of 1-based sensor rows.
    pub faults: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSpec>,
    /// Index into `faults` of the pattern whose filter audits the run; the
    /// smallest pattern covering the attacked rows when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_pattern: Option<usize>,
    pub predicates: Vec<PredicateSpec>,
    pub task: TaskSource,
    pub synthesis: SynthesisSpec,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub controller: Controller,
    /// Consecutive infeasible steps tolerated before switching runs.
    #[serde(default = "default_patience")]
    pub infeasible_patience: usize,
    #[serde(default = "default_window")]
    pub innovation_window: usize,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// The same scenario under another controller.
    pub fn with_controller(&self, controller: Controller) -> Self {
        Self { controller, ..self.clone() }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, HarnessError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(HarnessError::Config(format!("{what}: ragged matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// A validated scenario with every model object built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: SystemModel,
    pub faults: FaultSet,
    pub attack: AttackSignal,
    /// Pattern whose covariance joins the true state in audit beliefs.
    pub audit_pattern: usize,
    pub predicates: Vec<Predicate>,
    pub map: PropositionMap,
    pub dra: Dra,
    pub labeler: Labeler,
    pub params: SynthesisParams,
    pub initial_state: DVector<f64>,
    pub initial_estimate: DVector<f64>,
    pub initial_covariance: DMatrix<f64>,
}

impl Scenario {
    /// Reads and builds a scenario file; automaton paths resolve against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let config = ScenarioConfig::from_json(&text)?;
        Self::build(config, path.parent())
    }

    pub fn build(config: ScenarioConfig, base_dir: Option<&Path>) -> Result<Self, HarnessError> {
        let cfg_err = |msg: String| HarnessError::Config(msg);
        let model = match &config.plant {
            PlantSpec::Wmr { robots } => {
                let parts = robots.iter().map(wmr_plant).collect::<Result<Vec<_>, _>>()?;
                if parts.is_empty() {
                    return Err(cfg_err("at least one robot is required".into()));
                }
                if parts.len() == 1 {
                    parts.into_iter().next().expect("one robot")
                } else {
                    SystemModel::stack(&parts)?
                }
            }
            PlantSpec::Linear { a, b, c, sigma, nu } => SystemModel::linear(
                matrix(a, "a")?,
                matrix(b, "b")?,
                matrix(c, "c")?,
                matrix(sigma, "sigma")?,
                matrix(nu, "nu")?,
            )?,
        };
        let (n, p, q) = (model.state_dim(), model.input_dim(), model.output_dim());

        if config.initial_state.len() != n || config.initial_covariance.len() != n {
            return Err(cfg_err(format!("initial state and covariance need {n} entries")));
        }
        if config.initial_covariance.iter().any(|v| !(*v >= 0.0)) {
            return Err(cfg_err("initial covariance must be nonnegative".into()));
        }
        let initial_state = DVector::from_column_slice(&config.initial_state);
        let initial_estimate = match &config.initial_estimate {
            Some(e) if e.len() == n => DVector::from_column_slice(e),
            Some(_) => return Err(cfg_err(format!("initial estimate needs {n} entries"))),
            None => initial_state.clone(),
        };
        let initial_covariance = DMatrix::from_diagonal(&DVector::from_column_slice(&config.initial_covariance));
        if !(config.horizon > 0.0) || !(config.dt > 0.0) || config.dt > config.horizon {
            return Err(cfg_err("need 0 < dt <= horizon".into()));
        }
        if config.infeasible_patience == 0 || config.innovation_window == 0 {
            return Err(cfg_err("patience and innovation window must be positive".into()));
        }

        let to_rows = |rows: &[usize]| -> Result<Vec<usize>, HarnessError> {
            rows.iter()
                .map(|&r| {
                    if r == 0 || r > q {
                        Err(HarnessError::Config(format!("sensor row {r} outside 1..={q}")))
                    } else {
                        Ok(r - 1)
                    }
                })
                .collect()
        };
        let baseline = config.controller == Controller::BaselineSingleEkf;
        let patterns = if baseline {
            vec![FaultPattern::empty()]
        } else {
            config.faults.iter().map(|f| to_rows(f).map(FaultPattern::new)).collect::<Result<Vec<_>, _>>()?
        };
        let faults = FaultSet::new(q, patterns)?;
        let m = faults.len();

        let attack = match &config.attack {
            None => AttackSignal::none(q),
            Some(a) => AttackSignal::new(q, to_rows(&a.rows)?, a.shape)?.starting_at(a.start),
        };
        let audit_pattern = if baseline {
            0
        } else {
            match config.true_pattern {
                Some(i) if i < m => i,
                Some(i) => return Err(cfg_err(format!("true pattern {i} outside 0..{m}"))),
                None => (0..m)
                    .filter(|&i| faults.patterns()[i].covers(attack.support()))
                    .min_by_key(|&i| faults.patterns()[i].rows().len())
                    .ok_or_else(|| cfg_err("no fault pattern covers the attacked rows".into()))?,
            }
        };

        let mut predicates = Vec::with_capacity(config.predicates.len());
        for pred in &config.predicates {
            if predicates.iter().any(|p: &Predicate| p.name == pred.name()) {
                return Err(cfg_err(format!("duplicate predicate `{}`", pred.name())));
            }
            predicates.push(pred.build(n)?);
        }

        let (map, dra) = Self::automaton(&config.task, &predicates, base_dir)?;
        let labeler = Labeler::new(dra.propositions(), &map, &predicates)?;

        let s = &config.synthesis;
        let eps = match (&s.eps, baseline) {
            (_, true) => vec![0.0; m],
            (PerPattern::Uniform(e), false) => vec![*e; m],
            (PerPattern::Each(v), false) => v.clone(),
        };
        let theta = match (&s.theta, baseline) {
            (Thresholds::Uniform(t), _) => DMatrix::from_element(m, m, *t),
            (Thresholds::Matrix(rows), false) => matrix(rows, "theta")?,
            (Thresholds::Matrix(rows), true) => DMatrix::from_element(1, 1, rows.first().and_then(|r| r.first()).copied().unwrap_or(1.0)),
        };
        let cost = match &s.cost_diag {
            Some(d) if d.len() == p => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Some(_) => return Err(cfg_err(format!("input cost needs {p} entries"))),
            None => DMatrix::identity(p, p),
        };
        let params = SynthesisParams {
            eps,
            theta,
            rho_safety: s.rho_safety,
            rho_reach: s.rho_reach,
            cost,
            tol: s.tol.unwrap_or(crate::qp::DEFAULT_TOL),
        };
        params.validate(m, p)?;

        Ok(Self {
            config,
            model,
            faults,
            attack,
            audit_pattern,
            predicates,
            map,
            dra,
            labeler,
            params,
            initial_state,
            initial_estimate,
            initial_covariance,
        })
    }

    fn automaton(
        task: &TaskSource,
        predicates: &[Predicate],
        base_dir: Option<&Path>,
    ) -> Result<(PropositionMap, Dra), HarnessError> {
        let known = |name: &str| predicates.iter().any(|p| p.name == name);
        match (&task.formula, &task.dra, &task.dra_file) {
            (Some(text), None, None) => {
                let formula = Formula::parse(text)?;
                if let Some(missing) = formula.atoms().into_iter().find(|a| !known(a)) {
                    return Err(crate::automata::AutomataError::UnknownPredicate(missing).into());
                }
                let (ltl, map) = to_ltl(&formula);
                let seq = sequencing_fragment(&ltl)?;
                let props: Vec<String> = map.propositions().into_iter().map(str::to_string).collect();
                let index = |name: &str| props.iter().position(|p| p == name).expect("proposition from the map");
                let goals: Vec<usize> = seq.goals.iter().map(|g| index(g)).collect();
                let safety: Vec<(usize, bool)> = seq.safety.iter().map(|(s, must)| (index(s), *must)).collect();
                let dra = build_sequencing_dra(&props, &goals, &safety)?;
                Ok((map, dra))
            }
            (None, inline, path) if inline.is_some() != path.is_some() => {
                let file = match (inline, path) {
                    (Some(f), _) => f.clone(),
                    (None, Some(p)) => {
                        let full = base_dir.map_or_else(|| Path::new(p).to_path_buf(), |d| d.join(p));
                        serde_json::from_str(&std::fs::read_to_string(full)?)
                            .map_err(|e| HarnessError::Config(format!("automaton file: {e}")))?
                    }
                    (None, None) => unreachable!("exactly one source"),
                };
                let dra = dra_from_file(&file)?;
                let mut pairs = Vec::new();
                for prop in dra.propositions() {
                    let pred = task
                        .bindings
                        .get(prop)
                        .ok_or_else(|| HarnessError::Config(format!("proposition `{prop}` is not bound")))?;
                    if !known(pred) {
                        return Err(crate::automata::AutomataError::UnknownPredicate(pred.clone()).into());
                    }
                    pairs.push((pred.clone(), prop.clone()));
                }
                Ok((PropositionMap::from_pairs(pairs)?, dra))
            }
            _ => Err(HarnessError::Config("task needs exactly one of formula, dra, dra_file".into())),
        }
    }

    pub fn num_patterns(&self) -> usize {
        self.faults.len()
    }

    pub fn num_steps(&self) -> usize {
        (self.config.horizon / self.config.dt).round() as usize
    }

    /// Sub-tasks of an accepting run of this scenario's automaton.
    pub fn subtasks(&self, run: &AcceptingRun) -> Result<Vec<SubTask>, HarnessError> {
        Ok(crate::automata::decompose(run, &self.dra, self.labeler.holds())?)
    }
}
