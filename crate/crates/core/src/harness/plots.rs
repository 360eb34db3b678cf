use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::run::{audit_belief, RunRecord};
use super::scenario::{PlantSpec, PredicateSpec};
use super::{HarnessError, Scenario};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const PAD: f64 = 20.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Which pair of state coordinates forms a planar track; `None` in the
/// first slot plots against time.
fn tracks(plant: &PlantSpec, n: usize) -> Vec<(Option<usize>, usize)> {
    match plant {
        PlantSpec::Wmr { robots } => (0..robots.len()).map(|r| (Some(3 * r), 3 * r + 1)).collect(),
        PlantSpec::Linear { .. } if n >= 2 => vec![(Some(0), 1)],
        PlantSpec::Linear { .. } => vec![(None, 0)],
    }
}

/// Affine map from plan coordinates to SVG pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgFrame {
    pub scale: f64,
    pub xmin: f64,
    pub ymax: f64,
    pub pad: f64,
}

impl SvgFrame {
    pub fn to_svg(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.xmin) * self.scale + self.pad, (self.ymax - y) * self.scale + self.pad)
    }
}

/// Writes trajectory, covariance and barrier CSVs plus one SVG for a run.
/// Returns the written paths.
pub fn emit_plots(record: &RunRecord, scenario: &Scenario, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, HarnessError> {
    let log = &record.log;
    if log.is_empty() {
        return Err(HarnessError::Plot("log is empty".into()));
    }
    log.validate().map_err(HarnessError::Plot)?;
    let n = log.states[0].len();
    let m = log.num_patterns();
    let tracks = tracks(&record.scenario.plant, n);
    let coord = |v: &[f64], k: usize, (cx, cy): (Option<usize>, usize)| (cx.map_or(log.times[k], |c| v[c]), v[cy]);

    let mut traj = String::from("t");
    for (r, _) in tracks.iter().enumerate() {
        let _ = write!(traj, ",track{r}_x,track{r}_y");
        for i in 0..m {
            let _ = write!(traj, ",track{r}_belief{i}_x,track{r}_belief{i}_y");
        }
    }
    traj.push('\n');
    let mut cov = String::from("t");
    for i in 0..m {
        let _ = write!(cov, ",trP{i}");
    }
    cov.push('\n');
    let mut bar = String::from("t,subtask,safety,goal\n");
    let mut task_sets = vec![None; record.runs.len()];
    for k in 0..log.len() {
        let _ = write!(traj, "{}", log.times[k]);
        for &tr in &tracks {
            let (x, y) = coord(&log.states[k], k, tr);
            let _ = write!(traj, ",{x},{y}");
            for b in &log.beliefs[k] {
                let (x, y) = coord(&b.estimate, k, tr);
                let _ = write!(traj, ",{x},{y}");
            }
        }
        traj.push('\n');
        let _ = write!(cov, "{}", log.times[k]);
        for b in &log.beliefs[k] {
            let _ = write!(cov, ",{}", b.covariance_trace());
        }
        cov.push('\n');
        let r = log.run_index.get(k).copied().unwrap_or(0);
        if let Some(run) = record.runs.get(r) {
            if task_sets[r].is_none() {
                task_sets[r] = Some(scenario.subtasks(run)?);
            }
            let tasks = task_sets[r].as_ref().expect("filled above");
            if let Some(task) = tasks.get(log.subtask[k].min(tasks.len().saturating_sub(1))) {
                let b = audit_belief(&log.state(k), &log.beliefs[k][scenario.audit_pattern.min(m - 1)]);
                let _ = writeln!(bar, "{},{},{},{}", log.times[k], task.index, task.safety.value(&b), task.goal.value(&b));
            }
        }
    }

    // Regions: balls with planar centers.
    let circles: Vec<(&str, f64, f64, f64)> = record
        .scenario
        .predicates
        .iter()
        .filter_map(|p| match p {
            PredicateSpec::Ball { name, center, radius, .. } if center.len() == 2 => {
                Some((name.as_str(), center[0], center[1], *radius))
            }
            _ => None,
        })
        .collect();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut grow = |x: f64, y: f64| {
        if x.is_finite() && y.is_finite() {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    };
    for k in 0..log.len() {
        for &tr in &tracks {
            let (x, y) = coord(&log.states[k], k, tr);
            grow(x, y);
            for b in &log.beliefs[k] {
                let (x, y) = coord(&b.estimate, k, tr);
                grow(x, y);
            }
        }
    }
    if tracks.iter().all(|t| t.0.is_some()) {
        for &(_, cx, cy, r) in &circles {
            grow(cx - r, cy - r);
            grow(cx + r, cy + r);
        }
    }
    let span = (xmax - xmin).max(ymax - ymin).max(1e-9);
    let scale = ((WIDTH - 2.0 * PAD) / (xmax - xmin).max(span * 1e-3)).min((HEIGHT - 2.0 * PAD) / (ymax - ymin).max(span * 1e-3));
    let frame = SvgFrame { scale, xmin, ymax, pad: PAD };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" data-scale="{scale}" data-xmin="{xmin}" data-ymax="{ymax}" data-pad="{PAD}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if tracks.iter().all(|t| t.0.is_some()) {
        for (name, cx, cy, r) in &circles {
            let (sx, sy) = frame.to_svg(*cx, *cy);
            let _ = writeln!(
                svg,
                r##"<circle class="region" data-name="{name}" cx="{sx:.4}" cy="{sy:.4}" r="{:.4}" fill="none" stroke="#555" stroke-dasharray="4 3"/>"##,
                r * scale
            );
        }
    }
    let polyline = |points: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut s = String::new();
        for (x, y) in points {
            let (sx, sy) = frame.to_svg(x, y);
            let _ = write!(s, "{sx:.4},{sy:.4} ");
        }
        s.trim_end().to_string()
    };
    for (r, &tr) in tracks.iter().enumerate() {
        for i in 0..m {
            let pts = polyline(&mut (0..log.len()).map(|k| coord(&log.beliefs[k][i].estimate, k, tr)));
            let _ = writeln!(
                svg,
                r#"<polyline class="belief" data-track="{r}" data-pattern="{i}" points="{pts}" fill="none" stroke="{}" stroke-width="1" opacity="0.7"/>"#,
                PALETTE[i % PALETTE.len()]
            );
        }
        let pts = polyline(&mut (0..log.len()).map(|k| coord(&log.states[k], k, tr)));
        let _ = writeln!(svg, r#"<polyline class="true" data-track="{r}" points="{pts}" fill="none" stroke="black" stroke-width="2"/>"#);
    }
    svg.push_str("</svg>\n");

    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (suffix, body) in [("trajectory.csv", traj), ("covariance.csv", cov), ("barrier.csv", bar), ("svg", svg)] {
        let path = if suffix == "svg" { dir.join(format!("{stem}.svg")) } else { dir.join(format!("{stem}_{suffix}")) };
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
