//! Runs (method, version) combinations on the built-in problems and collects
//! the report rows.

use std::fmt::Write as _;
use std::io;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{DaeError, Result};
use crate::geom::{propagate_flow, FlowProblem};
use crate::inherent::{LinearInherent, NonlinearInherent, QKind, QStrategy};
use crate::integrate::{
    integrate, IntegratorSpec, LinearDirect, Method, NonlinearDirect, Problem, StepMode,
    Trajectory, Version,
};
use crate::problems::{Geometric, Pendulum, ProblemKind, ProblemSpec, Wensch};

/// One requested combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Combination {
    pub method: Method,
    pub version: Version,
    pub stages: usize,
}

impl Combination {
    pub fn new(method: Method, version: Version, stages: usize) -> Self {
        Self {
            method,
            version,
            stages,
        }
    }
}

/// The rows of the published table for each problem.
pub fn default_combinations(kind: ProblemKind) -> Vec<Combination> {
    use Method::*;
    let c = Combination::new;
    let ode = Version::Ode;
    match kind {
        ProblemKind::Wensch => vec![
            c(ImplicitEuler, Version::Direct, 1),
            c(ImplicitEuler, ode(QKind::Inherent), 1),
            c(ImplicitEuler, ode(QKind::SpinStabilized), 1),
            c(ImplicitEuler, ode(QKind::Rotated), 1),
        ],
        ProblemKind::Pendulum => vec![
            c(GaussLobatto, Version::Direct, 2),
            c(Radau, Version::Direct, 4),
            c(DormandPrince, ode(QKind::Inherent), 7),
            c(DormandPrince, ode(QKind::Inherent), 13),
            c(Gauss, ode(QKind::Inherent), 2),
            c(Radau, ode(QKind::Inherent), 4),
        ],
        ProblemKind::Self3 | ProblemKind::Skew4 | ProblemKind::Indef5 => {
            let structured = if kind == ProblemKind::Self3 {
                QKind::SelfAdjoint
            } else {
                QKind::SkewAdjoint
            };
            vec![
                c(GaussLobatto, Version::Direct, 2),
                c(DormandPrince, ode(QKind::Inherent), 7),
                c(Gauss, ode(QKind::Rotated), 2),
                c(Gauss, ode(structured), 2),
            ]
        }
    }
}

pub fn default_t_end(kind: ProblemKind) -> f64 {
    match kind {
        ProblemKind::Wensch => 1.0,
        ProblemKind::Pendulum => 10.0,
        _ => 200.0 * std::f64::consts::PI,
    }
}

pub fn default_mode(kind: ProblemKind) -> StepMode {
    if kind.is_geometric() {
        StepMode::Fixed(1000)
    } else {
        StepMode::Adaptive(1e-5)
    }
}

/// One line of a report.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub method: String,
    pub version: String,
    pub stages: String,
    pub order: usize,
    pub steps: Option<usize>,
    pub max_error: Option<f64>,
    pub geometric_error: Option<f64>,
    /// `max |x3² + x4² − 1|` (pendulum only).
    #[serde(skip)]
    pub constraint_residual: Option<f64>,
    pub wall_ms: f64,
    #[serde(skip)]
    pub failure: Option<String>,
}

impl RunRow {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub problem: ProblemKind,
    pub rows: Vec<RunRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into())
}

impl RunReport {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(RunRow::failed)
    }

    /// Aligned text table.
    pub fn to_text(&self) -> String {
        let pendulum = self.problem == ProblemKind::Pendulum;
        let mut header = vec![
            "method", "version", "stages", "order", "steps", "max_error", "geom_error",
        ];
        if pendulum {
            header.push("constraint");
        }
        header.push("wall_ms");
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let mut l = vec![
                r.method.clone(),
                r.version.clone(),
                r.stages.clone(),
                r.order.to_string(),
                r.steps.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
                fmt_opt(r.max_error),
                fmt_opt(r.geometric_error),
            ];
            if pendulum {
                l.push(fmt_opt(r.constraint_residual));
            }
            l.push(format!("{:.1}", r.wall_ms));
            lines.push(l);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("problem: {}\n", self.problem);
        for (i, l) in lines.iter().enumerate() {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        for r in &self.rows {
            if let Some(f) = &r.failure {
                let _ = writeln!(out, "FAILED {} {}: {f}", r.method, r.version);
            }
        }
        out
    }

    /// CSV with columns
    /// `method,version,stages,order,steps,max_error,geometric_error,wall_ms`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io_err = |e: csv::Error| DaeError::Config(format!("csv: {e}"));
        for r in &self.rows {
            wr.serialize(r).map_err(io_err)?;
        }
        if self.rows.is_empty() {
            wr.write_record([
                "method",
                "version",
                "stages",
                "order",
                "steps",
                "max_error",
                "geometric_error",
                "wall_ms",
            ])
            .map_err(io_err)?;
        }
        wr.flush().map_err(|e| DaeError::Config(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Outcome of one row before formatting.
#[derive(Debug, Clone, Default)]
struct Measured {
    steps: usize,
    max_error: Option<f64>,
    geometric_error: Option<f64>,
    constraint_residual: Option<f64>,
}

fn strategy_for(problem: &ProblemSpec, kind: QKind) -> Result<QStrategy> {
    if kind != QKind::Prescribed {
        return Ok(QStrategy::new(kind));
    }
    if problem.kind.is_geometric() {
        Ok(QStrategy::prescribed(Geometric::from_spec(problem)?.prescribed_map()))
    } else {
        Err(DaeError::Config(format!(
            "PRESCRIBED needs a user map for Q; {} has none built in",
            problem.kind
        )))
    }
}

fn max_error(traj: &Trajectory, exact: &[DVector<f64>]) -> f64 {
    traj.states
        .iter()
        .zip(exact)
        .map(|(x, e)| (x - e).amax())
        .fold(0.0, f64::max)
}

fn measure(
    problem: &ProblemSpec,
    spec: &IntegratorSpec,
    t_end: f64,
) -> Result<Measured> {
    match problem.kind {
        ProblemKind::Wensch => {
            let w = Wensch::from_spec(problem);
            let x0 = Wensch::exact(0.0);
            let traj = match spec.version {
                Version::Direct => {
                    let mut dae = LinearDirect::new(w.reducer());
                    integrate(spec, Problem::Direct(&mut dae), 0.0, t_end, &x0)?
                }
                Version::Ode(kind) => {
                    let mut sys = LinearInherent::new(w.reducer(), strategy_for(problem, kind)?)?;
                    integrate(spec, Problem::Inherent(&mut sys), 0.0, t_end, &x0)?
                }
            };
            let exact: Vec<_> = traj.times.iter().map(|&t| Wensch::exact(t)).collect();
            Ok(Measured {
                steps: traj.steps_taken,
                max_error: Some(max_error(&traj, &exact)),
                ..Measured::default()
            })
        }
        ProblemKind::Pendulum => {
            let dae = Arc::new(Pendulum);
            let x0 = Pendulum::initial_state();
            let traj = match spec.version {
                Version::Direct => {
                    let mut d = NonlinearDirect::new(dae);
                    integrate(spec, Problem::Direct(&mut d), 0.0, t_end, &x0)?
                }
                Version::Ode(kind) => {
                    let mut sys = NonlinearInherent::new(dae, strategy_for(problem, kind)?)?;
                    integrate(spec, Problem::Inherent(&mut sys), 0.0, t_end, &x0)?
                }
            };
            let exact = Pendulum::reference(&traj.times)?;
            let residual = traj
                .states
                .iter()
                .map(Pendulum::constraint_residual)
                .fold(0.0, f64::max);
            Ok(Measured {
                steps: traj.steps_taken,
                max_error: Some(max_error(&traj, &exact)),
                constraint_residual: Some(residual),
                ..Measured::default()
            })
        }
        _ => {
            let geo = Geometric::from_spec(problem)?;
            let strategy = match spec.version {
                Version::Ode(kind) => strategy_for(problem, kind)?,
                Version::Direct => QStrategy::new(QKind::Inherent),
            };
            let flow = FlowProblem {
                reducer: geo.reducer(),
                group: geo.group_matrix(),
                coordinates: Some(Arc::new(move |t| geo.q_problem(t).0)),
                strategy,
            };
            let report = propagate_flow(&flow, spec, 0.0, t_end)?;
            Ok(Measured {
                steps: report.steps,
                geometric_error: Some(report.max_error),
                ..Measured::default()
            })
        }
    }
}

/// Runs one combination; failures are captured in the row.
pub fn run_row(problem: &ProblemSpec, combo: Combination, mode: StepMode, t_end: f64) -> RunRow {
    let label_spec = IntegratorSpec {
        method: combo.method,
        stages: combo.stages,
        mode,
        version: combo.version,
    };
    let mut row = RunRow {
        method: combo.method.name().to_string(),
        version: combo.version.name().to_string(),
        stages: label_spec.stage_label(),
        order: if label_spec.validate().is_ok() {
            label_spec.order()
        } else {
            0
        },
        steps: None,
        max_error: None,
        geometric_error: None,
        constraint_residual: None,
        wall_ms: 0.0,
        failure: None,
    };
    let start = Instant::now();
    let outcome = label_spec.validate().and_then(|_| measure(problem, &label_spec, t_end));
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(m) => {
            row.steps = Some(m.steps);
            row.max_error = m.max_error;
            row.geometric_error = m.geometric_error;
            row.constraint_residual = m.constraint_residual;
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row
}

/// One row per combination, in input order.
pub fn run_experiment(
    problem: &ProblemSpec,
    combos: &[Combination],
    mode: StepMode,
    t_end: f64,
) -> RunReport {
    RunReport {
        problem: problem.kind,
        rows: combos
            .iter()
            .map(|&c| run_row(problem, c, mode, t_end))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report() {
        let p = ProblemSpec::new(ProblemKind::Self3);
        let r = run_experiment(&p, &[], StepMode::Fixed(10), 1.0);
        assert!(r.rows.is_empty() && !r.any_failed());
        assert_eq!(
            r.to_csv().trim(),
            "method,version,stages,order,steps,max_error,geometric_error,wall_ms"
        );
    }

    #[test]
    fn invalid_row_is_marked_failed() {
        let p = ProblemSpec::new(ProblemKind::Wensch);
        let r = run_experiment(
            &p,
            &[Combination::new(Method::Gauss, Version::Direct, 2)],
            StepMode::Adaptive(1e-5),
            1.0,
        );
        assert!(r.any_failed());
        assert!(r.to_text().contains("FAILED"));
    }

    #[test]
    fn csv_header_and_row() {
        let p = ProblemSpec::new(ProblemKind::Self3);
        let r = run_experiment(
            &p,
            &[Combination::new(Method::Gauss, Version::Ode(QKind::SelfAdjoint), 2)],
            StepMode::Fixed(20),
            1.0,
        );
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,version,stages,order,steps,max_error,geometric_error,wall_ms"
        );
        assert!(lines.next().unwrap().starts_with("GAUSS,SELF_ADJOINT,2,4,20,,"));
    }
}
