//! Flows of homogeneous linear DAEs and their distance from a quadratic group
//! `{Φ : ΦᵀXΦ = X}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{DaeError, Result};
use crate::inherent::{InherentSystem, LinearInherent, QKind, QStrategy};
use crate::integrate::{integrate, IntegratorSpec, LinearDirect, Problem, Trajectory, Version};
use crate::reduce::{kernel_plain, Reducer};

/// `t ↦ Q_problem(t)` with `x̂ = Q_problem x`.
pub type CoordinateMap = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// A homogeneous linear DAE together with the group its flow should stay in.
#[derive(Clone)]
pub struct FlowProblem {
    pub reducer: Reducer,
    pub group: DMatrix<f64>,
    /// Known constructor transformation; flows of versions without built-in
    /// structure are measured in its leading `d` coordinates.
    pub coordinates: Option<CoordinateMap>,
    /// Strategy used for ODE versions (carries the PRESCRIBED map).
    pub strategy: QStrategy,
}

#[derive(Debug, Clone)]
pub struct FlowReport {
    pub times: Vec<f64>,
    pub phi: Vec<DMatrix<f64>>,
    pub x: DMatrix<f64>,
    pub max_error: f64,
    pub steps: usize,
}

/// `max |ΦᵀXΦ − X|`.
pub fn geometric_error(phi: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<f64> {
    if !phi.is_square() || phi.shape() != x.shape() {
        return Err(DaeError::ShapeMismatch(format!(
            "flow {:?} against group matrix {:?}",
            phi.shape(),
            x.shape()
        )));
    }
    Ok((phi.transpose() * x * phi - x).amax())
}

fn uses_internal_coordinates(problem: &FlowProblem, version: Version) -> bool {
    match version {
        Version::Ode(QKind::SelfAdjoint | QKind::SkewAdjoint) => true,
        _ => problem.coordinates.is_none(),
    }
}

fn leading(map: &CoordinateMap, t: f64, x: &DVector<f64>, d: usize) -> DVector<f64> {
    (map(t) * x).rows(0, d).into_owned()
}

fn run_column(
    problem: &FlowProblem,
    spec: &IntegratorSpec,
    t0: f64,
    t_end: f64,
    i: usize,
) -> Result<(Trajectory, bool)> {
    let d = problem.reducer.cv.d;
    let n = problem.reducer.dae.n();
    let internal = uses_internal_coordinates(problem, spec.version);
    let mut e = DVector::zeros(d);
    e[i] = 1.0;
    let x0 = if internal {
        let mut sys = LinearInherent::new(problem.reducer.clone(), problem.strategy.clone())?;
        sys.freeze(t0, &DVector::zeros(n))?;
        sys.lift(t0, &e)?
    } else {
        // consistent states of a homogeneous problem span ker Â2
        let map = problem.coordinates.as_ref().expect("checked");
        let dec = problem.reducer.freeze(t0)?;
        let red = problem.reducer.eval(t0, 0, &dec)?;
        let t2 = kernel_plain(red.a2.value(), problem.reducer.cv.a);
        let g = (map(t0) * &t2).rows(0, d).into_owned();
        let c = g
            .lu()
            .solve(&e)
            .ok_or_else(|| DaeError::Singular("leading block of Q_problem T2".into()))?;
        t2 * c
    };
    let traj = match spec.version {
        Version::Direct => {
            let mut dae = LinearDirect::new(problem.reducer.clone());
            integrate(spec, Problem::Direct(&mut dae), t0, t_end, &x0)?
        }
        Version::Ode(_) => {
            let mut sys = LinearInherent::new(problem.reducer.clone(), problem.strategy.clone())?;
            integrate(spec, Problem::Inherent(&mut sys), t0, t_end, &x0)?
        }
    };
    Ok((traj, internal))
}

/// Integrates the `d` columns of the flow on a common fixed grid, in
/// parallel, and assembles `Φ` at every grid point.
///
/// SELF_ADJOINT and SKEW_ADJOINT versions are measured in their own inherent
/// variables. Other versions are mapped to `x̂ = Q_problem x` and the leading
/// `d` components are read off.
pub fn propagate_flow(
    problem: &FlowProblem,
    spec: &IntegratorSpec,
    t0: f64,
    t_end: f64,
) -> Result<FlowReport> {
    let d = problem.reducer.cv.d;
    if problem.group.shape() != (d, d) {
        return Err(DaeError::ShapeMismatch(format!(
            "group matrix must be {d}x{d}"
        )));
    }
    let columns: Vec<Result<(Trajectory, bool)>> = (0..d)
        .into_par_iter()
        .map(|i| run_column(problem, spec, t0, t_end, i))
        .collect();
    let columns: Vec<(Trajectory, bool)> = columns.into_iter().collect::<Result<_>>()?;
    let times = columns[0].0.times.clone();
    if columns.iter().any(|(c, _)| c.times != times) {
        return Err(DaeError::Config(
            "flow columns must share the grid (use a fixed step count)".into(),
        ));
    }
    let mut phi = Vec::with_capacity(times.len());
    let mut max_error: f64 = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let mut m = DMatrix::zeros(d, d);
        if k == 0 {
            // the columns start from the unit vectors by construction
            m.fill_with_identity();
            phi.push(m);
            continue;
        }
        for (j, (traj, internal)) in columns.iter().enumerate() {
            let col = if *internal {
                traj.x1s[k].clone()
            } else {
                leading(problem.coordinates.as_ref().expect("checked"), t, &traj.states[k], d)
            };
            m.set_column(j, &col);
        }
        max_error = max_error.max(geometric_error(&m, &problem.group)?);
        phi.push(m);
    }
    Ok(FlowReport {
        times,
        phi,
        x: problem.group.clone(),
        max_error,
        steps: columns[0].0.steps_taken,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothfact::symplectic_unit;

    #[test]
    fn identity_and_scaling() {
        let j = symplectic_unit(1);
        assert_eq!(geometric_error(&DMatrix::identity(2, 2), &j).unwrap(), 0.0);
        let two = DMatrix::identity(2, 2) * 2.0;
        assert_eq!(geometric_error(&two, &j).unwrap(), 3.0);
        assert!(geometric_error(&DMatrix::identity(3, 3), &j).is_err());
    }
}
