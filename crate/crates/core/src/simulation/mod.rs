//! Nonlinear and variational integration, convergence classification and
//! region-of-contraction sweeps.

mod integrator;
pub mod region;

pub use integrator::{
    drive, DormandPrince45, DriveStats, Integrator, IntegratorRegistry, OdeSystem, Rk4, Rosenbrock23, Sampling,
    StepOptions,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linearization::{jacobian_into, lyapunov_value, variational_coupling_into, LyapunovCertificate};
use crate::model::{quotient_distance, Layout, Model, ModelError, SystemState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
    #[error("unknown integration method {name:?} (available: {available})")]
    UnknownMethod { name: String, available: String },
    #[error("solution diverged at t = {time:.6e} s (coordinate {coordinate} = {value:e})")]
    Divergence { time: f64, coordinate: usize, value: f64 },
    #[error("step size underflow at t = {time:.6e} s (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },
    #[error("step budget exhausted at t = {time:.6e} s")]
    MaxSteps { time: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `ż = f(z, u)` for a fixed input.
pub struct NetworkOde<'a> {
    model: &'a Model,
    u_dc: Vec<f64>,
}

impl<'a> NetworkOde<'a> {
    pub fn new(model: &'a Model, u: &DVector<f64>) -> Result<Self, SimulationError> {
        check_input(model, u)?;
        Ok(Self {
            model,
            u_dc: model.dc_block(u).to_vec(),
        })
    }
}

impl OdeSystem for NetworkOde<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        self.model.rhs_into(y, &self.u_dc, out);
    }

    fn jacobian(&self, y: &[f64], out: &mut DMatrix<f64>) {
        jacobian_into(self.model, y, out);
    }
}

/// The pair `(z, δz)` with `δż = A(z) δz`.
pub struct VariationalOde<'a> {
    model: &'a Model,
    u_dc: Vec<f64>,
}

impl<'a> VariationalOde<'a> {
    pub fn new(model: &'a Model, u: &DVector<f64>) -> Result<Self, SimulationError> {
        check_input(model, u)?;
        Ok(Self {
            model,
            u_dc: model.dc_block(u).to_vec(),
        })
    }
}

impl OdeSystem for VariationalOde<'_> {
    fn dim(&self) -> usize {
        2 * self.model.dim()
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) {
        let n = self.model.dim();
        let (z, dz) = y.split_at(n);
        let (fz, fdz) = out.split_at_mut(n);
        self.model.rhs_into(z, &self.u_dc, fz);
        let mut a = DMatrix::zeros(n, n);
        jacobian_into(self.model, z, &mut a);
        let prod = a * DVector::from_column_slice(dz);
        fdz.copy_from_slice(prod.as_slice());
    }

    fn jacobian(&self, y: &[f64], out: &mut DMatrix<f64>) {
        let n = self.model.dim();
        let (z, dz) = y.split_at(n);
        let mut a = DMatrix::zeros(n, n);
        jacobian_into(self.model, z, &mut a);
        let mut c = DMatrix::zeros(n, n);
        variational_coupling_into(self.model, z, dz, &mut c);
        out.fill(0.0);
        out.view_mut((0, 0), (n, n)).copy_from(&a);
        out.view_mut((n, n), (n, n)).copy_from(&a);
        out.view_mut((n, 0), (n, n)).copy_from(&c);
    }
}

fn check_input(model: &Model, u: &DVector<f64>) -> Result<(), SimulationError> {
    if u.len() != model.dim() {
        return Err(ModelError::Shape {
            what: "input",
            expected: model.dim(),
            got: u.len(),
        }
        .into());
    }
    Ok(())
}

fn check_state(model: &Model, z: &SystemState) -> Result<(), SimulationError> {
    if z.layout() != model.layout() {
        return Err(ModelError::Shape {
            what: "initial state",
            expected: model.dim(),
            got: z.dim(),
        }
        .into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub t_end: f64,
    pub method: String,
    pub step: StepOptions,
    pub sampling: Sampling,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            t_end: 2.0,
            method: "rk4".to_string(),
            step: StepOptions::default(),
            sampling: Sampling::EveryStep,
        }
    }
}

/// Sampled solution. Angles are left unwrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub layout: Layout,
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub variational: Option<Vec<DVector<f64>>>,
    pub lyapunov: Option<Vec<f64>>,
    pub distances: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Fills `distances` with the quotient distance to the orbit of `z_star`.
    pub fn attach_distances(&mut self, z_star: &SystemState) {
        self.distances = Some(
            self.states
                .iter()
                .map(|z| quotient_distance(z, z_star, None).distance)
                .collect(),
        );
    }
}

/// Integrates `ż = f(z, u)` with the method named in `opts`.
pub fn integrate(
    model: &Model,
    z0: &SystemState,
    u: &DVector<f64>,
    opts: &SimulationOptions,
) -> Result<Trajectory, SimulationError> {
    let integrator = IntegratorRegistry::default().get(&opts.method)?;
    integrate_with(integrator.as_ref(), model, z0, u, opts)
}

pub fn integrate_with(
    integrator: &dyn Integrator,
    model: &Model,
    z0: &SystemState,
    u: &DVector<f64>,
    opts: &SimulationOptions,
) -> Result<Trajectory, SimulationError> {
    check_state(model, z0)?;
    let sys = NetworkOde::new(model, u)?;
    let layout = model.layout();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut y = z0.as_slice().to_vec();
    drive(integrator, &sys, 0.0, &mut y, opts.t_end, &opts.step, opts.sampling, &mut |t, y| {
        times.push(t);
        states.push(SystemState::from_slice(layout, y).expect("layout matches"));
    })?;
    Ok(Trajectory {
        layout,
        times,
        states,
        variational: None,
        lyapunov: None,
        distances: None,
    })
}

/// Co-integrates `(z, δz)` and records `V(δz(t))` when a certificate is given.
pub fn integrate_variational(
    model: &Model,
    z0: &SystemState,
    delta_z0: &DVector<f64>,
    u: &DVector<f64>,
    opts: &SimulationOptions,
    certificate: Option<&LyapunovCertificate>,
) -> Result<Trajectory, SimulationError> {
    check_state(model, z0)?;
    if delta_z0.len() != model.dim() {
        return Err(ModelError::Shape {
            what: "tangent vector",
            expected: model.dim(),
            got: delta_z0.len(),
        }
        .into());
    }
    let integrator = IntegratorRegistry::default().get(&opts.method)?;
    let sys = VariationalOde::new(model, u)?;
    let layout = model.layout();
    let n = model.dim();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut tangents = Vec::new();
    let mut y: Vec<f64> = z0.as_slice().iter().chain(delta_z0.iter()).copied().collect();
    drive(integrator.as_ref(), &sys, 0.0, &mut y, opts.t_end, &opts.step, opts.sampling, &mut |t, y| {
        times.push(t);
        states.push(SystemState::from_slice(layout, &y[..n]).expect("layout matches"));
        tangents.push(DVector::from_column_slice(&y[n..]));
    })?;
    let lyapunov = certificate.map(|c| tangents.iter().map(|dz| lyapunov_value(c, dz)).collect());
    Ok(Trajectory {
        layout,
        times,
        states,
        variational: Some(tangents),
        lyapunov,
        distances: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub final_distance: f64,
    /// Earliest sample time after which the distance stays below `tol`.
    pub time_to_converge: Option<f64>,
}

/// Converged iff the quotient distance to `[z*]` stays below `tol` on the
/// trailing `window` seconds of the trajectory.
pub fn classify_convergence(traj: &Trajectory, z_star: &SystemState, tol: f64, window: f64) -> ConvergenceReport {
    let computed;
    let distances = match &traj.distances {
        Some(d) => d,
        None => {
            computed = traj
                .states
                .iter()
                .map(|z| quotient_distance(z, z_star, None).distance)
                .collect::<Vec<_>>();
            &computed
        }
    };
    let t_last = *traj.times.last().unwrap_or(&0.0);
    let converged = traj
        .times
        .iter()
        .zip(distances)
        .filter(|(t, _)| **t >= t_last - window)
        .all(|(_, d)| *d < tol);
    let time_to_converge = if converged {
        let last_bad = distances.iter().rposition(|d| !(*d < tol));
        Some(match last_bad {
            None => traj.times[0],
            Some(k) => traj.times[k + 1],
        })
    } else {
        None
    };
    ConvergenceReport {
        converged,
        final_distance: *distances.last().unwrap_or(&f64::NAN),
        time_to_converge,
    }
}
