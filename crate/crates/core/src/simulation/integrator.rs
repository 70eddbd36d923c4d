//! Time-stepping schemes behind a common trait, looked up by name at run time.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SimulationError;

/// Autonomous ODE `ẏ = F(y)` with an analytic Jacobian.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], out: &mut [f64]);
    fn jacobian(&self, y: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// Fixed step for explicit fixed-step schemes, initial step otherwise.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Any coordinate beyond this magnitude counts as divergence.
    pub divergence_cap: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            rtol: 1e-9,
            atol: 1e-9,
            max_step: f64::INFINITY,
            max_steps: 100_000_000,
            divergence_cap: 1e6,
        }
    }
}

impl StepOptions {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(SimulationError::InvalidOptions(format!("{name} = {v} must be positive")))
            }
        };
        positive("dt", self.dt)?;
        positive("rtol", self.rtol)?;
        positive("atol", self.atol)?;
        positive("max_step", self.max_step)?;
        positive("divergence_cap", self.divergence_cap)
    }
}

/// One integration scheme. `attempt` proposes a step of size `h` and
/// returns the scaled error norm for adaptive schemes.
pub trait Integrator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Exponent denominator of the step-size controller; `None` for
    /// fixed-step schemes.
    fn controller_order(&self) -> Option<u32>;

    fn attempt(
        &self,
        sys: &dyn OdeSystem,
        y: &[f64],
        h: f64,
        opts: &StepOptions,
        y_new: &mut [f64],
    ) -> Result<Option<f64>, SimulationError>;
}

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], opts: &StepOptions) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let scale = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / err.len().max(1) as f64).sqrt()
}

fn axpy_into(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o = y[i] + h * acc;
    }
}

/// Classical fourth-order Runge–Kutta with a fixed step.
#[derive(Debug, Default, Clone, Copy)]
pub struct Rk4;

impl Integrator for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn controller_order(&self) -> Option<u32> {
        None
    }

    fn attempt(
        &self,
        sys: &dyn OdeSystem,
        y: &[f64],
        h: f64,
        _opts: &StepOptions,
        y_new: &mut [f64],
    ) -> Result<Option<f64>, SimulationError> {
        let n = y.len();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        sys.rhs(y, &mut k1);
        axpy_into(&mut tmp, y, 0.5 * h, &[(1.0, &k1)]);
        sys.rhs(&tmp, &mut k2);
        axpy_into(&mut tmp, y, 0.5 * h, &[(1.0, &k2)]);
        sys.rhs(&tmp, &mut k3);
        axpy_into(&mut tmp, y, h, &[(1.0, &k3)]);
        sys.rhs(&tmp, &mut k4);
        axpy_into(y_new, y, h / 6.0, &[(1.0, &k1), (2.0, &k2), (2.0, &k3), (1.0, &k4)]);
        Ok(None)
    }
}

/// Dormand–Prince embedded 5(4) pair.
#[derive(Debug, Default, Clone, Copy)]
pub struct DormandPrince45;

const DP_A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Difference between the fifth- and fourth-order weights.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Integrator for DormandPrince45 {
    fn name(&self) -> &'static str {
        "rk45"
    }

    fn controller_order(&self) -> Option<u32> {
        Some(5)
    }

    fn attempt(
        &self,
        sys: &dyn OdeSystem,
        y: &[f64],
        h: f64,
        opts: &StepOptions,
        y_new: &mut [f64],
    ) -> Result<Option<f64>, SimulationError> {
        let n = y.len();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut tmp = vec![0.0; n];
        sys.rhs(y, &mut k[0]);
        for (s, row) in DP_A.iter().enumerate() {
            for (i, t) in tmp.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, a) in row.iter().enumerate() {
                    acc += a * k[j][i];
                }
                *t = y[i] + h * acc;
            }
            sys.rhs(&tmp, &mut k[s + 1]);
        }
        // The last stage is evaluated at the fifth-order solution.
        y_new.copy_from_slice(&tmp);
        let err: Vec<f64> = (0..n)
            .map(|i| h * DP_E.iter().enumerate().map(|(j, e)| e * k[j][i]).sum::<f64>())
            .collect();
        Ok(Some(error_norm(&err, y, y_new, opts)))
    }
}

/// Linearly implicit Rosenbrock 2(3) pair (the L-stable scheme behind
/// MATLAB's `ode23s`), for the stiff AC transients.
#[derive(Debug, Default, Clone, Copy)]
pub struct Rosenbrock23;

impl Integrator for Rosenbrock23 {
    fn name(&self) -> &'static str {
        "ros23"
    }

    fn controller_order(&self) -> Option<u32> {
        Some(3)
    }

    fn attempt(
        &self,
        sys: &dyn OdeSystem,
        y: &[f64],
        h: f64,
        opts: &StepOptions,
        y_new: &mut [f64],
    ) -> Result<Option<f64>, SimulationError> {
        let n = y.len();
        let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
        let e32 = 6.0 + std::f64::consts::SQRT_2;

        let mut jac = DMatrix::zeros(n, n);
        sys.jacobian(y, &mut jac);
        let w = DMatrix::identity(n, n) - jac * (h * d);
        let lu = w.lu();
        let solve = |rhs: DVector<f64>| {
            lu.solve(&rhs)
                .ok_or_else(|| SimulationError::InvalidOptions(format!("singular Rosenbrock matrix at h = {h:e}")))
        };

        let mut f0 = DVector::zeros(n);
        sys.rhs(y, f0.as_mut_slice());
        let k1 = solve(f0.clone())?;
        let y_half: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
        let mut f1 = DVector::zeros(n);
        sys.rhs(&y_half, f1.as_mut_slice());
        let k2 = solve(&f1 - &k1)? + &k1;
        for i in 0..n {
            y_new[i] = y[i] + h * k2[i];
        }
        let mut f2 = DVector::zeros(n);
        sys.rhs(y_new, f2.as_mut_slice());
        let k3 = solve(&f2 - (&k2 - &f1) * e32 - (&k1 - &f0) * 2.0)?;
        let err: Vec<f64> = (0..n).map(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i])).collect();
        Ok(Some(error_norm(&err, y, y_new, opts)))
    }
}

/// Name-indexed collection of integrators.
#[derive(Clone)]
pub struct IntegratorRegistry {
    entries: BTreeMap<&'static str, Arc<dyn Integrator>>,
}

impl Default for IntegratorRegistry {
    fn default() -> Self {
        let mut reg = Self {
            entries: BTreeMap::new(),
        };
        reg.register(Arc::new(Rk4));
        reg.register(Arc::new(DormandPrince45));
        reg.register(Arc::new(Rosenbrock23));
        reg
    }
}

impl IntegratorRegistry {
    pub fn register(&mut self, integrator: Arc<dyn Integrator>) {
        self.entries.insert(integrator.name(), integrator);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Integrator>, SimulationError> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| SimulationError::UnknownMethod {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// A step that would stop within `LANDING_SLACK · h` of a sampling instant is
/// stretched onto it, so accumulated rounding in `t` never leaves a sliver.
const LANDING_SLACK: f64 = 1e-3;

/// Where the driver reports the solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    EveryStep,
    /// Uniform grid `t0 + kΔ`; steps are shortened to land on it.
    Interval(f64),
    /// Only the final time.
    Final,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `sys` from `(t0, y0)` to `t_end`, calling `observer` at `t0`
/// and at every sampling instant. `y0` is overwritten with the final state.
#[allow(clippy::too_many_arguments)]
pub fn drive(
    integrator: &dyn Integrator,
    sys: &dyn OdeSystem,
    t0: f64,
    y: &mut [f64],
    t_end: f64,
    opts: &StepOptions,
    sampling: Sampling,
    observer: &mut dyn FnMut(f64, &[f64]),
) -> Result<DriveStats, SimulationError> {
    opts.validate()?;
    if !(t_end > t0) {
        return Err(SimulationError::InvalidOptions(format!(
            "end time {t_end} must exceed start time {t0}"
        )));
    }
    if let Sampling::Interval(dt) = sampling {
        if !(dt > 0.0) {
            return Err(SimulationError::InvalidOptions(format!("sampling interval {dt} must be positive")));
        }
    }
    check_state(0.0, y, opts)?;
    observer(t0, y);

    let mut stats = DriveStats::default();
    let mut t = t0;
    let mut h_nom = opts.dt.min(opts.max_step);
    let mut sample_k: u64 = 1;
    let mut y_new = vec![0.0; y.len()];
    let span = t_end - t0;

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(SimulationError::MaxSteps { time: t });
        }
        let next_sample = match sampling {
            Sampling::Interval(dt) => (t0 + dt * sample_k as f64).min(t_end),
            _ => t_end,
        };
        let mut h = h_nom;
        let mut lands = false;
        if t + h >= next_sample - LANDING_SLACK * h_nom {
            h = next_sample - t;
            lands = true;
        }
        if h <= 1e-14 * span.max(t.abs()) {
            return Err(SimulationError::StepUnderflow { time: t, step: h });
        }
        let err = integrator.attempt(sys, y, h, opts, &mut y_new)?;
        if let (Some(e), Some(order)) = (err, integrator.controller_order()) {
            let grow = |e: f64| {
                if e == 0.0 {
                    5.0
                } else {
                    (0.9 * e.powf(-1.0 / order as f64)).clamp(0.2, 5.0)
                }
            };
            if !e.is_finite() || e > 1.0 {
                stats.rejected += 1;
                let fac = if e.is_finite() { grow(e).min(0.9) } else { 0.2 };
                h_nom = h * fac;
                continue;
            }
            let proposal = (h * grow(e)).min(opts.max_step);
            h_nom = if lands && proposal >= h { h_nom.max(proposal) } else { proposal };
        }
        stats.accepted += 1;
        t = if lands { next_sample } else { t + h };
        y.copy_from_slice(&y_new);
        check_state(t, y, opts)?;
        match sampling {
            Sampling::EveryStep => observer(t, y),
            Sampling::Interval(_) if lands => {
                observer(t, y);
                sample_k += 1;
            }
            Sampling::Final if t >= t_end => observer(t, y),
            _ => {}
        }
    }
    Ok(stats)
}

fn check_state(t: f64, y: &[f64], opts: &StepOptions) -> Result<(), SimulationError> {
    if let Some(i) = y.iter().position(|v| !v.is_finite() || v.abs() > opts.divergence_cap) {
        return Err(SimulationError::Divergence {
            time: t,
            coordinate: i,
            value: y[i],
        });
    }
    Ok(())
}
