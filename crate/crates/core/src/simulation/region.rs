//! Region-of-contraction estimate by sweeping initial angle offsets.
//!
//! Each grid point perturbs two equilibrium angles, keeps every other state
//! at its equilibrium value, and integrates. The tangent proxy for the
//! initial condition is its displacement from the nearest point of the
//! equilibrium orbit, `δz₀ = z₀ − group_action(z*, θ*)`, whose Lyapunov value
//! `V(δz₀) = δz₀ᵀ Π δz₀` is reported alongside the outcome.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{drive, IntegratorRegistry, NetworkOde, OdeSystem, Sampling, SimulationError, StepOptions, VariationalOde};
use crate::equilibrium::Equilibrium;
use crate::linearization::{lyapunov_value, LyapunovCertificate};
use crate::model::{group_action, orbit_difference, quotient_distance, wrap_angle, Model, SystemState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSweep {
    /// Points per axis.
    pub grid: usize,
    /// Offsets span `[-half_width, half_width]` on both axes.
    pub half_width: f64,
    /// Converters whose angles are offset.
    pub nodes: [usize; 2],
    pub horizon: f64,
    pub method: String,
    pub step: StepOptions,
    /// Quotient-distance threshold for convergence.
    pub tol: f64,
    /// Trailing fraction of the horizon on which `tol` must hold.
    pub window_fraction: f64,
    /// Distance evaluations over the horizon.
    pub checkpoints: usize,
    /// Level `ε` whose sublevel set is checked for containment.
    pub epsilon: f64,
    /// Co-integrate the tangent proxy and record the largest one-step
    /// increase of `V(δz(t))`.
    pub track_lyapunov: bool,
}

impl Default for RegionSweep {
    fn default() -> Self {
        Self {
            grid: 41,
            half_width: FRAC_PI_2,
            nodes: [0, 1],
            horizon: 200.0,
            method: "ros23".to_string(),
            step: StepOptions {
                dt: 1e-5,
                rtol: 1e-7,
                atol: 1e-8,
                ..Default::default()
            },
            tol: 1e-4,
            window_fraction: 0.2,
            checkpoints: 100,
            epsilon: 3.5,
            track_lyapunov: false,
        }
    }
}

impl RegionSweep {
    pub fn offsets(&self) -> Vec<f64> {
        if self.grid <= 1 {
            return vec![0.0];
        }
        let step = 2.0 * self.half_width / (self.grid - 1) as f64;
        (0..self.grid).map(|k| -self.half_width + step * k as f64).collect()
    }

    fn validate(&self, model: &Model) -> Result<(), SimulationError> {
        let n = model.n();
        if self.nodes[0] == self.nodes[1] || self.nodes.iter().any(|&k| k >= n) {
            return Err(SimulationError::InvalidOptions(format!(
                "sweep nodes {:?} must be two distinct converters of {n}",
                self.nodes
            )));
        }
        if !(self.horizon > 0.0 && self.tol > 0.0 && self.half_width >= 0.0) {
            return Err(SimulationError::InvalidOptions("horizon and tol must be positive".into()));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) || self.checkpoints == 0 || self.grid == 0 {
            return Err(SimulationError::InvalidOptions(
                "window_fraction must lie in (0, 1]; grid and checkpoints must be nonzero".into(),
            ));
        }
        self.step.validate()
    }
}

/// Terminal synchronisation diagnostics of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalState {
    pub max_abs_v_dc_tilde: f64,
    /// `max |η ṽ_dc,k|`.
    pub max_abs_frequency: f64,
    /// Largest wrapped deviation of `γ_k − γ_0` from its equilibrium value.
    pub angle_difference_error: f64,
    /// `‖x(T) − R(θ*) x*‖ / ‖x*‖`.
    pub ac_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub index: usize,
    pub dgamma1: f64,
    pub dgamma2: f64,
    /// Orbit point nearest to the initial state.
    pub theta_star: f64,
    pub v0: f64,
    pub converged: bool,
    pub final_distance: f64,
    pub time_to_converge: Option<f64>,
    pub max_lyapunov_increase: Option<f64>,
    pub terminal: Option<TerminalState>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEstimate {
    pub sweep: RegionSweep,
    /// Largest sampled `V(δz₀)` below which every sample converged.
    pub epsilon_star: f64,
    /// Whether every sample with `V(δz₀) ≤ ε` converged.
    pub sublevel_contained: bool,
    pub converged: usize,
    pub diverged: usize,
    pub samples: Vec<RegionSample>,
}

/// Largest converged `v0` strictly below the smallest non-converged `v0`.
pub fn epsilon_star(samples: &[RegionSample]) -> f64 {
    let first_bad = samples
        .iter()
        .filter(|s| !s.converged)
        .map(|s| s.v0)
        .fold(f64::INFINITY, f64::min);
    samples
        .iter()
        .filter(|s| s.converged && s.v0 < first_bad)
        .map(|s| s.v0)
        .fold(0.0, f64::max)
}

/// Initial state `z*` with the two sweep angles offset.
pub fn offset_state(z_star: &SystemState, nodes: [usize; 2], dgamma: [f64; 2]) -> SystemState {
    let mut z = z_star.clone();
    z.gamma_mut()[nodes[0]] += dgamma[0];
    z.gamma_mut()[nodes[1]] += dgamma[1];
    z
}

/// Tangent proxy `δz₀` of `z0` relative to the orbit of `z_star`, and the
/// minimising rotation.
pub fn tangent_proxy(z0: &SystemState, z_star: &SystemState) -> (DVector<f64>, f64) {
    let theta = quotient_distance(z0, z_star, None).theta_star;
    (orbit_difference(z0, z_star, theta), theta)
}

pub fn terminal_state(model: &Model, z: &SystemState, z_star: &SystemState) -> TerminalState {
    let eta = model.conv.eta;
    let theta = quotient_distance(z, z_star, None).theta_star;
    let target = group_action(z_star, theta);
    let (g, gs) = (z.gamma(), z_star.gamma());
    let angle_difference_error = (1..g.len())
        .map(|k| wrap_angle((g[k] - g[0]) - (gs[k] - gs[0])).abs())
        .fold(0.0, f64::max);
    let ac_err: f64 = z
        .ac()
        .iter()
        .zip(target.ac())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let ac_norm = z_star.ac().iter().map(|a| a * a).sum::<f64>().sqrt();
    let max_abs_v_dc_tilde = z.v_dc_tilde().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    TerminalState {
        max_abs_v_dc_tilde,
        max_abs_frequency: eta * max_abs_v_dc_tilde,
        angle_difference_error,
        ac_relative_error: if ac_norm > 0.0 { ac_err / ac_norm } else { ac_err },
    }
}

/// Integrates one initial condition and classifies it.
pub fn run_sample(
    model: &Model,
    eq: &Equilibrium,
    cert: &LyapunovCertificate,
    sweep: &RegionSweep,
    index: usize,
    dgamma: [f64; 2],
) -> RegionSample {
    let z_star = &eq.z_star;
    let z0 = offset_state(z_star, sweep.nodes, dgamma);
    let (dz0, theta_star) = tangent_proxy(&z0, z_star);
    let v0 = lyapunov_value(cert, &dz0);
    let mut sample = RegionSample {
        index,
        dgamma1: dgamma[0],
        dgamma2: dgamma[1],
        theta_star,
        v0,
        converged: false,
        final_distance: f64::INFINITY,
        time_to_converge: None,
        max_lyapunov_increase: None,
        terminal: None,
        failure: None,
    };

    let integrator = match IntegratorRegistry::default().get(&sweep.method) {
        Ok(i) => i,
        Err(e) => {
            sample.failure = Some(e.to_string());
            return sample;
        }
    };
    let n = model.dim();
    let network;
    let variational;
    let (sys, mut y): (&dyn OdeSystem, Vec<f64>) = if sweep.track_lyapunov {
        variational = VariationalOde::new(model, &eq.u_star).expect("equilibrium input matches model");
        (&variational, z0.as_slice().iter().chain(dz0.iter()).copied().collect())
    } else {
        network = NetworkOde::new(model, &eq.u_star).expect("equilibrium input matches model");
        (&network, z0.as_slice().to_vec())
    };

    let spacing = sweep.horizon / sweep.checkpoints as f64;
    let window_start = sweep.horizon * (1.0 - sweep.window_fraction);
    let mut next_check = 0.0;
    let mut checks: Vec<(f64, f64)> = Vec::with_capacity(sweep.checkpoints + 1);
    let mut last_v: Option<f64> = None;
    let mut max_increase = f64::NEG_INFINITY;
    let mut observer = |t: f64, y: &[f64]| {
        if sweep.track_lyapunov {
            let v = lyapunov_value(cert, &DVector::from_column_slice(&y[n..]));
            if let Some(prev) = last_v {
                max_increase = max_increase.max(v - prev);
            }
            last_v = Some(v);
        }
        if t >= next_check || t >= sweep.horizon {
            let z = SystemState::from_slice(model.layout(), &y[..n]).expect("layout matches");
            checks.push((t, quotient_distance(&z, z_star, None).distance));
            while next_check <= t {
                next_check += spacing;
            }
        }
    };
    let outcome = drive(
        integrator.as_ref(),
        sys,
        0.0,
        &mut y,
        sweep.horizon,
        &sweep.step,
        Sampling::EveryStep,
        &mut observer,
    );
    if sweep.track_lyapunov && max_increase.is_finite() {
        sample.max_lyapunov_increase = Some(max_increase);
    }
    if let Err(e) = outcome {
        sample.failure = Some(e.to_string());
        return sample;
    }

    let z_end = SystemState::from_slice(model.layout(), &y[..n]).expect("layout matches");
    sample.final_distance = checks.last().map_or(f64::INFINITY, |c| c.1);
    sample.converged = checks
        .iter()
        .filter(|(t, _)| *t >= window_start)
        .all(|(_, d)| *d < sweep.tol);
    if sample.converged {
        let last_bad = checks.iter().rposition(|(_, d)| !(*d < sweep.tol));
        sample.time_to_converge = Some(match last_bad {
            None => 0.0,
            Some(k) => checks[k + 1].0,
        });
    }
    sample.terminal = Some(terminal_state(model, &z_end, z_star));
    sample
}

/// Runs the sweep in parallel; samples are reported in grid order
/// (`dgamma1` slowest).
pub fn estimate_region(
    model: &Model,
    eq: &Equilibrium,
    cert: &LyapunovCertificate,
    sweep: &RegionSweep,
) -> Result<RegionEstimate, SimulationError> {
    sweep.validate(model)?;
    IntegratorRegistry::default().get(&sweep.method)?;
    let offsets = sweep.offsets();
    let points: Vec<[f64; 2]> = offsets
        .iter()
        .flat_map(|&a| offsets.iter().map(move |&b| [a, b]))
        .collect();
    let samples: Vec<RegionSample> = points
        .par_iter()
        .enumerate()
        .map(|(index, &dgamma)| run_sample(model, eq, cert, sweep, index, dgamma))
        .collect();
    Ok(summarize(sweep.clone(), samples))
}

pub fn summarize(sweep: RegionSweep, mut samples: Vec<RegionSample>) -> RegionEstimate {
    samples.sort_by_key(|s| s.index);
    let sublevel_contained = samples.iter().filter(|s| s.v0 <= sweep.epsilon).all(|s| s.converged);
    RegionEstimate {
        epsilon_star: epsilon_star(&samples),
        sublevel_contained,
        converged: samples.iter().filter(|s| s.converged).count(),
        diverged: samples.iter().filter(|s| s.failure.is_some()).count(),
        samples,
        sweep,
    }
}
