//! Gauge-fixed synchronous equilibria and the decentralised equilibrium
//! condition.
//!
//! The equilibrium set of the network is a circle (the orbit of the rotation
//! symmetry). Newton's method is made well posed by appending the scalar
//! constraint `γ₁ = gauge` and solving the bordered `(N+1) × N` system in the
//! least-squares sense.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linearization::scaled_jacobian_into;
use crate::model::{j2, quotient_distance, r_vec, wrap_angle, Model, ModelError, SystemState};

/// Equilibria closer than this in quotient distance are the same orbit.
pub const ORBIT_SEPARATION: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("Newton did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("bordered Jacobian is rank deficient (σ_min/σ_max = {ratio:.3e}); the equilibrium is degenerate beyond the rotation direction")]
    RankDeficient { ratio: f64 },
    #[error("invalid input vector: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the DC input is treated while solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispatch {
    /// `u` is used as given; an inconsistent `u` has no equilibrium.
    #[default]
    Exact,
    /// `u + s·1ₙ` with the uniform offset `s` solved for, so that the DC
    /// inputs always balance the network losses.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Tolerance on `‖K f(z, u)‖∞` and on the gauge constraint.
    pub tol: f64,
    pub dispatch: Dispatch,
    /// Smallest admissible `σ_min/σ_max` of the bordered Jacobian.
    pub rank_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-10,
            dispatch: Dispatch::Exact,
            rank_tol: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition1Record {
    pub k: usize,
    pub q_sw: f64,
    pub threshold: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equilibrium {
    pub z_star: SystemState,
    /// Input the equilibrium was solved for (DC block only).
    pub u_star: DVector<f64>,
    pub gauge_angle: f64,
    /// `‖K f(z*, u*)‖∞`.
    pub residual_norm: f64,
    /// Uniform DC offset added to the requested input (zero for
    /// [`Dispatch::Exact`]).
    pub dispatch_offset: f64,
    pub iterations: usize,
    pub condition1: Vec<Condition1Record>,
}

/// Serialised form of an equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRecord {
    pub gamma: Vec<f64>,
    pub v_dc_tilde: Vec<f64>,
    pub x: Vec<f64>,
    pub u_dc: Vec<f64>,
    pub residual: f64,
    pub gauge_angle: f64,
    pub dispatch_offset: f64,
    pub iterations: usize,
    pub condition1: Vec<Condition1Record>,
}

impl Equilibrium {
    pub fn u_dc(&self) -> Vec<f64> {
        let l = self.z_star.layout();
        self.u_star.as_slice()[l.v_dc()..l.v_dc() + l.n].to_vec()
    }

    pub fn to_record(&self) -> EquilibriumRecord {
        EquilibriumRecord {
            gamma: self.z_star.gamma().to_vec(),
            v_dc_tilde: self.z_star.v_dc_tilde().to_vec(),
            x: self.z_star.ac().to_vec(),
            u_dc: self.u_dc(),
            residual: self.residual_norm,
            gauge_angle: self.gauge_angle,
            dispatch_offset: self.dispatch_offset,
            iterations: self.iterations,
            condition1: self.condition1.clone(),
        }
    }
}

/// Input that makes `z` a steady state of the DC dynamics:
/// `i*_dc,k = (μ/2) r(γ_k)ᵀ i_k`, zero outside the DC block.
pub fn feasible_input(model: &Model, z: &SystemState) -> DVector<f64> {
    let half_mu = 0.5 * model.conv.mu;
    let dc: Vec<f64> = (0..model.n())
        .map(|k| half_mu * r_vec(z.gamma()[k]).dot(&z.i_node(k)))
        .collect();
    model.input_from_dc(&dc).expect("state matches model")
}

/// Solves the AC circuit for fixed angles and DC voltages. The x-rows of the
/// model are affine in `x`, so this is one linear solve.
pub fn linear_ac_solve(model: &Model, gamma: &[f64], v_dc_tilde: &[f64]) -> Result<Vec<f64>, EquilibriumError> {
    let l = model.layout();
    let dim = l.dim();
    let ac = l.ac();
    let mut z = SystemState::zeros(l);
    z.gamma_mut().copy_from_slice(gamma);
    z.v_dc_tilde_mut().copy_from_slice(v_dc_tilde);
    let mut jac = DMatrix::zeros(dim, dim);
    scaled_jacobian_into(model, z.as_slice(), &mut jac);
    let m = jac.view((ac, ac), (dim - ac, dim - ac)).into_owned();
    let mut g = vec![0.0; dim];
    model.scaled_rhs_into(z.as_slice(), &vec![0.0; l.n], &mut g);
    let c = DVector::from_column_slice(&g[ac..]);
    let x = m
        .lu()
        .solve(&(-c))
        .ok_or(EquilibriumError::RankDeficient { ratio: 0.0 })?;
    Ok(x.as_slice().to_vec())
}

/// Default Newton start: all angles at the gauge, nominal DC voltages and the
/// matching AC steady state.
pub fn default_guess(model: &Model, gauge_angle: f64) -> Result<SystemState, EquilibriumError> {
    spread_guess(model, gauge_angle, 0.0)
}

/// Start with angles `gauge + k·spread`.
pub fn spread_guess(model: &Model, gauge_angle: f64, spread: f64) -> Result<SystemState, EquilibriumError> {
    let l = model.layout();
    let gamma: Vec<f64> = (0..l.n).map(|k| gauge_angle + spread * k as f64).collect();
    let x = linear_ac_solve(model, &gamma, &vec![0.0; l.n])?;
    let mut z = SystemState::zeros(l);
    z.gamma_mut().copy_from_slice(&gamma);
    z.ac_mut().copy_from_slice(&x);
    Ok(z)
}

fn validate_input(model: &Model, u: &DVector<f64>) -> Result<(), EquilibriumError> {
    if u.len() != model.dim() {
        return Err(ModelError::Shape {
            what: "input",
            expected: model.dim(),
            got: u.len(),
        }
        .into());
    }
    let l = model.layout();
    for (k, &val) in u.iter().enumerate() {
        let in_dc = k >= l.v_dc() && k < l.v_dc() + l.n;
        if !val.is_finite() {
            return Err(EquilibriumError::InvalidInput(format!("entry {k} is not finite")));
        }
        if !in_dc && val != 0.0 {
            return Err(EquilibriumError::InvalidInput(format!(
                "entry {k} lies outside the DC block but is {val}"
            )));
        }
    }
    Ok(())
}

struct Bordered<'a> {
    model: &'a Model,
    u_dc: Vec<f64>,
    gauge: f64,
    balanced: bool,
}

impl Bordered<'_> {
    fn unknowns(&self) -> usize {
        self.model.dim() + usize::from(self.balanced)
    }

    fn residual(&self, w: &DVector<f64>) -> DVector<f64> {
        let l = self.model.layout();
        let dim = l.dim();
        let offset = if self.balanced { w[dim] } else { 0.0 };
        let u: Vec<f64> = self.u_dc.iter().map(|x| x + offset).collect();
        let mut r = DVector::zeros(dim + 1);
        self.model
            .scaled_rhs_into(&w.as_slice()[..dim], &u, &mut r.as_mut_slice()[..dim]);
        r[dim] = w[l.gamma()] - self.gauge;
        r
    }

    fn jacobian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let l = self.model.layout();
        let dim = l.dim();
        let mut a = DMatrix::zeros(dim, dim);
        scaled_jacobian_into(self.model, &w.as_slice()[..dim], &mut a);
        let mut jb = DMatrix::zeros(dim + 1, self.unknowns());
        jb.view_mut((0, 0), (dim, dim)).copy_from(&a);
        jb[(dim, l.gamma())] = 1.0;
        if self.balanced {
            for k in 0..l.n {
                jb[(l.v_dc() + k, dim)] = 1.0;
            }
        }
        jb
    }
}

/// Bordered Newton solve of `f(z, u) = 0`, `γ₁ = gauge_angle`.
pub fn solve_equilibrium(
    model: &Model,
    u: &DVector<f64>,
    gauge_angle: f64,
    guess: Option<&SystemState>,
    opts: &NewtonOptions,
) -> Result<Equilibrium, EquilibriumError> {
    validate_input(model, u)?;
    let l = model.layout();
    let dim = l.dim();
    let start = match guess {
        Some(g) => {
            if g.dim() != dim {
                return Err(ModelError::Shape {
                    what: "initial guess",
                    expected: dim,
                    got: g.dim(),
                }
                .into());
            }
            g.clone()
        }
        None => default_guess(model, gauge_angle)?,
    };
    let problem = Bordered {
        model,
        u_dc: model.dc_block(u).to_vec(),
        gauge: gauge_angle,
        balanced: opts.dispatch == Dispatch::Balanced,
    };
    let mut w = DVector::zeros(problem.unknowns());
    w.rows_mut(0, dim).copy_from(start.as_vector());

    let mut r = problem.residual(&w);
    let mut iterations = 0;
    loop {
        let res = r.amax();
        if res <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(EquilibriumError::NoConvergence {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let jb = problem.jacobian(&w);
        let svd = jb.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > opts.rank_tol * smax) {
            return Err(EquilibriumError::RankDeficient { ratio: smin / smax });
        }
        let step = svd
            .solve(&(-&r), 0.0)
            .map_err(|e| EquilibriumError::InvalidInput(e.to_string()))?;

        let base = r.norm();
        let mut alpha = 1.0;
        let (mut next_w, mut next_r);
        loop {
            next_w = &w + &step * alpha;
            next_r = problem.residual(&next_w);
            if next_r.norm() < base || alpha < 1e-6 {
                break;
            }
            alpha *= 0.5;
        }
        if !(next_r.norm() < base) {
            // no descent along the Gauss-Newton direction
            return Err(EquilibriumError::NoConvergence {
                iterations,
                residual: res,
            });
        }
        w = next_w;
        r = next_r;
    }

    let mut z_star = SystemState::from_slice(l, &w.as_slice()[..dim])?;
    for g in z_star.gamma_mut() {
        *g = wrap_angle(*g);
    }
    z_star.gamma_mut()[0] = wrap_angle(gauge_angle);
    let dispatch_offset = if problem.balanced { w[dim] } else { 0.0 };
    let u_dc: Vec<f64> = problem.u_dc.iter().map(|x| x + dispatch_offset).collect();
    let u_star = model.input_from_dc(&u_dc)?;
    let residual_norm = model.scaled_vector_field(&z_star, &u_star)?.amax();
    let mut eq = Equilibrium {
        z_star,
        u_star,
        gauge_angle,
        residual_norm,
        dispatch_offset,
        iterations,
        condition1: Vec::new(),
    };
    eq.condition1 = check_condition1(model, &eq, 0.0);
    Ok(eq)
}

/// Reactive power after the switching block, `Q*_sw,k = ½μ (J r(γ_k))ᵀ i_k v*_dc`.
pub fn switching_reactive_power(model: &Model, z: &SystemState, k: usize) -> f64 {
    let p = &model.conv;
    0.5 * p.mu * (j2() * r_vec(z.gamma()[k])).dot(&z.i_node(k)) * p.v_dc_star
}

/// `μ² v*_dc² / (16 R)`.
pub fn condition1_threshold(model: &Model) -> f64 {
    let p = &model.conv;
    p.mu * p.mu * p.v_dc_star * p.v_dc_star / (16.0 * p.r_filter)
}

/// Evaluates `Q*_sw,k > μ² v*_dc² / (16 R)` at every converter. A converter
/// passes when `margin > rel_margin · threshold`.
pub fn check_condition1(model: &Model, eq: &Equilibrium, rel_margin: f64) -> Vec<Condition1Record> {
    let threshold = condition1_threshold(model);
    (0..model.n())
        .map(|k| {
            let q_sw = switching_reactive_power(model, &eq.z_star, k);
            let margin = q_sw - threshold;
            Condition1Record {
                k,
                q_sw,
                threshold,
                margin,
                pass: margin > rel_margin * threshold,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Relative frequencies `η ṽ_dc`.
    pub omega: Vec<f64>,
    /// Absolute DC voltages.
    pub v_dc: Vec<f64>,
}

pub fn synchronization_report(model: &Model, z: &SystemState) -> SyncReport {
    let p = &model.conv;
    SyncReport {
        omega: z.v_dc_tilde().iter().map(|v| p.eta * v).collect(),
        v_dc: z.v_dc_tilde().iter().map(|v| v + p.v_dc_star).collect(),
    }
}

/// Solves from angle spreads `gauge + k·spread` and keeps one equilibrium
/// per orbit, in the order of `spreads`. Failed starts are skipped.
pub fn sweep_equilibria(
    model: &Model,
    u: &DVector<f64>,
    gauge_angle: f64,
    spreads: &[f64],
    opts: &NewtonOptions,
) -> Vec<Equilibrium> {
    let found: Vec<Option<Equilibrium>> = spreads
        .par_iter()
        .map(|&spread| {
            let guess = spread_guess(model, gauge_angle, spread).ok()?;
            solve_equilibrium(model, u, gauge_angle, Some(&guess), opts).ok()
        })
        .collect();
    let mut distinct: Vec<Equilibrium> = Vec::new();
    for eq in found.into_iter().flatten() {
        let new_orbit = distinct
            .iter()
            .all(|d| quotient_distance(&eq.z_star, &d.z_star, None).distance > ORBIT_SEPARATION);
        if new_orbit {
            distinct.push(eq);
        }
    }
    distinct
}
