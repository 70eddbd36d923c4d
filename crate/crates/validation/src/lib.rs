//! Independent numerical oracles for checking `convnet` against quantities
//! computed by other means: finite differences, direct dense
//! factorisations and two-trajectory comparisons.

use std::f64::consts::PI;

use convnet::model::{vector_field, Model, SystemState};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Central-difference Jacobian of `f(·, u)` at `z` with per-coordinate step
/// `h · max(1, |z_j|)`.
pub fn fd_jacobian(model: &Model, z: &SystemState, u: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let dim = z.dim();
    let mut jac = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let step = h * z.as_slice()[j].abs().max(1.0);
        let mut plus = z.clone();
        let mut minus = z.clone();
        plus.as_mut_slice()[j] += step;
        minus.as_mut_slice()[j] -= step;
        let fp = vector_field(model, &plus, u).expect("state matches model");
        let fm = vector_field(model, &minus, u).expect("state matches model");
        jac.set_column(j, &((fp - fm) / (2.0 * step)));
    }
    jac
}

/// Random state around `center`: angles uniform on `[-π, π)`, DC deviations
/// uniform in `±dc`, AC entries offset uniformly by `±ac`.
pub fn random_state<R: Rng>(rng: &mut R, center: &SystemState, dc: f64, ac: f64) -> SystemState {
    let mut z = center.clone();
    for g in z.gamma_mut() {
        *g = rng.random_range(-PI..PI);
    }
    for v in z.v_dc_tilde_mut() {
        *v = rng.random_range(-dc..=dc);
    }
    for x in z.ac_mut() {
        *x += rng.random_range(-ac..=ac);
    }
    z
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Rank of a positive semidefinite matrix after the congruence
/// `D M D`, `D = diag(M)^{-1/2}`, counting eigenvalues above
/// `rel · λ_max`.
pub fn scaled_psd_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    let d: Vec<f64> = m.diagonal().iter().map(|&x| if x > 0.0 { x.sqrt().recip() } else { 1.0 }).collect();
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| d[r] * m[(r, c)] * d[c]);
    let ev = symmetric_spectrum(&scaled);
    let top = ev.last().copied().unwrap_or(0.0);
    ev.iter().filter(|&&e| e > rel * top).count()
}

/// `max_k ‖a_k - b_k‖ / ‖a_k‖` over paired vectors.
pub fn max_relative_error(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / x.norm())
        .fold(0.0, f64::max)
}
