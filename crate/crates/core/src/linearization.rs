//! Jacobian of the network vector field, the rotation direction `v(z*)`, the
//! deviation matrix `G(z) = ∂f/∂z(z) - A(z*)`, and the projected Lyapunov
//! certificate `Π = P - P v vᵀ P / (vᵀ P v)`.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{check_condition1, Condition1Record, Equilibrium};
use crate::lyapunov::{complement_basis, eigenvalues, solve_continuous_lyapunov, symmetric_eigenvalues, LyapunovError};
use crate::model::{j2, r_vec, Layout, Model, SystemState};

/// Real parts above `-HURWITZ_MARGIN` are treated as not strictly stable.
pub const HURWITZ_MARGIN: f64 = 1e-9;
/// Relative eigenvalue threshold for the rank of the scaled `Π`.
pub const PI_RANK_REL: f64 = 1e-13;
/// Relative threshold `|λ| < ZERO_EIG_REL · ‖A‖` for zero eigenvalues.
pub const ZERO_EIG_REL: f64 = 1e-8;
pub const DEFAULT_SIGMA: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("certificate refused: equilibrium condition fails at converter(s) {failing:?}")]
    Refused { failing: Vec<usize> },
    #[error("instability detected: reduced Jacobian has eigenvalues with Re >= -{HURWITZ_MARGIN:e}: {offending:?}")]
    Unstable { offending: Vec<(f64, f64)> },
    #[error("numerical failure in reduced Lyapunov solve: {0}")]
    Numerical(#[from] LyapunovError),
    #[error("invalid weight: {0}")]
    Weight(String),
}

/// `A(z)` with named views of its 2 × 2 block partition
/// `δz₁ = (δγ, δṽ_dc)`, `δz₂ = δx`.
#[derive(Debug, Clone)]
pub struct JacobianData {
    pub a_matrix: DMatrix<f64>,
    layout: Layout,
}

impl JacobianData {
    fn split(&self) -> usize {
        2 * self.layout.n
    }
    pub fn a11(&self) -> DMatrix<f64> {
        let s = self.split();
        self.a_matrix.view((0, 0), (s, s)).into_owned()
    }
    pub fn a12(&self) -> DMatrix<f64> {
        let (s, n) = (self.split(), self.layout.dim());
        self.a_matrix.view((0, s), (s, n - s)).into_owned()
    }
    pub fn a21(&self) -> DMatrix<f64> {
        let (s, n) = (self.split(), self.layout.dim());
        self.a_matrix.view((s, 0), (n - s, s)).into_owned()
    }
    pub fn a22(&self) -> DMatrix<f64> {
        let (s, n) = (self.split(), self.layout.dim());
        self.a_matrix.view((s, s), (n - s, n - s)).into_owned()
    }
}

fn put2(m: &mut DMatrix<f64>, row: usize, col: usize, b: &Matrix2<f64>) {
    for r in 0..2 {
        for c in 0..2 {
            m[(row + r, col + c)] += b[(r, c)];
        }
    }
}

/// `∂(K f)/∂z`, the Jacobian of the unscaled right-hand side.
pub(crate) fn scaled_jacobian_into(model: &Model, z: &[f64], out: &mut DMatrix<f64>) {
    let l = model.layout();
    let (n, _) = (l.n, l.m);
    let p = &model.conv;
    let half_mu = 0.5 * p.mu;
    let j = j2();
    let eye = Matrix2::identity();
    out.fill(0.0);
    for k in 0..n {
        let g = z[l.gamma() + k];
        let r = r_vec(g);
        let jr = j * r;
        let ik = Vector2::new(z[l.i_f() + 2 * k], z[l.i_f() + 2 * k + 1]);
        let vdc = z[l.v_dc() + k] + p.v_dc_star;
        let (rg, rv, ri, rc) = (l.gamma() + k, l.v_dc() + k, l.i_f() + 2 * k, l.v_c() + 2 * k);

        out[(rg, rv)] = p.eta;

        out[(rv, rg)] = -half_mu * jr.dot(&ik);
        out[(rv, rv)] = -p.k_p;
        out[(rv, ri)] = -half_mu * r[0];
        out[(rv, ri + 1)] = -half_mu * r[1];

        out[(ri, rg)] = half_mu * jr[0] * vdc;
        out[(ri + 1, rg)] = half_mu * jr[1] * vdc;
        out[(ri, rv)] = half_mu * r[0];
        out[(ri + 1, rv)] = half_mu * r[1];
        put2(out, ri, ri, &(-model.z_r()));
        put2(out, ri, rc, &(-eye));

        put2(out, rc, rc, &(-model.z_c()));
        put2(out, rc, ri, &eye);
    }
    for (e, &(i, jn)) in model.topo.edges.iter().enumerate() {
        let rl = l.i_line() + 2 * e;
        put2(out, l.v_c() + 2 * i, rl, &(-eye));
        put2(out, l.v_c() + 2 * jn, rl, &eye);
        put2(out, rl, rl, &(-model.z_l()));
        put2(out, rl, l.v_c() + 2 * i, &eye);
        put2(out, rl, l.v_c() + 2 * jn, &(-eye));
    }
}

pub(crate) fn jacobian_into(model: &Model, z: &[f64], out: &mut DMatrix<f64>) {
    scaled_jacobian_into(model, z, out);
    for (r, k) in model.k_diag().iter().enumerate() {
        let inv = 1.0 / k;
        out.row_mut(r).scale_mut(inv);
    }
}

/// Analytic Jacobian `A(z) = ∂f/∂z`.
pub fn jacobian(model: &Model, z: &SystemState) -> JacobianData {
    let mut a = DMatrix::zeros(model.dim(), model.dim());
    jacobian_into(model, z.as_slice(), &mut a);
    JacobianData {
        a_matrix: a,
        layout: model.layout(),
    }
}

/// `∂(A(z) δz)/∂z`: the coupling block of the variational system's own
/// Jacobian. Only the γ, ṽ_dc and filter-current columns are nonzero.
pub(crate) fn variational_coupling_into(model: &Model, z: &[f64], dz: &[f64], out: &mut DMatrix<f64>) {
    let l = model.layout();
    let p = &model.conv;
    let half_mu = 0.5 * p.mu;
    let j = j2();
    out.fill(0.0);
    for k in 0..l.n {
        let r = r_vec(z[l.gamma() + k]);
        let jr = j * r;
        let ik = Vector2::new(z[l.i_f() + 2 * k], z[l.i_f() + 2 * k + 1]);
        let vdc = z[l.v_dc() + k] + p.v_dc_star;
        let dg = dz[l.gamma() + k];
        let dv = dz[l.v_dc() + k];
        let di = Vector2::new(dz[l.i_f() + 2 * k], dz[l.i_f() + 2 * k + 1]);
        let (rg, rv, ri) = (l.gamma() + k, l.v_dc() + k, l.i_f() + 2 * k);

        // DC row: -c[(J r)ᵀ i δγ + rᵀ δi] / C_dc
        out[(rv, rg)] = -half_mu * (-r.dot(&ik) * dg + jr.dot(&di)) / p.c_dc;
        out[(rv, ri)] = -half_mu * jr[0] * dg / p.c_dc;
        out[(rv, ri + 1)] = -half_mu * jr[1] * dg / p.c_dc;
        // filter rows: c[J r (ṽ + v*) δγ + r δṽ] / L
        for d in 0..2 {
            out[(ri + d, rg)] = half_mu * (-r[d] * vdc * dg + jr[d] * dv) / p.l_filter;
            out[(ri + d, rv)] = half_mu * jr[d] * dg / p.l_filter;
        }
    }
}

/// `G(z) = ∂f/∂z(z) - A(z*)`, assembled directly from the deviation blocks
///
/// - `Ŵ(z) = ½μ diag((J Rot(γ))ᵀ i - (J Rot(γ*))ᵀ i*)`
/// - `Ŷ(z) = ½μ (Rot(γ) - Rot(γ*))`
/// - `M̂(z) = ½μ (diag(v_dc) J Rot(γ) - v*_dc J Rot(γ*))`
///
/// placed in the DC rows (scaled by `C_dc⁻¹`) and filter-current rows
/// (scaled by `L⁻¹`).
pub fn deviation_matrix(model: &Model, z: &SystemState, z_star: &SystemState) -> DMatrix<f64> {
    let l = model.layout();
    let p = &model.conv;
    let half_mu = 0.5 * p.mu;
    let j = j2();
    let mut g = DMatrix::zeros(l.dim(), l.dim());
    for k in 0..l.n {
        let (r, rs) = (r_vec(z.gamma()[k]), r_vec(z_star.gamma()[k]));
        let (ik, iks) = (z.i_node(k), z_star.i_node(k));
        let w_hat = half_mu * ((j * r).dot(&ik) - (j * rs).dot(&iks));
        let y_hat = (r - rs) * half_mu;
        let vdc = z.v_dc_tilde()[k] + p.v_dc_star;
        let vdc_star = z_star.v_dc_tilde()[k] + p.v_dc_star;
        let m_hat = (j * r * vdc - j * rs * vdc_star) * half_mu;
        let (rg, rv, ri) = (l.gamma() + k, l.v_dc() + k, l.i_f() + 2 * k);

        g[(rv, rg)] = -w_hat / p.c_dc;
        g[(rv, ri)] = -y_hat[0] / p.c_dc;
        g[(rv, ri + 1)] = -y_hat[1] / p.c_dc;
        for d in 0..2 {
            g[(ri + d, rg)] = m_hat[d] / p.l_filter;
            g[(ri + d, rv)] = y_hat[d] / p.l_filter;
        }
    }
    g
}

/// Rotation direction `v(z*) = (1ₙ, 0ₙ, J x*)`, unnormalised.
pub fn zero_direction(model: &Model, z_star: &SystemState) -> DVector<f64> {
    let l = model.layout();
    let mut v = DVector::zeros(l.dim());
    for k in 0..l.n {
        v[l.gamma() + k] = 1.0;
    }
    let x = z_star.ac();
    for (pair, chunk) in x.chunks_exact(2).enumerate() {
        let at = l.ac() + 2 * pair;
        v[at] = -chunk[1];
        v[at + 1] = chunk[0];
    }
    v
}

/// Choice of the decrease weight `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum QMode {
    /// `diag(q₁ I, q₂ (Jx*)(Jx*)ᵀ/‖Jx*‖²) + σ I`.
    Regularized { sigma: f64 },
    /// The rank-deficient choice with σ = 0.
    RankOne,
}

impl QMode {
    pub fn sigma(&self) -> f64 {
        match self {
            QMode::Regularized { sigma } => *sigma,
            QMode::RankOne => 0.0,
        }
    }
}

impl Default for QMode {
    fn default() -> Self {
        QMode::Regularized { sigma: DEFAULT_SIGMA }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    pub q1: f64,
    pub q2: f64,
    pub q_mode: QMode,
    /// Relative Condition-1 margin required before a certificate is issued.
    pub condition_margin: f64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            q1: 1.0,
            q2: 1.0,
            q_mode: QMode::default(),
            condition_margin: 0.0,
        }
    }
}

/// `Q = diag(q₁ I_{2n}, q₂ (Jx*)(Jx*)ᵀ/‖Jx*‖²) + σ I`.
pub fn decrease_weight(model: &Model, z_star: &SystemState, q1: f64, q2: f64, sigma: f64) -> DMatrix<f64> {
    let l = model.layout();
    let dim = l.dim();
    let mut q = DMatrix::<f64>::identity(dim, dim) * sigma;
    for k in 0..2 * l.n {
        q[(k, k)] += q1;
    }
    let v = zero_direction(model, z_star);
    let jx = v.rows(l.ac(), dim - l.ac()).into_owned();
    let nrm2 = jx.norm_squared();
    if nrm2 > 0.0 {
        let block = (&jx * jx.transpose()) * (q2 / nrm2);
        let mut view = q.view_mut((l.ac(), l.ac()), (dim - l.ac(), dim - l.ac()));
        view += block;
    }
    q
}

/// Projected Lyapunov certificate at an equilibrium.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    /// `A(z*)`.
    pub a_matrix: DMatrix<f64>,
    pub v_star: DVector<f64>,
    pub p_matrix: DMatrix<f64>,
    pub pi_matrix: DMatrix<f64>,
    pub q1: f64,
    pub q2: f64,
    pub q_mode: QMode,
    /// Eigenvalues of the symmetric part of `Π A(z*)` on the complement of
    /// `v_star`, ascending.
    pub decrease_spectrum: Vec<f64>,
    /// Full spectrum of `A(z*)`, sorted by decreasing real part.
    pub a_spectrum: Vec<Complex<f64>>,
    /// Spectrum of the reduced Jacobian on the complement of `v_star`.
    pub reduced_spectrum: Vec<Complex<f64>>,
    /// Eigenvalues of `Π`, ascending.
    pub pi_spectrum: Vec<f64>,
    /// `‖P₁₂‖_F / ‖P‖_F` for the (γ, ṽ_dc) / x partition.
    pub block_deviation: f64,
    /// Eigenvalues of the rank-one `Q` restricted to the complement of
    /// `v_star`, ascending. Zeros here are directions the unregularised
    /// decrease weight does not see.
    pub rank_one_q_spectrum: Vec<f64>,
    pub condition1: Vec<Condition1Record>,
}

impl LyapunovCertificate {
    pub fn dim(&self) -> usize {
        self.v_star.len()
    }

    pub fn sigma(&self) -> f64 {
        self.q_mode.sigma()
    }

    /// Number of eigenvalues of `A(z*)` with `|λ| < ZERO_EIG_REL · ‖A‖`.
    pub fn zero_eigenvalue_count(&self) -> usize {
        let a_norm = self.a_matrix.norm();
        self.a_spectrum
            .iter()
            .filter(|e| e.norm() < ZERO_EIG_REL * a_norm)
            .count()
    }

    /// Numerical rank of `Π`, measured on the Jacobi-scaled matrix
    /// `D Π D` with `D = diag(Π)^{-1/2}`. The congruence leaves the rank
    /// unchanged but removes the spread of the state scales, which otherwise
    /// pushes the small nonzero eigenvalues down to roundoff relative to
    /// `‖Π‖`.
    pub fn pi_rank(&self) -> usize {
        let d = self.pi_matrix.diagonal().map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 });
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |r, c| d[r] * self.pi_matrix[(r, c)] * d[c]);
        let ev = symmetric_eigenvalues(&scaled);
        let top = ev.iter().copied().fold(0.0, f64::max);
        ev.iter().filter(|&&e| e > PI_RANK_REL * top).count()
    }

    /// Whether `P` admits a Cholesky factorisation. With `P ≻ 0` the
    /// projection `Π` has rank exactly `N − 1`.
    pub fn p_positive_definite(&self) -> bool {
        self.p_matrix.clone().cholesky().is_some()
    }

    /// Number of rank-one `Q` eigenvalues on the complement that are zero
    /// to relative precision.
    pub fn rank_one_q_kernel_dim(&self) -> usize {
        let top = self.rank_one_q_spectrum.iter().copied().fold(0.0, f64::max);
        self.rank_one_q_spectrum
            .iter()
            .filter(|&&e| e.abs() <= 1e-12 * top.max(1.0))
            .count()
    }
}

/// Builds `P` from a reduced Lyapunov solve on the complement of `v(z*)`,
/// lifts it with `v vᵀ/‖v‖²`, and forms `Π`.
pub fn lyapunov_certificate(
    model: &Model,
    eq: &Equilibrium,
    opts: &CertificateOptions,
) -> Result<LyapunovCertificate, CertificateError> {
    if !(opts.q1 > 0.0 && opts.q2 > 0.0) {
        return Err(CertificateError::Weight(format!("q1 = {}, q2 = {} must be positive", opts.q1, opts.q2)));
    }
    if opts.q_mode.sigma() < 0.0 {
        return Err(CertificateError::Weight(format!("sigma = {} must be >= 0", opts.q_mode.sigma())));
    }
    let condition1 = check_condition1(model, eq, opts.condition_margin);
    let failing: Vec<usize> = condition1.iter().filter(|c| !c.pass).map(|c| c.k).collect();
    if !failing.is_empty() {
        return Err(CertificateError::Refused { failing });
    }

    let z_star = &eq.z_star;
    let a = jacobian(model, z_star).a_matrix;
    let v = zero_direction(model, z_star);
    let u = complement_basis(&v);
    let a_r = u.transpose() * &a * &u;
    let reduced_spectrum = eigenvalues(&a_r)?;
    let offending: Vec<(f64, f64)> = reduced_spectrum
        .iter()
        .filter(|e| e.re >= -HURWITZ_MARGIN)
        .map(|e| (e.re, e.im))
        .collect();
    if !offending.is_empty() {
        return Err(CertificateError::Unstable { offending });
    }

    let q = decrease_weight(model, z_star, opts.q1, opts.q2, opts.q_mode.sigma());
    let q_r = u.transpose() * &q * &u;
    let p_r = solve_continuous_lyapunov(&a_r, &q_r)?;
    let mut p = &u * p_r * u.transpose() + (&v * v.transpose()) / v.norm_squared();
    p = (&p + p.transpose()) * 0.5;

    let pv = &p * &v;
    let vpv = v.dot(&pv);
    let mut pi = &p - (&pv * pv.transpose()) / vpv;
    pi = (&pi + pi.transpose()) * 0.5;

    let s = &pi * &a;
    let decrease_spectrum = symmetric_eigenvalues(&(u.transpose() * (&s + s.transpose()) * &u * 0.5));
    let pi_spectrum = symmetric_eigenvalues(&pi);
    let a_spectrum = eigenvalues(&a)?;

    let split = 2 * model.n();
    let p12 = p.view((0, split), (split, model.dim() - split)).norm();
    let block_deviation = p12 / p.norm();

    let q_rank_one = decrease_weight(model, z_star, opts.q1, opts.q2, 0.0);
    let rank_one_q_spectrum = symmetric_eigenvalues(&(u.transpose() * q_rank_one * &u));

    Ok(LyapunovCertificate {
        a_matrix: a,
        v_star: v,
        p_matrix: p,
        pi_matrix: pi,
        q1: opts.q1,
        q2: opts.q2,
        q_mode: opts.q_mode,
        decrease_spectrum,
        a_spectrum,
        reduced_spectrum,
        pi_spectrum,
        block_deviation,
        rank_one_q_spectrum,
        condition1,
    })
}

/// `V(δz) = δzᵀ Π δz`.
pub fn lyapunov_value(cert: &LyapunovCertificate, delta_z: &DVector<f64>) -> f64 {
    delta_z.dot(&(&cert.pi_matrix * delta_z))
}

/// Outcome of evaluating the decrease form on random tangent vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecreaseSample {
    pub samples: usize,
    /// Largest `δzᵀ(ΠA + AᵀΠ)δz / ‖δz‖²` observed.
    pub max_normalized: f64,
    pub all_negative: bool,
}

/// Draws `count` vectors uniformly from `[-1, 1]ᴺ`, makes each
/// `P`-orthogonal to `v(z*)`, and evaluates `δzᵀ(ΠA + AᵀΠ)δz` on it.
pub fn sample_decrease<R: Rng>(cert: &LyapunovCertificate, count: usize, rng: &mut R) -> DecreaseSample {
    let n = cert.dim();
    let pi_a = &cert.pi_matrix * &cert.a_matrix;
    let form = &pi_a + pi_a.transpose();
    let pv = &cert.p_matrix * &cert.v_star;
    let vpv = cert.v_star.dot(&pv);
    let mut max_normalized = f64::NEG_INFINITY;
    for _ in 0..count {
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let dz = &w - &cert.v_star * (pv.dot(&w) / vpv);
        let value = dz.dot(&(&form * &dz)) / dz.norm_squared();
        max_normalized = max_normalized.max(value);
    }
    DecreaseSample {
        samples: count,
        max_normalized,
        all_negative: count > 0 && max_normalized < 0.0,
    }
}
