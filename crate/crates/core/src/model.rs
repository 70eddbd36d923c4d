//! Lumped network model of identical matching-controlled DC/AC converters
//! coupled through identical RL lines.
//!
//! The state is stored block-contiguously as
//! `z = (γ, ṽ_dc, i, v, i_ℓ)` with `dq` pairs interleaved per node (for `i`
//! and `v`) and per edge (for `i_ℓ`), so `N = 6n + 2m`. Angles are kept
//! unwrapped; they are wrapped to `(-π, π]` only when distances are taken.
//!
//! Everything in this module is a pure function of immutable data. A
//! [`Model`] can be shared freely between threads.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default nominal frequency, 50 Hz.
pub const DEFAULT_OMEGA_N: f64 = 100.0 * PI;

/// Grid resolution used by [`quotient_distance`] before local refinement.
pub const DEFAULT_THETA_GRID: usize = 720;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("shape mismatch: expected {expected}, got {got} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Physical and control constants shared by every converter (p.u.).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterParams {
    /// Angle gain η (rad/s per volt).
    pub eta: f64,
    pub c_dc: f64,
    /// Lumped DC gain `K_p = G_dc + K̂_p`.
    pub k_p: f64,
    /// Modulation amplitude, in `[0, 1]`.
    pub mu: f64,
    pub r_filter: f64,
    pub l_filter: f64,
    pub c_filter: f64,
    pub g_load: f64,
    /// Shunt reactive susceptance in parallel with the load conductance.
    #[serde(default)]
    pub b_load: f64,
    pub v_dc_star: f64,
    /// Constant DC-side current source (the dispatch value).
    pub i_dc_star: f64,
}

impl ConverterParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("eta", self.eta),
            ("c_dc", self.c_dc),
            ("k_p", self.k_p),
            ("r_filter", self.r_filter),
            ("l_filter", self.l_filter),
            ("c_filter", self.c_filter),
            ("g_load", self.g_load),
            ("v_dc_star", self.v_dc_star),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::Parameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(ModelError::Parameter {
                name: "mu",
                value: self.mu,
                reason: "mu out of [0,1]",
            });
        }
        for (name, value) in [("b_load", self.b_load), ("i_dc_star", self.i_dc_star)] {
            if !value.is_finite() {
                return Err(ModelError::Parameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineParams {
    pub r_line: f64,
    pub l_line: f64,
}

impl LineParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("r_line", self.r_line), ("l_line", self.l_line)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::Parameter {
                    name,
                    value,
                    reason: "must be positive and finite",
                });
            }
        }
        Ok(())
    }
}

/// Node count and oriented edge list. Edge `(i, j)` contributes `+1` at row
/// `i` and `-1` at row `j` of the incidence matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Topology {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self, ModelError> {
        let topo = Self { n, edges };
        topo.validate()?;
        Ok(topo)
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::Topology("network has no nodes".into()));
        }
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            if i >= self.n || j >= self.n {
                return Err(ModelError::Topology(format!(
                    "edge {e} = ({i}, {j}) references a node outside 0..{}",
                    self.n
                )));
            }
            if i == j {
                return Err(ModelError::Topology(format!("edge {e} is a self-loop at node {i}")));
            }
        }
        if !self.is_connected() {
            return Err(ModelError::Topology("graph is not connected".into()));
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for &(i, j) in &self.edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            parent[ri] = rj;
        }
        let root = find(&mut parent, 0);
        (0..self.n).all(|k| find(&mut parent, k) == root)
    }

    /// Oriented incidence matrix 𝓑 (n × m).
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n, self.m());
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            b[(i, e)] = 1.0;
            b[(j, e)] = -1.0;
        }
        b
    }
}

/// Offsets of the state blocks inside the stacked vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
}

impl Layout {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }
    pub fn dim(&self) -> usize {
        6 * self.n + 2 * self.m
    }
    pub fn gamma(&self) -> usize {
        0
    }
    pub fn v_dc(&self) -> usize {
        self.n
    }
    pub fn i_f(&self) -> usize {
        2 * self.n
    }
    pub fn v_c(&self) -> usize {
        4 * self.n
    }
    pub fn i_line(&self) -> usize {
        6 * self.n
    }
    /// Start of the AC block `x = (i, v, i_ℓ)`.
    pub fn ac(&self) -> usize {
        2 * self.n
    }
}

/// Stacked network state `z = (γ, ṽ_dc, i, v, i_ℓ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    layout: Layout,
    data: DVector<f64>,
}

impl SystemState {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            data: DVector::zeros(layout.dim()),
        }
    }

    pub fn from_vector(layout: Layout, data: DVector<f64>) -> Result<Self, ModelError> {
        if data.len() != layout.dim() {
            return Err(ModelError::Shape {
                what: "state vector",
                expected: layout.dim(),
                got: data.len(),
            });
        }
        Ok(Self { layout, data })
    }

    pub fn from_slice(layout: Layout, data: &[f64]) -> Result<Self, ModelError> {
        Self::from_vector(layout, DVector::from_column_slice(data))
    }

    /// Packs the five blocks into one state.
    pub fn from_blocks(
        gamma: &[f64],
        v_dc_tilde: &[f64],
        i_f: &[f64],
        v_c: &[f64],
        i_line: &[f64],
    ) -> Result<Self, ModelError> {
        let n = gamma.len();
        if !i_line.len().is_multiple_of(2) {
            return Err(ModelError::Shape {
                what: "line current block (dq pairs)",
                expected: i_line.len() + 1,
                got: i_line.len(),
            });
        }
        let layout = Layout::new(n, i_line.len() / 2);
        for (what, block, expected) in [
            ("v_dc_tilde block", v_dc_tilde, n),
            ("filter current block", i_f, 2 * n),
            ("capacitor voltage block", v_c, 2 * n),
        ] {
            if block.len() != expected {
                return Err(ModelError::Shape {
                    what,
                    expected,
                    got: block.len(),
                });
            }
        }
        let data: Vec<f64> = [gamma, v_dc_tilde, i_f, v_c, i_line].concat();
        Self::from_vector(layout, DVector::from_vec(data))
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }
    pub fn dim(&self) -> usize {
        self.data.len()
    }
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }
    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_mut_slice()
    }
    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    fn block(&self, start: usize, len: usize) -> &[f64] {
        &self.data.as_slice()[start..start + len]
    }
    fn block_mut(&mut self, start: usize, len: usize) -> &mut [f64] {
        &mut self.data.as_mut_slice()[start..start + len]
    }

    pub fn gamma(&self) -> &[f64] {
        self.block(self.layout.gamma(), self.layout.n)
    }
    pub fn gamma_mut(&mut self) -> &mut [f64] {
        let (s, n) = (self.layout.gamma(), self.layout.n);
        self.block_mut(s, n)
    }
    pub fn v_dc_tilde(&self) -> &[f64] {
        self.block(self.layout.v_dc(), self.layout.n)
    }
    pub fn v_dc_tilde_mut(&mut self) -> &mut [f64] {
        let (s, n) = (self.layout.v_dc(), self.layout.n);
        self.block_mut(s, n)
    }
    pub fn i_f(&self) -> &[f64] {
        self.block(self.layout.i_f(), 2 * self.layout.n)
    }
    pub fn v_c(&self) -> &[f64] {
        self.block(self.layout.v_c(), 2 * self.layout.n)
    }
    pub fn i_line(&self) -> &[f64] {
        self.block(self.layout.i_line(), 2 * self.layout.m)
    }
    /// AC signals `x = (i, v, i_ℓ)`.
    pub fn ac(&self) -> &[f64] {
        let s = self.layout.ac();
        &self.data.as_slice()[s..]
    }
    pub fn ac_mut(&mut self) -> &mut [f64] {
        let s = self.layout.ac();
        &mut self.data.as_mut_slice()[s..]
    }

    /// Filter current of node `k` as a dq vector.
    pub fn i_node(&self, k: usize) -> Vector2<f64> {
        let s = self.layout.i_f() + 2 * k;
        Vector2::new(self.data[s], self.data[s + 1])
    }

    /// Distance to `other` with angle differences wrapped onto the circle.
    pub fn circle_distance(&self, other: &SystemState) -> f64 {
        let n = self.layout.n;
        self.data
            .iter()
            .zip(other.data.iter())
            .enumerate()
            .map(|(k, (a, b))| {
                let d = if k < n { wrap_angle(a - b) } else { a - b };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = a.rem_euclid(two_pi);
    if w > PI {
        w -= two_pi;
    }
    w
}

/// `J = [[0, -1], [1, 0]]`.
pub fn j2() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

/// Rotation `R(θ)`.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Modulation direction `r(γ) = (-sin γ, cos γ)`.
pub fn r_vec(gamma: f64) -> Vector2<f64> {
    let (s, c) = gamma.sin_cos();
    Vector2::new(-s, c)
}

/// `Rot(γ)`: the 2n × n block-diagonal matrix with columns `r(γ_k)`.
pub fn rot_matrix(gamma: &[f64]) -> DMatrix<f64> {
    let n = gamma.len();
    let mut out = DMatrix::zeros(2 * n, n);
    for (k, &g) in gamma.iter().enumerate() {
        let r = r_vec(g);
        out[(2 * k, k)] = r[0];
        out[(2 * k + 1, k)] = r[1];
    }
    out
}

/// Assembled network with every derived constant matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    pub conv: ConverterParams,
    pub line: LineParams,
    pub topo: Topology,
    pub omega_n: f64,
    layout: Layout,
    z_r: Matrix2<f64>,
    z_c: Matrix2<f64>,
    z_l: Matrix2<f64>,
    incidence: DMatrix<f64>,
    /// Diagonal of `K`.
    k_diag: DVector<f64>,
}

/// Validates the inputs and builds the derived matrices.
pub fn assemble_model(
    conv: ConverterParams,
    line: LineParams,
    topo: Topology,
    omega_n: f64,
) -> Result<Model, ModelError> {
    conv.validate()?;
    line.validate()?;
    topo.validate()?;
    if !(omega_n > 0.0) || !omega_n.is_finite() {
        return Err(ModelError::Parameter {
            name: "omega_n",
            value: omega_n,
            reason: "must be positive and finite",
        });
    }
    let layout = Layout::new(topo.n, topo.m());
    let eye = Matrix2::identity();
    let j = j2();
    let z_r = eye * conv.r_filter + j * (conv.l_filter * omega_n);
    let z_c = eye * conv.g_load + j * (conv.c_filter * omega_n + conv.b_load);
    let z_l = eye * line.r_line + j * (line.l_line * omega_n);

    let mut k_diag = DVector::zeros(layout.dim());
    for k in 0..layout.n {
        k_diag[layout.gamma() + k] = 1.0;
        k_diag[layout.v_dc() + k] = conv.c_dc;
    }
    for k in 0..2 * layout.n {
        k_diag[layout.i_f() + k] = conv.l_filter;
        k_diag[layout.v_c() + k] = conv.c_filter;
    }
    for k in 0..2 * layout.m {
        k_diag[layout.i_line() + k] = line.l_line;
    }
    let incidence = topo.incidence();
    Ok(Model {
        conv,
        line,
        topo,
        omega_n,
        layout,
        z_r,
        z_c,
        z_l,
        incidence,
        k_diag,
    })
}

impl Model {
    pub fn layout(&self) -> Layout {
        self.layout
    }
    pub fn n(&self) -> usize {
        self.layout.n
    }
    pub fn m(&self) -> usize {
        self.layout.m
    }
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Per-node filter impedance block `R I + L ω_n J`.
    pub fn z_r(&self) -> Matrix2<f64> {
        self.z_r
    }
    /// Per-node shunt admittance block `G I + (C ω_n + b) J`.
    pub fn z_c(&self) -> Matrix2<f64> {
        self.z_c
    }
    /// Per-edge line impedance block `R_ℓ I + L_ℓ ω_n J`.
    pub fn z_l(&self) -> Matrix2<f64> {
        self.z_l
    }
    pub fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }
    /// `B = 𝓑 ⊗ I₂`.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        self.incidence.kronecker(&DMatrix::<f64>::identity(2, 2))
    }
    pub fn k_diag(&self) -> &DVector<f64> {
        &self.k_diag
    }

    /// Input vector whose DC block carries `u_dc` and is zero elsewhere.
    pub fn input_from_dc(&self, u_dc: &[f64]) -> Result<DVector<f64>, ModelError> {
        if u_dc.len() != self.n() {
            return Err(ModelError::Shape {
                what: "DC input block",
                expected: self.n(),
                got: u_dc.len(),
            });
        }
        let mut u = DVector::zeros(self.dim());
        u.rows_mut(self.layout.v_dc(), self.n())
            .copy_from_slice(u_dc);
        Ok(u)
    }

    /// Input built from the dispatch value `i_dc_star` at every converter.
    pub fn dispatch_input(&self) -> DVector<f64> {
        let dc = vec![self.conv.i_dc_star; self.n()];
        self.input_from_dc(&dc).expect("dimension matches by construction")
    }

    pub fn dc_block<'a>(&self, u: &'a DVector<f64>) -> &'a [f64] {
        &u.as_slice()[self.layout.v_dc()..self.layout.v_dc() + self.n()]
    }

    /// Unscaled right-hand side `K ż` written into `out`. Allocation free.
    pub(crate) fn scaled_rhs_into(&self, z: &[f64], u_dc: &[f64], out: &mut [f64]) {
        let l = self.layout;
        let (n, m) = (l.n, l.m);
        let c = &self.conv;
        let half_mu = 0.5 * c.mu;
        let (gam, vdc, ifl, vc, il) = (
            &z[l.gamma()..l.gamma() + n],
            &z[l.v_dc()..l.v_dc() + n],
            &z[l.i_f()..l.i_f() + 2 * n],
            &z[l.v_c()..l.v_c() + 2 * n],
            &z[l.i_line()..l.i_line() + 2 * m],
        );
        let (zr, zc, zl) = (&self.z_r, &self.z_c, &self.z_l);
        for k in 0..n {
            let (s, co) = gam[k].sin_cos();
            let (rx, ry) = (-s, co);
            let (id, iq) = (ifl[2 * k], ifl[2 * k + 1]);
            let (vd, vq) = (vc[2 * k], vc[2 * k + 1]);
            out[l.gamma() + k] = c.eta * vdc[k];
            out[l.v_dc() + k] = -c.k_p * vdc[k] - half_mu * (rx * id + ry * iq) + u_dc[k];
            let emf = half_mu * (vdc[k] + c.v_dc_star);
            out[l.i_f() + 2 * k] = -(zr[(0, 0)] * id + zr[(0, 1)] * iq) + emf * rx - vd;
            out[l.i_f() + 2 * k + 1] = -(zr[(1, 0)] * id + zr[(1, 1)] * iq) + emf * ry - vq;
            out[l.v_c() + 2 * k] = -(zc[(0, 0)] * vd + zc[(0, 1)] * vq) + id;
            out[l.v_c() + 2 * k + 1] = -(zc[(1, 0)] * vd + zc[(1, 1)] * vq) + iq;
        }
        for (e, &(i, j)) in self.topo.edges.iter().enumerate() {
            let (ld, lq) = (il[2 * e], il[2 * e + 1]);
            // -B i_ℓ on the capacitor rows
            out[l.v_c() + 2 * i] -= ld;
            out[l.v_c() + 2 * i + 1] -= lq;
            out[l.v_c() + 2 * j] += ld;
            out[l.v_c() + 2 * j + 1] += lq;
            // -Z_ℓ i_ℓ + Bᵀ v
            out[l.i_line() + 2 * e] =
                -(zl[(0, 0)] * ld + zl[(0, 1)] * lq) + vc[2 * i] - vc[2 * j];
            out[l.i_line() + 2 * e + 1] =
                -(zl[(1, 0)] * ld + zl[(1, 1)] * lq) + vc[2 * i + 1] - vc[2 * j + 1];
        }
    }

    /// `ż = f(z, u)` written into `out`. Allocation free; used by integrators.
    pub(crate) fn rhs_into(&self, z: &[f64], u_dc: &[f64], out: &mut [f64]) {
        self.scaled_rhs_into(z, u_dc, out);
        for (o, k) in out.iter_mut().zip(self.k_diag.iter()) {
            *o /= k;
        }
    }

    fn check_dims(&self, z: &SystemState, u: &DVector<f64>) -> Result<(), ModelError> {
        if z.dim() != self.dim() {
            return Err(ModelError::Shape {
                what: "state",
                expected: self.dim(),
                got: z.dim(),
            });
        }
        if u.len() != self.dim() {
            return Err(ModelError::Shape {
                what: "input",
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `K f(z, u)`: the bracketed right-hand side before scaling by `K⁻¹`.
    /// Equilibrium residuals are measured on this form, in p.u. currents and
    /// voltages.
    pub fn scaled_vector_field(
        &self,
        z: &SystemState,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_dims(z, u)?;
        let mut out = DVector::zeros(self.dim());
        self.scaled_rhs_into(z.as_slice(), self.dc_block(u), out.as_mut_slice());
        Ok(out)
    }
}

/// `ż = f(z, u)`. Only the DC block of `u` enters the dynamics.
pub fn vector_field(
    model: &Model,
    z: &SystemState,
    u: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    model.check_dims(z, u)?;
    let mut out = DVector::zeros(model.dim());
    model.rhs_into(z.as_slice(), model.dc_block(u), out.as_mut_slice());
    Ok(out)
}

/// Rotates every dq pair of `ac` by `theta` in place.
pub fn rotate_pairs(ac: &mut [f64], theta: f64) {
    let (s, c) = theta.sin_cos();
    for pair in ac.chunks_exact_mut(2) {
        let (d, q) = (pair[0], pair[1]);
        pair[0] = c * d - s * q;
        pair[1] = s * d + c * q;
    }
}

/// Symmetry action `(γ + θ1ₙ mod 2π, ṽ_dc, R(θ)x)`.
pub fn group_action(z: &SystemState, theta: f64) -> SystemState {
    let mut out = z.clone();
    for g in out.gamma_mut() {
        *g = wrap_angle(*g + theta);
    }
    rotate_pairs(out.ac_mut(), theta);
    out
}

/// `H(θ) w` for a tangent or derivative vector `w`: AC pairs rotated, other
/// blocks unchanged.
pub fn apply_h(layout: Layout, w: &DVector<f64>, theta: f64) -> DVector<f64> {
    let mut out = w.clone();
    rotate_pairs(&mut out.as_mut_slice()[layout.ac()..], theta);
    out
}

/// Displacement `z1 - group_action(z2, θ)` with angles wrapped.
pub fn orbit_difference(z1: &SystemState, z2: &SystemState, theta: f64) -> DVector<f64> {
    let layout = z1.layout();
    let n = layout.n;
    let mut w = DVector::zeros(z1.dim());
    let (a, b) = (z1.as_slice(), z2.as_slice());
    for k in 0..n {
        w[k] = wrap_angle(a[k] - b[k] - theta);
    }
    for k in n..2 * n {
        w[k] = a[k] - b[k];
    }
    let (s, c) = theta.sin_cos();
    let ac = layout.ac();
    let mut k = ac;
    while k < layout.dim() {
        let (d, q) = (b[k], b[k + 1]);
        w[k] = a[k] - (c * d - s * q);
        w[k + 1] = a[k + 1] - (s * d + c * q);
        k += 2;
    }
    w
}

fn weighted_norm(w: &DVector<f64>, weight: Option<&DMatrix<f64>>) -> f64 {
    match weight {
        None => w.norm(),
        Some(p) => w.dot(&(p * w)).max(0.0).sqrt(),
    }
}

/// Result of a quotient-distance minimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotientDistance {
    pub distance: f64,
    /// Minimiser in `(-π, π]`: `z1` is closest to `group_action(z2, theta_star)`.
    pub theta_star: f64,
}

/// Distance between the orbits of `z1` and `z2`: the minimum over `θ ∈ S¹`
/// of the (optionally weighted) norm of `z1 - group_action(z2, θ)`.
pub fn quotient_distance(
    z1: &SystemState,
    z2: &SystemState,
    weight: Option<&DMatrix<f64>>,
) -> QuotientDistance {
    quotient_distance_with_grid(z1, z2, weight, DEFAULT_THETA_GRID)
}

/// [`quotient_distance`] with an explicit θ grid size.
pub fn quotient_distance_with_grid(
    z1: &SystemState,
    z2: &SystemState,
    weight: Option<&DMatrix<f64>>,
    grid: usize,
) -> QuotientDistance {
    let grid = grid.max(3);
    let cost = |theta: f64| weighted_norm(&orbit_difference(z1, z2, theta), weight);
    let step = 2.0 * PI / grid as f64;
    let (mut best_theta, mut best) = (-PI, f64::INFINITY);
    for k in 0..grid {
        let theta = -PI + step * k as f64;
        let c = cost(theta);
        if c < best {
            best = c;
            best_theta = theta;
        }
    }
    let (theta, value) = golden_section(&cost, best_theta - step, best_theta + step, 1e-13);
    let (theta_star, distance) = if value < best {
        (theta, value)
    } else {
        (best_theta, best)
    };
    QuotientDistance {
        distance,
        theta_star: wrap_angle(theta_star),
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
