//! Acceptance runner: evaluates each criterion on the two-converter
//! benchmark, prints one PASS/FAIL line per criterion and exits non-zero if
//! any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use convnet::benchmark::{two_converter, REACTIVE_LOAD};
use convnet::equilibrium::{
    check_condition1, condition1_threshold, feasible_input, solve_equilibrium, Dispatch, Equilibrium, NewtonOptions,
};
use convnet::linearization::{
    deviation_matrix, jacobian, lyapunov_certificate, lyapunov_value, zero_direction, CertificateOptions,
    LyapunovCertificate,
};
use convnet::model::{apply_h, group_action, orbit_difference, vector_field, Model, SystemState};
use convnet::simulation::region::{estimate_region, offset_state, tangent_proxy, RegionSweep};
use convnet::simulation::{integrate, integrate_variational, Sampling, SimulationOptions, StepOptions};
use convnet_validation::{fd_jacobian, max_relative_error, random_state, scaled_psd_rank, symmetric_spectrum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const I_DC_DISPATCH: f64 = 37.23;
const THRESHOLD_EXPECTED: f64 = 34031.25;
const EPSILON: f64 = 3.5;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn balanced() -> NewtonOptions {
    NewtonOptions {
        dispatch: Dispatch::Balanced,
        ..Default::default()
    }
}

fn equilibrium(model: &Model) -> Equilibrium {
    solve_equilibrium(model, &model.dispatch_input(), 0.0, None, &balanced()).expect("benchmark equilibrium solves")
}

fn certificate(model: &Model, eq: &Equilibrium) -> LyapunovCertificate {
    lyapunov_certificate(model, eq, &CertificateOptions::default()).expect("benchmark certificate exists")
}

fn rk4(t_end: f64, sampling: Sampling) -> SimulationOptions {
    SimulationOptions {
        t_end,
        method: "rk4".into(),
        step: StepOptions {
            dt: 1e-5,
            ..Default::default()
        },
        sampling,
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

fn symmetry_invariance() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let eq = equilibrium(&model);
    let unit = SystemState::zeros(model.layout());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut defect = |center: &SystemState, dc: f64, ac: f64| {
        let z = random_state(&mut rng, center, dc, ac);
        let theta = rng.random_range(-PI..PI);
        let inputs: Vec<f64> = (0..model.n()).map(|_| rng.random_range(0.0..50.0)).collect();
        let u = model.input_from_dc(&inputs).expect("input dimension");
        let f = vector_field(&model, &z, &u).expect("shapes");
        let lhs = vector_field(&model, &group_action(&z, theta), &u).expect("shapes");
        (inf_norm(&(lhs - apply_h(model.layout(), &f, theta))), inf_norm(&f))
    };
    let mut worst_unit = 0.0f64;
    for _ in 0..100 {
        worst_unit = worst_unit.max(defect(&unit, 1.0, 1.0).0);
    }
    let mut worst_relative = 0.0f64;
    for _ in 0..100 {
        let (d, f) = defect(&eq.z_star, 20.0, 100.0);
        worst_relative = worst_relative.max(d / f);
    }
    Outcome::new(
        worst_unit < 1e-9 && worst_relative < 1e-9,
        format!(
            "unit-scale states: max ‖f(gz,u) − H f(z,u)‖∞ = {worst_unit:.2e} (< 1e-9); operating-scale states: max defect / ‖f‖∞ = {worst_relative:.2e} (< 1e-9)"
        ),
    )
}

fn benchmark_equilibrium() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let exact = solve_equilibrium(&model, &model.dispatch_input(), 0.0, None, &NewtonOptions::default());
    let eq = equilibrium(&model);
    let v_dc = eq.z_star.v_dc_tilde().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let recovered = feasible_input(&model, &eq.z_star);
    let i_dc = model.dc_block(&recovered).to_vec();
    let deviation = i_dc
        .iter()
        .map(|i| (i - I_DC_DISPATCH).abs() / I_DC_DISPATCH)
        .fold(0.0, f64::max);
    let residual_ok = eq.residual_norm < 1e-10;
    let v_ok = v_dc < 1e-9;
    let dispatch_ok = deviation < 0.02;
    Outcome::new(
        residual_ok && v_ok && dispatch_ok,
        format!(
            "residual {:.2e} (< 1e-10) {}; max|ṽ_dc| {:.2e} {}; recovered i_dc {:?} vs {I_DC_DISPATCH}: {:.1}% off (< 2%) {}; solve with the dispatch as given: {}",
            eq.residual_norm,
            ok(residual_ok),
            v_dc,
            ok(v_ok),
            i_dc.iter().map(|i| format!("{i:.4}")).collect::<Vec<_>>(),
            100.0 * deviation,
            ok(dispatch_ok),
            match exact {
                Ok(e) => format!("converged, residual {:.2e}", e.residual_norm),
                Err(e) => format!("no equilibrium ({e})"),
            }
        ),
    )
}

fn ok(flag: bool) -> &'static str {
    if flag {
        "ok"
    } else {
        "VIOLATED"
    }
}

fn condition_outcome() -> Outcome {
    let loaded = two_converter(REACTIVE_LOAD);
    let unloaded = two_converter(0.0);
    let threshold = condition1_threshold(&loaded);
    let oracle = 0.33 * 0.33 * 1000.0 * 1000.0 / (16.0 * 0.2);
    let threshold_ok = (threshold - THRESHOLD_EXPECTED).abs() <= 1e-9 * THRESHOLD_EXPECTED
        && (oracle - THRESHOLD_EXPECTED).abs() <= 1e-9 * THRESHOLD_EXPECTED;
    let at_loaded = check_condition1(&loaded, &equilibrium(&loaded), 0.0);
    let at_unloaded = check_condition1(&unloaded, &equilibrium(&unloaded), 0.0);
    let loaded_ok = at_loaded.iter().all(|c| c.pass);
    let unloaded_ok = at_unloaded.iter().all(|c| !c.pass);
    let q = |recs: &[convnet::equilibrium::Condition1Record]| {
        recs.iter().map(|c| format!("{:.2}", c.q_sw)).collect::<Vec<_>>().join(", ")
    };
    Outcome::new(
        threshold_ok && loaded_ok && unloaded_ok,
        format!(
            "threshold {threshold} (expected {THRESHOLD_EXPECTED}) {}; b = 0 Q_sw [{}] fails at every converter {}; b = 1.08 Q_sw [{}] passes at every converter {}",
            ok(threshold_ok),
            q(&at_unloaded),
            ok(unloaded_ok),
            q(&at_loaded),
            ok(loaded_ok)
        ),
    )
}

fn jacobian_correctness() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let eq = equilibrium(&model);
    let z_star = &eq.z_star;
    let a_star = jacobian(&model, z_star).a_matrix;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut fd_err, mut cross_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let z = random_state(&mut rng, z_star, 20.0, 50.0);
        let exact = jacobian(&model, &z).a_matrix;
        let fd = fd_jacobian(&model, &z, &eq.u_star, 1e-6);
        fd_err = fd_err.max((&fd - &exact).norm() / exact.norm());
        let split = &a_star + deviation_matrix(&model, &z, z_star);
        cross_err = cross_err.max((&split - &exact).norm() / exact.norm());
    }
    let v = zero_direction(&model, z_star);
    let null_err = (&a_star * &v).norm() / (a_star.norm() * v.norm());
    let pass = fd_err < 1e-6 && null_err < 1e-8 && cross_err < 1e-9;
    Outcome::new(
        pass,
        format!(
            "finite-difference rel. Frobenius error {fd_err:.2e} (< 1e-6); ‖A v‖/(‖A‖‖v‖) {null_err:.2e} (< 1e-8); ‖A(z) − A(z*) − G(z)‖/‖A(z)‖ {cross_err:.2e} (< 1e-9)"
        ),
    )
}

fn spectral_surrogate() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let eq = equilibrium(&model);
    let a = jacobian(&model, &eq.z_star).a_matrix;
    let a_norm = a.norm();
    let spectrum = a.clone().complex_eigenvalues();
    let zeros = spectrum.iter().filter(|e| e.norm() < 1e-8 * a_norm).count();
    let rest: Vec<_> = spectrum.iter().filter(|e| e.norm() >= 1e-8 * a_norm).collect();
    let stable = rest.iter().all(|e| e.re < 0.0);
    let slowest = rest.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        zeros == 1 && rest.len() == model.dim() - 1 && stable,
        format!(
            "{zeros} eigenvalue(s) with |λ| < 1e-8‖A‖; {} remaining, all Re λ < 0: {stable} (slowest Re λ = {slowest:.4})",
            rest.len()
        ),
    )
}

fn certificate_validity() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let eq = equilibrium(&model);
    let cert = certificate(&model, &eq);
    let (pi, p, a, v) = (&cert.pi_matrix, &cert.p_matrix, &cert.a_matrix, &cert.v_star);
    let spectrum = symmetric_spectrum(pi);
    let pi_norm = spectrum.last().copied().unwrap_or(0.0);
    let min_eig = spectrum[0];
    let psd = min_eig >= -1e-12 * pi_norm;
    let rank = scaled_psd_rank(pi, 1e-13);
    let p_definite = p.clone().cholesky().is_some();
    let pi_v = (pi * v).norm() / (pi_norm * v.norm());
    let form = pi * a + a.transpose() * pi;
    let pv = p * v;
    let vpv = v.dot(&pv);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let w = DVector::from_fn(v.len(), |_, _| rng.random_range(-1.0..1.0));
        let dz = &w - v * (pv.dot(&w) / vpv);
        worst = worst.max(dz.dot(&(&form * &dz)) / dz.norm_squared());
    }
    let n = model.dim();
    let pass = psd && rank == n - 1 && p_definite && pi_v < 1e-12 && worst < 0.0;
    Outcome::new(
        pass,
        format!(
            "λ_min(Π) = {min_eig:.2e} vs ‖Π‖ = {pi_norm:.3e} {}; rank {rank} (N − 1 = {}), P ≻ 0: {p_definite}; ‖Πv‖/(‖Π‖‖v‖) = {pi_v:.2e} (< 1e-12); max δzᵀ(ΠA + AᵀΠ)δz/‖δz‖² over 1000 samples = {worst:.3e} (< 0)",
            ok(psd),
            n - 1
        ),
    )
}

fn variational_consistency() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let eq = equilibrium(&model);
    let cert = certificate(&model, &eq);
    let z_star = &eq.z_star;
    let u = &eq.u_star;

    let z0 = offset_state(z_star, [0, 1], [0.2, -0.1]);
    let (dz0, _) = tangent_proxy(&z0, z_star);
    let opts = rk4(0.1, Sampling::Interval(1e-3));
    let var = integrate_variational(&model, &z0, &dz0, u, &opts, None).expect("variational run");
    let h = 1e-6 / dz0.norm();
    let shifted = |sign: f64| {
        let z = SystemState::from_vector(model.layout(), z0.as_vector() + &dz0 * (sign * h)).expect("layout");
        integrate(&model, &z, u, &opts).expect("trajectory")
    };
    let (plus, minus) = (shifted(1.0), shifted(-1.0));
    let fd: Vec<DVector<f64>> = plus
        .states
        .iter()
        .zip(&minus.states)
        .map(|(a, b)| (a.as_vector() - b.as_vector()) / (2.0 * h))
        .collect();
    let tangents = var.variational.expect("tangents recorded");
    let fd_err = max_relative_error(&tangents, &fd);

    let mut local = Vec::new();
    for d in [[0.003, 0.0], [0.0, -0.003], [0.002, -0.001], [0.001, 0.0005]] {
        let z0 = offset_state(z_star, [0, 1], d);
        local.push((z0.clone(), tangent_proxy(&z0, z_star).0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..8 {
        let w = DVector::from_fn(model.dim(), |_, _| rng.random_range(-1.0..1.0));
        let scale = (EPSILON / lyapunov_value(&cert, &w)).sqrt();
        local.push((z_star.clone(), w * scale));
    }
    let sweep = RegionSweep::default();
    let offsets = sweep.offsets();
    let grid: Vec<_> = offsets
        .iter()
        .flat_map(|&a| offsets.iter().map(move |&b| [a, b]))
        .map(|d| {
            let z0 = offset_state(z_star, sweep.nodes, d);
            let dz0 = tangent_proxy(&z0, z_star).0;
            (z0, dz0)
        })
        .filter(|(_, dz0)| lyapunov_value(&cert, dz0) <= EPSILON)
        .collect();
    let worst_rise = |family: &[(SystemState, DVector<f64>)]| {
        family
            .iter()
            .map(|(z0, dz0)| {
                let v0 = lyapunov_value(&cert, dz0);
                let run = integrate_variational(&model, z0, dz0, u, &rk4(0.1, Sampling::EveryStep), Some(&cert))
                    .expect("variational run");
                let values = run.lyapunov.expect("V recorded");
                let rise = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
                if v0 > 0.0 {
                    rise / v0
                } else {
                    rise
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let local_rise = worst_rise(&local);
    let grid_rise = worst_rise(&grid);
    let pass = fd_err < 1e-4 && local_rise <= 1e-9 && grid_rise <= 1e-9;
    Outcome::new(
        pass,
        format!(
            "max rel. error vs two-trajectory differences {fd_err:.2e} (< 1e-4); largest per-step rise of V/V(0) (≤ 1e-9): {} near-equilibrium initial conditions {local_rise:.2e} {}, {} grid initial conditions with V ≤ {EPSILON} {grid_rise:.2e} {}",
            local.len(),
            ok(local_rise <= 1e-9),
            grid.len(),
            ok(grid_rise <= 1e-9)
        ),
    )
}

fn region_reproduction() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let eq = equilibrium(&model);
    let cert = certificate(&model, &eq);
    let sweep = RegionSweep::default();
    let est = estimate_region(&model, &eq, &cert, &sweep).expect("sweep runs");
    let inside: Vec<_> = est.samples.iter().filter(|s| s.v0 <= EPSILON).collect();
    let contained = !inside.is_empty() && inside.iter().all(|s| s.converged);
    let terminal_ok = inside.iter().all(|s| {
        s.terminal.as_ref().is_some_and(|t| {
            t.angle_difference_error < 1e-6 && t.max_abs_v_dc_tilde < 1e-6 && t.ac_relative_error < 0.01
        })
    });
    let g = sweep.grid;
    let c = g / 2;
    let neighbourhood = (c - 1..=c + 1)
        .flat_map(|i| (c - 1..=c + 1).map(move |j| i * g + j))
        .all(|k| est.samples[k].converged);
    let pass = contained && terminal_ok && neighbourhood;
    Outcome::new(
        pass,
        format!(
            "{}×{} grid: {} converged, {} failed to integrate; {} samples with V ≤ {EPSILON}, all converged {}; angles, DC voltages and AC signals settled at those samples {}; origin neighbourhood converged {}; ε* = {:.4e}",
            g,
            g,
            est.converged,
            est.diverged,
            inside.len(),
            ok(contained),
            ok(terminal_ok),
            ok(neighbourhood),
            est.epsilon_star
        ),
    )
}

fn quotient_property() -> Outcome {
    let model = two_converter(REACTIVE_LOAD);
    let eq = equilibrium(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut z0 = offset_state(&eq.z_star, [0, 1], [0.4, -0.3]);
    for x in z0.ac_mut() {
        *x += rng.random_range(-5.0..5.0);
    }
    let opts = rk4(0.5, Sampling::Interval(1e-2));
    let base = integrate(&model, &z0, &eq.u_star, &opts).expect("trajectory");
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let theta = rng.random_range(-PI..PI);
        let moved = integrate(&model, &group_action(&z0, theta), &eq.u_star, &opts).expect("trajectory");
        for (a, b) in moved.states.iter().zip(&base.states) {
            worst = worst.max(inf_norm(&orbit_difference(a, b, theta)));
        }
    }
    Outcome::new(worst < 1e-7, format!("max ‖φ(t, g z0) − g φ(t, z0)‖∞ over 0.5 s and 10 angles = {worst:.2e} (< 1e-7)"))
}

type Criterion = (&'static str, Option<f64>, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("symmetry invariance", Some(1.0), symmetry_invariance),
        ("benchmark equilibrium", Some(1.0), benchmark_equilibrium),
        ("decentralised condition", Some(1.0), condition_outcome),
        ("jacobian correctness", Some(5.0), jacobian_correctness),
        ("spectral stability", Some(1.0), spectral_surrogate),
        ("certificate validity", Some(5.0), certificate_validity),
        ("variational consistency", Some(30.0), variational_consistency),
        ("contraction region", None, region_reproduction),
        ("quotient property", Some(30.0), quotient_property),
    ];
    let mut failures = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed().as_secs_f64();
        let in_budget = budget.is_none_or(|b| elapsed < b);
        let pass = outcome.pass && in_budget;
        if !pass {
            failures += 1;
        }
        let budget_note = match budget {
            Some(b) => format!("{elapsed:.2} s (budget {b} s)"),
            None => format!("{elapsed:.1} s"),
        };
        println!(
            "criterion {} {name}: {} | {} | {budget_note}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
