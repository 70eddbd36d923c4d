use std::path::PathBuf;

use convnet::benchmark::{two_converter, REACTIVE_LOAD};
use convnet::equilibrium::{
    check_condition1, solve_equilibrium, sweep_equilibria, synchronization_report, Dispatch, Equilibrium,
    EquilibriumError, NewtonOptions,
};
use convnet::linearization::{
    lyapunov_certificate, sample_decrease, CertificateError, CertificateOptions, LyapunovCertificate, QMode,
};
use convnet::model::{quotient_distance, Model};
use convnet::network::NetworkSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn balanced() -> NewtonOptions {
    NewtonOptions {
        dispatch: Dispatch::Balanced,
        ..Default::default()
    }
}

fn solve(model: &Model, gauge: f64) -> Equilibrium {
    solve_equilibrium(model, &model.dispatch_input(), gauge, None, &balanced()).unwrap()
}

fn certify(model: &Model, eq: &Equilibrium, q_mode: QMode) -> Result<LyapunovCertificate, CertificateError> {
    lyapunov_certificate(
        model,
        eq,
        &CertificateOptions {
            q_mode,
            ..Default::default()
        },
    )
}

fn benchmark_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(name)
}

#[test]
fn shipped_network_files_match_the_builtin_benchmark() {
    let loaded = NetworkSpec::from_file(benchmark_file("two_converter.json")).unwrap().to_model(None).unwrap();
    let builtin = two_converter(REACTIVE_LOAD);
    assert_eq!(loaded.conv, builtin.conv);
    assert_eq!(loaded.line, builtin.line);
    assert!((loaded.omega_n - builtin.omega_n).abs() < 1e-12);
    let unloaded = NetworkSpec::from_file(benchmark_file("two_converter_b0.json")).unwrap().to_model(None).unwrap();
    assert_eq!(unloaded.conv.b_load, 0.0);
    let overridden = NetworkSpec::from_file(benchmark_file("two_converter.json")).unwrap().to_model(Some(0.0)).unwrap();
    assert_eq!(overridden.conv, unloaded.conv);
}

#[test]
fn gauge_choice_selects_a_point_on_one_orbit() {
    let model = two_converter(REACTIVE_LOAD);
    let base = solve(&model, 0.0);
    for gauge in [-2.0, 0.7, 3.0] {
        let eq = solve(&model, gauge);
        assert!((eq.z_star.gamma()[0] - gauge).abs() < 1e-12);
        assert!(quotient_distance(&eq.z_star, &base.z_star, None).distance < 1e-8);
        assert!((eq.dispatch_offset - base.dispatch_offset).abs() < 1e-8);
    }
}

#[test]
fn benchmark_equilibrium_is_synchronous() {
    let model = two_converter(REACTIVE_LOAD);
    let eq = solve(&model, 0.0);
    let sync = synchronization_report(&model, &eq.z_star);
    for (w, v) in sync.omega.iter().zip(&sync.v_dc) {
        assert!(w.abs() < 1e-10);
        assert!((v - model.conv.v_dc_star).abs() < 1e-8);
    }
    assert!(eq.condition1.iter().all(|c| c.pass));
}

#[test]
fn inconsistent_dispatch_has_no_equilibrium() {
    let model = two_converter(REACTIVE_LOAD);
    let err = solve_equilibrium(&model, &model.dispatch_input(), 0.0, None, &NewtonOptions::default()).unwrap_err();
    assert!(matches!(err, EquilibriumError::NoConvergence { .. }), "{err}");
}

#[test]
fn balanced_input_is_a_fixed_point_of_exact_dispatch() {
    let model = two_converter(REACTIVE_LOAD);
    let eq = solve(&model, 0.0);
    let again = solve_equilibrium(&model, &eq.u_star, 0.0, Some(&eq.z_star), &NewtonOptions::default()).unwrap();
    assert!(again.residual_norm < 1e-10);
    assert!(again.z_star.circle_distance(&eq.z_star) < 1e-8);
}

#[test]
fn equilibrium_sweep_deduplicates_orbits() {
    let model = two_converter(REACTIVE_LOAD);
    let found = sweep_equilibria(&model, &model.dispatch_input(), 0.0, &[0.0, 0.01, -0.01, 0.02], &balanced());
    assert!(!found.is_empty());
    for (i, a) in found.iter().enumerate() {
        for b in &found[i + 1..] {
            assert!(quotient_distance(&a.z_star, &b.z_star, None).distance > 1e-4);
        }
    }
}

#[test]
fn unloaded_network_is_refused_a_certificate() {
    let model = two_converter(0.0);
    let eq = solve(&model, 0.0);
    assert!(check_condition1(&model, &eq, 0.0).iter().all(|c| !c.pass));
    match certify(&model, &eq, QMode::default()) {
        Err(CertificateError::Refused { failing }) => assert_eq!(failing, vec![0, 1]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn nonpositive_weights_are_rejected() {
    let model = two_converter(REACTIVE_LOAD);
    let eq = solve(&model, 0.0);
    let opts = CertificateOptions {
        q1: 0.0,
        ..Default::default()
    };
    assert!(matches!(lyapunov_certificate(&model, &eq, &opts), Err(CertificateError::Weight(_))));
}

#[test]
fn certificate_is_independent_of_the_gauge_up_to_rotation() {
    let model = two_converter(REACTIVE_LOAD);
    let a = certify(&model, &solve(&model, 0.0), QMode::default()).unwrap();
    let b = certify(&model, &solve(&model, 1.0), QMode::default()).unwrap();
    let rel = |x: &[f64], y: &[f64]| {
        x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    assert!(rel(&a.pi_spectrum, &b.pi_spectrum) < 1e-6);
    let noise = 1e-14 * a.pi_matrix.norm() * a.a_matrix.norm();
    for (x, y) in a.decrease_spectrum.iter().zip(&b.decrease_spectrum) {
        assert!((x - y).abs() <= noise, "{x} vs {y}");
    }
}

#[test]
fn rank_one_weight_leaves_directions_unseen() {
    let model = two_converter(REACTIVE_LOAD);
    let eq = solve(&model, 0.0);
    let cert = certify(&model, &eq, QMode::RankOne).unwrap();
    assert_eq!(cert.sigma(), 0.0);
    assert_eq!(cert.rank_one_q_kernel_dim(), model.dim() - 2 * model.n() - 1);
    let pi_norm = cert.pi_spectrum.last().copied().unwrap();
    assert!(cert.pi_spectrum[0] >= -1e-14 * pi_norm);
    assert!((&cert.pi_matrix * &cert.v_star).norm() <= 1e-12 * pi_norm * cert.v_star.norm());
    let sample = sample_decrease(&cert, 500, &mut ChaCha8Rng::seed_from_u64(2));
    assert!(sample.max_normalized <= 1e-14 * pi_norm * cert.a_matrix.norm());
}

#[test]
fn certificate_summary_is_stable_across_runs() {
    let model = two_converter(REACTIVE_LOAD);
    let eq = solve(&model, 0.0);
    let a = certify(&model, &eq, QMode::default()).unwrap();
    let b = certify(&model, &eq, QMode::default()).unwrap();
    assert_eq!(a.pi_matrix, b.pi_matrix);
    assert_eq!(a.decrease_spectrum, b.decrease_spectrum);
}
