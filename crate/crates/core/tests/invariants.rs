use std::f64::consts::PI;

use convnet::benchmark::{table1_converter, table1_line, two_converter, REACTIVE_LOAD};
use convnet::linearization::jacobian;
use convnet::model::{
    apply_h, assemble_model, group_action, quotient_distance, vector_field, wrap_angle, Layout, Model, SystemState,
    Topology,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn ring() -> Model {
    assemble_model(
        table1_converter(REACTIVE_LOAD),
        table1_line(),
        Topology {
            n: 3,
            edges: vec![(0, 1), (1, 2), (2, 0)],
        },
        100.0 * PI,
    )
    .unwrap()
}

fn state(layout: Layout) -> impl Strategy<Value = SystemState> {
    let n = layout.n;
    (
        prop::collection::vec(-PI..PI, n),
        prop::collection::vec(-10.0..10.0, n),
        prop::collection::vec(-300.0..300.0, layout.dim() - 2 * n),
    )
        .prop_map(move |(g, v, x)| {
            let data: Vec<f64> = g.into_iter().chain(v).chain(x).collect();
            SystemState::from_slice(layout, &data).unwrap()
        })
}

fn h_matrix(layout: Layout, theta: f64) -> DMatrix<f64> {
    let dim = layout.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = DVector::zeros(dim);
        e[j] = 1.0;
        h.set_column(j, &apply_h(layout, &e, theta));
    }
    h
}

fn dc_input(model: &Model, dc: &[f64]) -> DVector<f64> {
    model.input_from_dc(dc).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vector_field_is_equivariant(z in state(ring().layout()), theta in -PI..PI, dc in prop::collection::vec(0.0..50.0, 3)) {
        let model = ring();
        let u = dc_input(&model, &dc);
        let f = vector_field(&model, &z, &u).unwrap();
        let lhs = vector_field(&model, &group_action(&z, theta), &u).unwrap();
        let rhs = apply_h(model.layout(), &f, theta);
        prop_assert!((lhs - rhs).amax() <= 1e-14 * f.amax().max(1.0));
    }

    #[test]
    fn jacobian_is_equivariant(z in state(ring().layout()), theta in -PI..PI) {
        let model = ring();
        let h = h_matrix(model.layout(), theta);
        let a = jacobian(&model, &z).a_matrix;
        let moved = jacobian(&model, &group_action(&z, theta)).a_matrix;
        let expected = &h * a * h.transpose();
        prop_assert!((&moved - &expected).amax() <= 1e-13 * expected.amax());
    }

    #[test]
    fn group_action_composes(z in state(ring().layout()), a in -PI..PI, b in -PI..PI) {
        let twice = group_action(&group_action(&z, a), b);
        let once = group_action(&z, a + b);
        prop_assert!(twice.circle_distance(&once) <= 1e-12 * z.as_vector().norm().max(1.0));
        let back = group_action(&group_action(&z, a), -a);
        prop_assert!(back.circle_distance(&z) <= 1e-12 * z.as_vector().norm().max(1.0));
    }

    #[test]
    fn vector_field_is_affine_in_the_input(
        z in state(ring().layout()),
        u1 in prop::collection::vec(-50.0..50.0, 3),
        u2 in prop::collection::vec(-50.0..50.0, 3),
        s in 0.0..1.0f64,
    ) {
        let model = ring();
        let mix: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| s * a + (1.0 - s) * b).collect();
        let f1 = vector_field(&model, &z, &dc_input(&model, &u1)).unwrap();
        let f2 = vector_field(&model, &z, &dc_input(&model, &u2)).unwrap();
        let fm = vector_field(&model, &z, &dc_input(&model, &mix)).unwrap();
        let expected = f1 * s + f2 * (1.0 - s);
        prop_assert!((fm - &expected).amax() <= 1e-12 * expected.amax().max(1.0));
    }

    #[test]
    fn only_the_dc_block_of_the_input_acts(z in state(ring().layout()), junk in prop::collection::vec(-1e3..1e3, 24)) {
        let model = ring();
        let mut u = DVector::from_vec(junk);
        let base = vector_field(&model, &z, &u).unwrap();
        for k in 0..model.dim() {
            if !(model.layout().v_dc()..model.layout().v_dc() + model.n()).contains(&k) {
                u[k] = 0.0;
            }
        }
        prop_assert_eq!(base, vector_field(&model, &z, &u).unwrap());
    }

    #[test]
    fn quotient_distance_is_an_orbit_pseudometric(
        z1 in state(Layout::new(2, 1)),
        z2 in state(Layout::new(2, 1)),
        z3 in state(Layout::new(2, 1)),
        theta in -PI..PI,
    ) {
        let d12 = quotient_distance(&z1, &z2, None).distance;
        let d21 = quotient_distance(&z2, &z1, None).distance;
        let scale = 1e-9 * (z1.as_vector().norm() + z2.as_vector().norm()).max(1.0);
        prop_assert!(d12 >= 0.0);
        prop_assert!((d12 - d21).abs() <= scale);
        prop_assert!(quotient_distance(&group_action(&z1, theta), &z1, None).distance <= scale);
        let moved = quotient_distance(&group_action(&z1, theta), &z2, None).distance;
        prop_assert!((moved - d12).abs() <= scale);
        let d13 = quotient_distance(&z1, &z3, None).distance;
        let d32 = quotient_distance(&z3, &z2, None).distance;
        prop_assert!(d12 <= d13 + d32 + scale);
    }

    #[test]
    fn wrapped_angles_stay_on_the_principal_branch(a in -1e4..1e4f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        let k = ((a - w) / (2.0 * PI)).round();
        prop_assert!((a - w - 2.0 * PI * k).abs() <= 1e-9);
    }
}

#[test]
fn quotient_minimiser_recovers_the_rotation() {
    let model = two_converter(REACTIVE_LOAD);
    let mut z = SystemState::zeros(model.layout());
    z.gamma_mut().copy_from_slice(&[0.1, -0.2]);
    for (k, x) in z.ac_mut().iter_mut().enumerate() {
        *x = 10.0 + k as f64;
    }
    for theta in [-3.0, -1.0, 0.0, 0.5, 2.9] {
        let q = quotient_distance(&group_action(&z, theta), &z, None);
        assert!(q.distance < 1e-9, "{theta}: {}", q.distance);
        assert!(wrap_angle(q.theta_star - theta).abs() < 1e-9, "{theta}: {}", q.theta_star);
    }
}
