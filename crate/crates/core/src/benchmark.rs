//! Two-converter benchmark: identical converters joined by one RL line.

use std::f64::consts::PI;

use crate::model::{assemble_model, ConverterParams, LineParams, Model, Topology};

/// Nominal frequency used by the shipped benchmark (60 Hz).
///
/// At 50 Hz the reactive power of the symmetric b = 1.08 equilibrium sits
/// about 2.8 % below the Condition-1 threshold; at 60 Hz it clears it.
pub const BENCHMARK_OMEGA_N: f64 = 120.0 * PI;

/// Reactive shunt susceptance added to satisfy the equilibrium condition.
pub const REACTIVE_LOAD: f64 = 1.08;

pub fn table1_converter(b_load: f64) -> ConverterParams {
    ConverterParams {
        eta: 0.0003142,
        c_dc: 1e-3,
        k_p: 0.099,
        mu: 0.33,
        r_filter: 0.2,
        l_filter: 5e-4,
        c_filter: 1e-5,
        g_load: 0.01,
        b_load,
        v_dc_star: 1000.0,
        i_dc_star: 37.23,
    }
}

pub fn table1_line() -> LineParams {
    LineParams {
        r_line: 0.2,
        l_line: 5e-5,
    }
}

/// The benchmark network with shunt susceptance `b_load`.
pub fn two_converter(b_load: f64) -> Model {
    assemble_model(
        table1_converter(b_load),
        table1_line(),
        Topology {
            n: 2,
            edges: vec![(0, 1)],
        },
        BENCHMARK_OMEGA_N,
    )
    .expect("benchmark parameters are valid")
}
