//! Networks of identical matching-controlled DC/AC converters: model,
//! synchronous equilibria, linearisation with a projected Lyapunov
//! certificate, and numerical integration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod equilibrium;
pub mod export;
pub mod linearization;
pub mod lyapunov;
pub mod model;
pub mod network;
pub mod simulation;
