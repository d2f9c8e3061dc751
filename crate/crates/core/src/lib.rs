//! Spin-1/2 dynamics in a slowly varying magnetic field: exact integration,
//! the adiabatic expansion to second order, and the phases it predicts.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adiabatic;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod ode;
pub mod phases;
pub mod profile;
pub mod quad;
