//! Modulated breathers of the nonautonomous one-dimensional Gross-Pitaevskii
//! equation.
//!
//! The crate builds exact breather solutions by mapping the two-soliton
//! solution of the autonomous cubic equation through a time-dependent
//! similarity transform, integrates the same equation numerically with a
//! split-step Crank-Nicolson scheme, and measures breathing observables from
//! the resulting traces.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod field;
pub mod modulation;
pub mod observables;
pub mod propagator;
pub mod run;
pub mod scenarios;

pub use error::{Error, Result};
