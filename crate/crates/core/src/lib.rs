//! Numerical laboratory for a predator-prey model with a modified Leslie-Gower
//! generalist predator: finite-time blow-up and prey quenching, delayed and
//! feedback-controlled variants, basin-of-attraction sweeps with boundary
//! fitting, and Hopf / fold-of-cycles / Bautin analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod basin;
pub mod bifurcate;
pub mod blowup;
pub mod claims;
pub mod config;
pub mod model;
pub mod solve;

pub use model::{Model, ModelError, ModelKind, ModelParams, ParamName, State};
pub use solve::{EventSpec, History, IntegratorConfig, SolveError, Trajectory};
