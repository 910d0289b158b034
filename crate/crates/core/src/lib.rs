//! Finite-volume simulation of a parabolic-elliptic chemotaxis system with
//! signal-dependent motility and logistic growth on a rectangle,
//!
//! ```text
//! u_t = div(gamma(v) grad u - u chi(v) grad v) + mu u (1 - u)
//!   0 = laplace v + u - v
//! ```
//!
//! with zero-flux boundaries, plus the diagnostics needed to check
//! convergence to the homogeneous state `(1, 1)` when `mu > K0/16`,
//! `K0 = sup chi^2 / gamma`.

// `!(x <= y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod io;
pub mod motility;
pub mod run;
pub mod stepper;
pub mod sweep;

pub use config::{parse_config, SimConfig};
pub use diagnostics::{DiagnosticsRecord, DiagnosticsSeries};
pub use error::{Error, Result};
pub use grid::{Field, Grid2D};
pub use motility::MotilitySpec;
pub use stepper::{SimState, StepControl};
