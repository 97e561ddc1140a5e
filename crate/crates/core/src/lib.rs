//! Regression Monte Carlo solver for extended type-I BSVIEs and the coupled
//! BSDE families they reduce to, with a well-posedness certifier and flow
//! diagnostics.

// Negated comparisons also reject NaN, which is what the range checks want.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod bsvie;
pub mod certify;
pub mod error;
pub mod family;
pub mod field;
pub mod lemmas;
pub mod norms;
pub mod oracle;
pub mod paths;
pub mod presets;
pub mod regression;
pub mod system;

pub use bsde::{backward_sweep, BsdeSlice, Driver, Scheme};
pub use certify::{certify, certify_system, CertInput, CertReport, CertSettings, GrowthConstants, Mode, RadiusPolicy};
pub use error::{Error, Result};
pub use family::{FamilyDriver, FamilyField, FamilyGenerator};
pub use field::ProcessField;
pub use paths::{build_grid, simulate_forward, ConstantVolatility, PathEnsemble, PathRef, Point, TimeGrid, Volatility};
pub use regression::{condexp, BasisKind, BasisSpec, Regressor};
pub use system::{apply_t, picard_solve, residual_check, Iterate, PicardOptions, SystemCoefficients, SystemSolution};
