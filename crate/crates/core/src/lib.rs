//! Exact filtering, smoothing and prediction for hidden Markov models
//! driven by Fleming-Viot and Dawson-Watanabe measure-valued diffusions.
//!
//! Posterior laws are finite mixtures of Dirichlet (Fleming-Viot) or gamma
//! (Dawson-Watanabe) random measures indexed by multiplicity vectors over
//! the observed types. Propagation in time goes through the dual death
//! processes in [`dual`].

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod dw;
pub mod error;
pub mod fv;
pub mod io;
pub mod mc;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod special;
pub mod urn;

pub use error::{Error, Result};
