//! Spectral geometry of finite spectral triples, centred on the deformed
//! fuzzy sphere.
//!
//! The crate builds Dirac operators on `V ⊗ M_n(C)`, computes their spectra
//! and heat-kernel observables, generates localized states, evaluates Connes
//! distances between them and embeds the resulting metric in `R^d`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod distance;
pub mod embed;
pub mod error;
pub mod linalg;
pub mod observables;
pub mod optim;
pub mod pipeline;
pub mod special;
pub mod spectrum;
pub mod states;
pub mod triple;

pub use error::{Error, Result};

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
