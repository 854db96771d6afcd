//! Multilevel quasi Monte Carlo for elliptic PDEs with Matérn random field
//! coefficients, sampled through the SPDE approach with hybrid Haar-wavelet
//! white noise.

pub mod error;
pub mod fem;
pub mod lowdisc;
pub mod mesh;
pub mod mlqmc;
pub mod problem;
pub mod supermesh;
pub mod whitenoise;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
