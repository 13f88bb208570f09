//! Linear-response Green's functions and polarizabilities of fermionic chains
//! from driven, measured qubit simulations.

pub mod circuit;
pub mod compare;
pub mod covariance;
pub mod engine;
pub mod error;
pub mod fermion;
pub mod field;
pub mod linalg;
pub mod noise;
pub mod oracle;
pub mod program;
pub mod signal;
pub mod ssh;
pub mod statevector;
pub mod tfxy;

pub use error::{Error, Result};

/// Version of this crate, echoed into run summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
