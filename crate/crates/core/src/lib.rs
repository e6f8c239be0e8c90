//! Wave-packet/detector simulation with competing state-reduction timing
//! rules.
//!
//! The evolving state is split into a no-capture component (the surviving
//! wavefunction, weight P₀) and a capture component (norm absorbed by the
//! detector, weight P₁ = 1 − P₀). The capture current J = dP₁/dt is the
//! absorption rate. Reduction rules decide when the superposition is
//! resolved, and the analysis compares their timing with J.

pub mod analysis;
pub mod config;
pub mod error;
pub mod io;
pub mod plot;
pub mod experiment;
pub mod propagator;
pub mod reduction;
pub mod scenario;
pub mod state;

pub use error::{Error, FieldError, Result};
