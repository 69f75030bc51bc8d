//! Structure-preserving finite differences for the Poisson–Nernst–Planck
//! equations on periodic Cartesian grids.
//!
//! The Nernst–Planck part is discretized in Slotboom form
//! `∂_t c = ∇·(e^{-S} ∇(c e^{S}))`, `S = qψ`, with the face mobility
//! `e^{-S}` taken from one of four means ([`MeanKind`]). Time stepping is
//! semi-implicit: every species is advanced with the potential lagged from
//! the previous level, after which the zero-mean Poisson problem is solved
//! for the new potential.
//!
//! Module map:
//!
//! * [`grid`]: periodic staggered fields and the discrete operators.
//! * [`mobility`]: face mobilities.
//! * [`poisson`]: the zero-mean periodic Poisson solve.
//! * [`transport`]: the semi-implicit step.
//! * [`diagnostics`]: mass, free energy, dissipation rate, `τ*`, fluxes, error norms.
//! * [`mms`]: manufactured-solution accuracy harness.
//! * [`oracle`]: dense reference implementations for small grids.

pub mod diagnostics;
mod error;
pub mod grid;
pub mod linsolve;
pub mod mms;
pub mod mobility;
pub mod oracle;
pub mod poisson;
pub mod presets;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{CellField, FaceField, GridSpec, Norm};
pub use mobility::MeanKind;
pub use transport::{FixedCharge, SchemeConfig, Species, State};
