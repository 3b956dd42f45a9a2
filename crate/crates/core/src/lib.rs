//! Numerics for the additive random matrix model `M = R*XT + U*YV` with
//! Haar-distributed `R, T, U, V` and nonnegative diagonal `X, Y`.
//!
//! - [`measures`]: atomic and closed-form laws, Stieltjes and hat transforms.
//! - [`freeconv`]: subordination solver for the free additive convolution.
//! - [`ensembles`]: Haar sampling, model assembly, resolvents and overlaps.
//! - [`dynamics`]: the unitary matrix flow and the singular-value SDEs.
//! - [`analysis`]: limiting laws, KS statistics and the diagnostic reports.

pub mod analysis;
pub mod dynamics;
pub mod ensembles;
pub mod error;
pub mod families;
pub mod freeconv;
pub mod linalg;
pub mod measures;
pub mod montecarlo;
pub mod registry;

pub use error::{Error, Result};
pub use measures::C64;
