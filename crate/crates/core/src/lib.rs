//! Parseval multichannel convolution operators and provably stable
//! plug-and-play image reconstruction.
//!
//! The crate is organized around a small convolution algebra on finite
//! periodic grids:
//!
//! - [`grid`] / [`signal`] — periodic index domains and N-channel signals;
//! - [`filter`] — matrix-valued impulse responses (apply, compose, adjoint);
//! - [`spectral`] — frequency responses, exact operator norms, Parseval tests;
//! - [`builders`] — parametric Parseval modules and their chaining;
//! - [`nn`] — 1-Lipschitz activations, spectral normalization, denoisers;
//! - [`inverse`] — forward models, the PnP-FBS solver, stability audits;
//! - [`phantom`] — synthetic piecewise-constant test images.

pub mod builders;
pub mod dft;
pub mod error;
pub mod filter;
pub mod grid;
pub mod inverse;
pub mod nn;
pub mod phantom;
pub mod signal;
pub mod spectral;
mod util;

pub use error::{Error, Result};
pub use filter::{ApplyMode, MultiFilter, Tap, TapSet};
pub use grid::Grid;
pub use signal::{MultiSignal, ShiftOffsets};
