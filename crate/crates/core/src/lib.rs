//! Fractional Allen–Cahn dynamics, fractional mean curvature flow, and the layer, corrector and
//! barrier constructions linking them.

pub mod allen_cahn;
pub mod barrier;
pub mod error;
pub mod field;
pub mod fmcf;
pub mod fracops;
pub mod geometry;
pub mod harness;
pub mod profile1d;
pub mod profiles;
pub mod quad;

pub use error::{Error, Result};
pub use field::ScalarField;
pub use fracops::{FracConstants, FracOrder, KernelWeights};
pub use profile1d::{Profile1D, Tail};
