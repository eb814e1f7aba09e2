//! Scattering, resonance and decay calculations for a hard-wall electron
//! waveguide with one or two rectangular cavities.
//!
//! Energies are in internal units where ħ²/(2m*) = 1 and the lead width is 1.
//! [`PhysicalParams`] converts to eV.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod effective;
pub mod error;
pub mod geometry;
pub mod io;
pub mod modematch;
pub mod poles;
pub mod quadrature;
pub mod special;
pub mod units;

pub use error::{Error, Result};
pub use geometry::{cavity_energy, lead_dispersion, longitudinal_k, Alignment, Geometry, ModeIndex, Region, Segment, Sheet};
pub use units::PhysicalParams;

pub type C64 = num_complex::Complex64;
