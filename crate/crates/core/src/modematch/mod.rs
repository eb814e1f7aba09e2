//! Transverse-mode matching for the piecewise-rectangular channel.
//!
//! Each junction carries the field on its aperture in a small basis of
//! edge-weighted polynomials. Segment modes then follow by projection, and
//! the remaining unknowns come from derivative continuity tested against the
//! same basis. Only the even transverse sector (odd m) is kept. The even
//! lead mode and the even cavity modes live there, and the odd sector
//! decouples exactly for coaxial cavities.

mod basis;
mod field;
mod scan;
mod solver;

pub use basis::{junction_overlap, transverse_mode, width_basis, WidthBasis};
pub use field::{ModalField, ModeProfile, SegmentField};
pub use scan::{transmission_scan, TransmissionRow, TransmissionTable};
pub use solver::{
    solve_scattering, Incidence, LogDet, ModeBasis, ModeMatcher, ScatteringSolution, SegmentBasis, Side,
    SolverOptions,
};

pub(crate) use field::integrate_profile;

use crate::error::Result;

/// ψ(x, y) for unit incidence from the left.
pub fn wavefunction_field(solution: &ScatteringSolution, x: f64, y: f64) -> Result<num_complex::Complex64> {
    solution.left.value(x, y)
}
