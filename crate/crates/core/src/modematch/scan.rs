use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::ModeMatcher;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Sheet};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransmissionRow {
    pub energy: f64,
    pub t: Complex64,
    pub t_abs2: f64,
    /// Solver failure for this row, if any.
    pub flag: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransmissionTable {
    pub geometry: Geometry,
    pub n_modes: usize,
    pub rows: Vec<TransmissionRow>,
}

impl TransmissionTable {
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flag.is_some()).count()
    }
}

/// |T|² and complex T on a real grid inside the single-channel window.
/// Rows where the solver fails are flagged rather than aborting the scan.
pub fn transmission_scan(matcher: &ModeMatcher, energies: &[f64]) -> Result<TransmissionTable> {
    let (lo, hi) = (PI * PI, 4.0 * PI * PI);
    if let Some(e) = energies.iter().find(|&&e| !(e > lo && e < hi)) {
        return Err(Error::param(format!(
            "energy {e} outside the single-channel window ({lo:.4}, {hi:.4})"
        )));
    }
    let mut rows: Vec<TransmissionRow> = energies
        .par_iter()
        .map(|&e| match matcher.transmission(Complex64::new(e, 0.0), Sheet::First) {
            Ok(t) => TransmissionRow {
                energy: e,
                t,
                t_abs2: t.norm_sqr(),
                flag: None,
            },
            Err(err) => TransmissionRow {
                energy: e,
                t: Complex64::new(f64::NAN, f64::NAN),
                t_abs2: f64::NAN,
                flag: Some(err.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(TransmissionTable {
        geometry: *matcher.geometry(),
        n_modes: matcher.options().n_modes,
        rows,
    })
}
