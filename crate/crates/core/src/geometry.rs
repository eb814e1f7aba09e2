//! Channel geometry and the lead/cavity dispersion relations.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Cavities are symmetric widenings centred on the channel axis.
    Coaxial,
}

/// Riemann sheet of the continued energy plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    First,
    Second,
}

/// Piecewise-rectangular channel. Lengths are in units of the lead width.
///
/// Cavity 1 is centred at x = 0 and cavity 2 (if any) at x = d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub lead_width: f64,
    pub cavity_width: f64,
    pub cavity_length: f64,
    /// Centre-to-centre distance; ignored unless `cavity_count == 2`.
    pub distance: f64,
    pub cavity_count: usize,
    pub alignment: Alignment,
}

/// One uniform piece of the channel. Semi-infinite leads have infinite length
/// and an infinite `x_start` or `x_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub width: f64,
    pub length: f64,
    pub x_start: f64,
    pub x_end: f64,
}

impl Segment {
    pub fn is_lead(&self) -> bool {
        self.length.is_infinite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_start && x <= self.x_end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Lead,
    Cavity,
}

/// Quantum numbers of a lead channel (j) or a closed-cavity mode (m, n).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeIndex {
    pub region: Region,
    pub transverse: u32,
    pub longitudinal: Option<u32>,
}

impl ModeIndex {
    pub fn lead(j: u32) -> Result<Self> {
        if j < 1 {
            return Err(Error::param("lead index must be >= 1"));
        }
        Ok(Self {
            region: Region::Lead,
            transverse: j,
            longitudinal: None,
        })
    }

    pub fn cavity(m: u32, n: u32) -> Result<Self> {
        if m < 1 || n < 1 {
            return Err(Error::param("cavity indices must be >= 1"));
        }
        Ok(Self {
            region: Region::Cavity,
            transverse: n,
            longitudinal: Some(m),
        })
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::double(2.0, 2.0, 5.6)
    }
}

impl Geometry {
    pub fn uniform() -> Self {
        Self {
            lead_width: 1.0,
            cavity_width: 1.0,
            cavity_length: 1.0,
            distance: 0.0,
            cavity_count: 0,
            alignment: Alignment::Coaxial,
        }
    }

    pub fn single(cavity_width: f64, cavity_length: f64) -> Self {
        Self {
            lead_width: 1.0,
            cavity_width,
            cavity_length,
            distance: 0.0,
            cavity_count: 1,
            alignment: Alignment::Coaxial,
        }
    }

    pub fn double(cavity_width: f64, cavity_length: f64, distance: f64) -> Self {
        Self {
            lead_width: 1.0,
            cavity_width,
            cavity_length,
            distance,
            cavity_count: 2,
            alignment: Alignment::Coaxial,
        }
    }

    pub fn with_distance(mut self, d: f64) -> Self {
        self.distance = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if (self.lead_width - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidGeometry(
                "lead width is the length unit and must be 1".into(),
            ));
        }
        if self.cavity_count > 2 {
            return Err(Error::InvalidGeometry(format!(
                "cavity_count must be 0, 1 or 2 (got {})",
                self.cavity_count
            )));
        }
        if self.cavity_count == 0 {
            return Ok(());
        }
        if !(self.cavity_width >= self.lead_width) || !self.cavity_width.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "cavity width {} must be finite and at least the lead width",
                self.cavity_width
            )));
        }
        if !(self.cavity_length > 0.0) || !self.cavity_length.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "cavity length {} must be positive",
                self.cavity_length
            )));
        }
        if self.cavity_count == 2 && !(self.distance > self.cavity_length) {
            return Err(Error::InvalidGeometry(format!(
                "cavities overlap: d = {} must exceed L_c = {}",
                self.distance, self.cavity_length
            )));
        }
        Ok(())
    }

    /// x coordinates of the cavity centres.
    pub fn cavity_centers(&self) -> Vec<f64> {
        match self.cavity_count {
            0 => vec![],
            1 => vec![0.0],
            _ => vec![0.0, self.distance],
        }
    }

    /// Canonical decomposition into uniform segments, left to right.
    ///
    /// A cavity as wide as the lead is not a discontinuity and is merged away.
    pub fn segments(&self) -> Result<Vec<Segment>> {
        self.validate()?;
        let lead = self.lead_width;
        let inf = f64::INFINITY;
        let centers = self.cavity_centers();
        if centers.is_empty() || (self.cavity_width - lead).abs() < 1e-12 {
            return Ok(vec![Segment {
                width: lead,
                length: inf,
                x_start: -inf,
                x_end: inf,
            }]);
        }
        let half = 0.5 * self.cavity_length;
        let mut out = Vec::with_capacity(2 * centers.len() + 1);
        let mut x = -inf;
        for (i, &c) in centers.iter().enumerate() {
            let (a, b) = (c - half, c + half);
            out.push(Segment {
                width: lead,
                length: if i == 0 { inf } else { a - x },
                x_start: x,
                x_end: a,
            });
            out.push(Segment {
                width: self.cavity_width,
                length: self.cavity_length,
                x_start: a,
                x_end: b,
            });
            x = b;
        }
        out.push(Segment {
            width: lead,
            length: inf,
            x_start: x,
            x_end: inf,
        });
        Ok(out)
    }
}

/// Lead energy k² + (jπ)² in internal units.
pub fn lead_dispersion(k: Complex64, j: u32) -> Result<Complex64> {
    if j < 1 {
        return Err(Error::param("lead index j must be >= 1"));
    }
    Ok(k * k + threshold(j))
}

/// Threshold (jπ)² of lead channel j.
pub fn threshold(j: u32) -> f64 {
    let a = j as f64 * PI;
    a * a
}

/// Closed-cavity energy (mπ/L_c)² + (nπ/W_c)².
pub fn cavity_energy(m: u32, n: u32, geometry: &Geometry) -> Result<f64> {
    if m < 1 || n < 1 {
        return Err(Error::param("cavity indices must be >= 1"));
    }
    let a = m as f64 * PI / geometry.cavity_length;
    let b = n as f64 * PI / geometry.cavity_width;
    Ok(a * a + b * b)
}

/// Branch of sqrt(w) with Im ≥ 0; on the cut (w real, positive) the positive
/// root is returned.
pub(crate) fn sqrt_upper(w: Complex64) -> Complex64 {
    let w = clean_zero(w);
    let s = w.sqrt();
    if s.im < 0.0 {
        -s
    } else {
        s
    }
}

/// Principal square root, with a negative-zero imaginary part treated as +0.
pub(crate) fn sqrt_principal(w: Complex64) -> Complex64 {
    clean_zero(w).sqrt()
}

fn clean_zero(w: Complex64) -> Complex64 {
    if w.im == 0.0 {
        Complex64::new(w.re, 0.0)
    } else {
        w
    }
}

/// Longitudinal wavenumber of lead channel j at complex energy z.
///
/// First sheet: Im k ≥ 0, with k > 0 on the cut z > (jπ)². There
/// k(conj z) = −conj(k(z)) for z off the cut.
///
/// Second sheet: the continuation of the first-sheet k across the cut
/// (jπ)² < Re z from above, i.e. the principal root. Below the real axis it
/// equals −k_first. It satisfies k(conj z) = conj(k(z)) away from its own cut,
/// which runs along z < (jπ)².
///
/// Exactly at threshold both sheets give 0.
pub fn longitudinal_k(z: Complex64, j: u32, sheet: Sheet) -> Complex64 {
    let w = z - threshold(j);
    if w == Complex64::new(0.0, 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    match sheet {
        Sheet::First => sqrt_upper(w),
        Sheet::Second => sqrt_principal(w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lead_dispersion_examples() {
        let pi2 = PI * PI;
        assert!((lead_dispersion(c(0.0, 0.0), 1).unwrap().re - pi2).abs() < 1e-14);
        assert!((lead_dispersion(c(0.0, 0.0), 2).unwrap().re / pi2 - 4.0).abs() < 1e-14);
        assert!((lead_dispersion(c(1.0, 0.0), 1).unwrap().re - (1.0 + pi2)).abs() < 1e-14);
        assert!(lead_dispersion(c(1.0, 0.0), 0).is_err());
    }

    #[test]
    fn lead_dispersion_is_even() {
        for &k in &[c(0.3, 0.0), c(1.2, -0.7), c(-2.0, 3.0)] {
            let a = lead_dispersion(k, 3).unwrap();
            let b = lead_dispersion(-k, 3).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn cavity_energy_examples() {
        let g = Geometry::single(2.0, 2.0);
        let e = cavity_energy(2, 3, &g).unwrap();
        assert!((e - 3.25 * PI * PI).abs() < 1e-12);
        let ev = crate::PhysicalParams::default().to_ev(e);
        assert!((ev - 0.2444).abs() < 1e-4);
        assert!((cavity_energy(1, 1, &g).unwrap() - 0.5 * PI * PI).abs() < 1e-12);
        assert!(e > threshold(1) && e < threshold(2));
        assert!(cavity_energy(0, 1, &g).is_err());
    }

    #[test]
    fn longitudinal_k_examples() {
        let pi2 = PI * PI;
        assert_eq!(longitudinal_k(c(pi2, 0.0), 1, Sheet::First), c(0.0, 0.0));
        let k = longitudinal_k(c(20.0, 0.0), 1, Sheet::First);
        assert!(k.re > 0.0 && k.im == 0.0);
        let k = longitudinal_k(c(30.0, 0.0), 2, Sheet::First);
        assert!(k.re.abs() < 1e-15 && k.im > 0.0);
    }

    #[test]
    fn branch_relations() {
        let pi2 = PI * PI;
        for &z in &[c(20.0, 0.5), c(20.0, -0.5), c(3.0, 1.0), c(50.0, -3.0)] {
            let k1 = longitudinal_k(z, 1, Sheet::First);
            assert!(k1.im >= 0.0);
            // Schwarz symmetry on the first sheet
            let kc = longitudinal_k(z.conj(), 1, Sheet::First);
            assert!((kc + k1.conj()).norm() < 1e-14);
            // dispersion round trip
            let back = lead_dispersion(k1, 1).unwrap();
            assert!((back - z).norm() < 1e-12 * z.norm());
            let k2 = longitudinal_k(z, 1, Sheet::Second);
            if z.im < 0.0 && z.re > pi2 {
                assert!((k2 + k1).norm() < 1e-14);
            }
            if z.im > 0.0 {
                assert!((k2 - k1).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn second_sheet_is_continuous_across_cut() {
        let e = 25.0;
        let above = longitudinal_k(c(e, 1e-9), 1, Sheet::First);
        let below = longitudinal_k(c(e, -1e-9), 1, Sheet::Second);
        assert!((above - below).norm() < 1e-9);
        let below1 = longitudinal_k(c(e, -1e-9), 1, Sheet::First);
        assert!((above - below1).norm() > 1.0);
    }

    #[test]
    fn segment_examples() {
        let s = Geometry::uniform().segments().unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].length.is_infinite() && s[0].width == 1.0);

        let s = Geometry::single(2.0, 2.0).segments().unwrap();
        let wl: Vec<_> = s.iter().map(|s| (s.width, s.length)).collect();
        assert_eq!(wl[1], (2.0, 2.0));
        assert!(wl[0].1.is_infinite() && wl[2].1.is_infinite());
        assert_eq!(s[1].x_start, -1.0);

        let s = Geometry::double(2.0, 2.0, 5.60).segments().unwrap();
        assert_eq!(s.len(), 5);
        assert!((s[2].length - 3.60).abs() < 1e-12);
        assert_eq!(s[2].width, 1.0);
        assert_eq!(s[3].width, 2.0);
        assert!((s[3].x_start - 4.6).abs() < 1e-12);
    }

    #[test]
    fn overlap_rejected() {
        assert!(Geometry::double(2.0, 2.0, 2.0).segments().is_err());
        assert!(Geometry::double(2.0, 2.0, 1.5).validate().is_err());
        assert!(Geometry::single(0.5, 2.0).validate().is_err());
    }
}
