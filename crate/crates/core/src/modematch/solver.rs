use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::basis::{explicit_count, width_basis, WidthBasis};
use super::field::{ModalField, ModeProfile, SegmentField};
use crate::error::{Error, Result};
use crate::geometry::{sqrt_principal, sqrt_upper, Geometry, Segment, Sheet};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Transverse modes per unit width kept with exact energy dependence.
    /// Half as many edge-weighted aperture functions represent the field on
    /// each junction.
    pub n_modes: usize,
    /// Finite-segment modes with cutoff below this energy get explicit
    /// amplitudes instead of a Dirichlet-to-Neumann reduction.
    pub explicit_energy: f64,
    /// Lead channels whose wavenumber is continued to the unphysical side
    /// on `Sheet::Second`, counted from the lowest. n gives the sheet that
    /// borders the real axis between the n-th and (n+1)-th even thresholds.
    #[serde(default = "one")]
    pub second_sheet_channels: usize,
}

fn one() -> usize {
    1
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_modes: 30,
            explicit_energy: 9.0 * PI * PI,
            second_sheet_channels: 1,
        }
    }
}

impl SolverOptions {
    pub fn with_modes(n_modes: usize) -> Self {
        Self {
            n_modes,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Unit-amplitude wave arriving from one lead in local channel `channel`
/// (0 is the lowest even mode, j = 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub side: Side,
    pub channel: usize,
}

/// Per-segment mode set used by the solver.
#[derive(Clone, Debug)]
pub struct SegmentBasis {
    pub segment: Segment,
    pub basis: Arc<WidthBasis>,
    /// Local indices of explicitly represented modes (finite segments only).
    pub explicit: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ModeBasis {
    pub segments: Vec<SegmentBasis>,
    pub second_sheet_channels: usize,
}

impl ModeBasis {
    /// Longitudinal wavenumbers of every kept mode of every segment.
    pub fn wavenumbers(&self, z: Complex64, sheet: Sheet) -> Vec<Vec<Complex64>> {
        let flipped = if sheet == Sheet::Second { self.second_sheet_channels } else { 0 };
        let last = self.segments.len() - 1;
        self.segments
            .iter()
            .enumerate()
            .map(|(s, sb)| {
                let lead = s == 0 || s == last;
                (0..sb.basis.count())
                    .map(|i| mode_k(z, sb.basis.threshold(i), lead && i < flipped))
                    .collect()
            })
            .collect()
    }
}

fn mode_k(z: Complex64, threshold: f64, second: bool) -> Complex64 {
    let w = z - threshold;
    if second {
        sqrt_principal(w)
    } else {
        sqrt_upper(w)
    }
}

/// cos(kL/2) and sin(kL/2)/k, both entire in k².
fn standing_factors(k: Complex64, length: f64) -> (Complex64, Complex64) {
    let x = 0.5 * length * k;
    let c = x.cos();
    let s = if x.norm() < 1e-4 {
        let x2 = x * x;
        (ONE - x2 / 6.0 + x2 * x2 / 120.0) * (0.5 * length)
    } else {
        x.sin() / k
    };
    (c, s)
}

/// Mode-matching session for one geometry. Immutable once built and cheap
/// to share between threads.
#[derive(Clone, Debug)]
pub struct ModeMatcher {
    geometry: Geometry,
    options: SolverOptions,
    basis: ModeBasis,
    p: usize,
    offsets: Vec<usize>,
    size: usize,
}

/// Factored matching system at one energy.
pub(crate) struct System {
    pub z: Complex64,
    pub matrix: DMatrix<Complex64>,
    pub k: Vec<Vec<Complex64>>,
}

impl ModeMatcher {
    pub fn new(geometry: &Geometry, options: SolverOptions) -> Result<Self> {
        geometry.validate()?;
        if options.n_modes < 4 {
            return Err(Error::param("n_modes must be at least 4"));
        }
        if !(options.explicit_energy > 0.0) {
            return Err(Error::param("explicit_energy must be positive"));
        }
        let segs = geometry.segments()?;
        let p = options.n_modes / 2;
        let aperture = geometry.lead_width;
        let last = segs.len() - 1;
        let mut segments = Vec::with_capacity(segs.len());
        for (s, seg) in segs.iter().enumerate() {
            let basis = width_basis(seg.width, aperture, p, explicit_count(options.n_modes, seg.width));
            let explicit = if s == 0 || s == last {
                vec![]
            } else {
                (0..basis.count())
                    .filter(|&i| basis.threshold(i) < options.explicit_energy)
                    .collect()
            };
            segments.push(SegmentBasis {
                segment: *seg,
                basis,
                explicit,
            });
        }
        let nj = segs.len() - 1;
        let mut offsets = Vec::with_capacity(segments.len());
        let mut size = nj * p;
        for sb in &segments {
            offsets.push(size);
            size += 2 * sb.explicit.len();
        }
        Ok(Self {
            geometry: *geometry,
            options,
            basis: ModeBasis {
                segments,
                second_sheet_channels: options.second_sheet_channels,
            },
            p,
            offsets,
            size,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn mode_basis(&self) -> &ModeBasis {
        &self.basis
    }

    /// Number of unknowns of the matching system.
    pub fn system_size(&self) -> usize {
        self.size
    }

    pub fn junction_count(&self) -> usize {
        self.basis.segments.len() - 1
    }

    /// Lead channels (local indices) open at real energy e.
    pub fn open_channels(&self, e: f64) -> usize {
        let b = &self.basis.segments[0].basis;
        (0..b.count()).take_while(|&i| b.threshold(i) < e).count()
    }

    pub(crate) fn assemble(&self, z: Complex64, sheet: Sheet) -> System {
        let p = self.p;
        let segs = &self.basis.segments;
        let last = segs.len() - 1;
        let nj = last;
        let k = self.basis.wavenumbers(z, sheet);
        let mut d = DMatrix::<Complex64>::zeros(self.size, self.size);
        let tail = |b: &WidthBasis, sigma: f64| -> DMatrix<Complex64> {
            let t = &b.tails;
            DMatrix::from_fn(p, p, |r, c| {
                (t[0][(r, c)] - z * 0.5 * t[1][(r, c)] - z * z * 0.125 * t[2][(r, c)]) * sigma
            })
        };
        // Gᵀ diag(v) G restricted to mode indices `idx`.
        let sandwich = |b: &WidthBasis, idx: &mut dyn Iterator<Item = (usize, Complex64)>| {
            let mut y = DMatrix::<Complex64>::zeros(p, p);
            for (i, v) in idx {
                for r in 0..p {
                    let gr = b.proj[(i, r)] * v;
                    for c in 0..p {
                        y[(r, c)] += gr * b.proj[(i, c)];
                    }
                }
            }
            y
        };

        for jn in 0..nj {
            let row0 = jn * p;
            for (side, s) in [(1.0, jn), (-1.0, jn + 1)] {
                let sb = &segs[s];
                let b = &*sb.basis;
                let ks = &k[s];
                if s == 0 || s == last {
                    let sign = if s == 0 { -1.0 } else { 1.0 };
                    let mut it = ks.iter().enumerate().map(|(i, &kk)| (i, I * kk * sign));
                    let y = sandwich(b, &mut it) + tail(b, -sign);
                    add_block(&mut d, row0, jn * p, &y, side);
                    continue;
                }
                let len = sb.segment.length;
                let mut is_explicit = vec![false; b.count()];
                sb.explicit.iter().for_each(|&i| is_explicit[i] = true);
                let (sig, other) = if side > 0.0 { (1.0, jn - 1) } else { (-1.0, jn + 1) };
                let mut selfv = Vec::with_capacity(b.count());
                let mut otherv = Vec::with_capacity(b.count());
                for (i, &kk) in ks.iter().enumerate() {
                    if is_explicit[i] {
                        continue;
                    }
                    let q = (I * kk * (2.0 * len)).exp();
                    let e = (I * kk * len).exp();
                    let kc = -I * kk * (ONE + q) / (ONE - q);
                    let kcsc = -I * kk * e * 2.0 / (ONE - q);
                    selfv.push((i, kc * sig));
                    otherv.push((i, -kcsc * sig));
                }
                let y = sandwich(b, &mut selfv.into_iter()) + tail(b, sig);
                let yo = sandwich(b, &mut otherv.into_iter());
                add_block(&mut d, row0, jn * p, &y, side);
                add_block(&mut d, row0, other * p, &yo, side);
                let off = self.offsets[s];
                let ne = sb.explicit.len();
                for (e_i, &i) in sb.explicit.iter().enumerate() {
                    let (c, sk) = standing_factors(ks[i], len);
                    let k2s = ks[i] * ks[i] * sk;
                    // ψ' at the right end: −A k² sk + B c; at the left end: A k² sk + B c
                    let da = if side > 0.0 { -k2s } else { k2s };
                    for r in 0..p {
                        let g = b.proj[(i, r)];
                        d[(row0 + r, off + e_i)] += da * g * side;
                        d[(row0 + r, off + ne + e_i)] += c * g * side;
                    }
                }
            }
        }

        for (s, sb) in segs.iter().enumerate().take(last).skip(1) {
            let off = self.offsets[s];
            let ne = sb.explicit.len();
            let b = &*sb.basis;
            for (e_i, &i) in sb.explicit.iter().enumerate() {
                let (c, sk) = standing_factors(k[s][i], sb.segment.length);
                let r1 = off + e_i;
                let r2 = off + ne + e_i;
                d[(r1, off + e_i)] = c;
                d[(r1, off + ne + e_i)] = -sk;
                d[(r2, off + e_i)] = c;
                d[(r2, off + ne + e_i)] = sk;
                for r in 0..p {
                    let g = Complex64::new(b.proj[(i, r)], 0.0);
                    d[(r1, (s - 1) * p + r)] -= g;
                    d[(r2, s * p + r)] -= g;
                }
            }
        }
        System {
            z,
            matrix: d,
            k,
        }
    }

    fn rhs(&self, sys: &System, inc: &[Incidence]) -> Result<DMatrix<Complex64>> {
        let p = self.p;
        let nj = self.junction_count();
        let mut rhs = DMatrix::<Complex64>::zeros(self.size, inc.len());
        let last = self.basis.segments.len() - 1;
        for (col, ic) in inc.iter().enumerate() {
            let (s, jn) = match ic.side {
                Side::Left => (0, 0),
                Side::Right => (last, nj - 1),
            };
            let b = &self.basis.segments[s].basis;
            if ic.channel >= b.count() {
                return Err(Error::param(format!("incident channel {} not in basis", ic.channel)));
            }
            let src = I * sys.k[s][ic.channel] * 2.0;
            for r in 0..p {
                rhs[(jn * p + r, col)] -= src * b.proj[(ic.channel, r)];
            }
        }
        Ok(rhs)
    }

    /// Solve for the given incident waves. Returns one field per incidence.
    pub fn solve_incidences(&self, z: Complex64, sheet: Sheet, inc: &[Incidence]) -> Result<Vec<ModalField>> {
        if self.junction_count() == 0 {
            return Ok(inc.iter().map(|ic| self.uniform_field(z, sheet, Some(*ic))).collect());
        }
        let sys = self.assemble(z, sheet);
        let rhs = self.rhs(&sys, inc)?;
        let lu = sys.matrix.clone().lu();
        let sol = lu.solve(&rhs).ok_or(Error::Singular { z, residual: 0.0 })?;
        let resid = (&sys.matrix * &sol - &rhs).norm() / rhs.norm().max(1e-300);
        if !resid.is_finite() || resid > 1e-6 {
            return Err(Error::Singular { z, residual: resid });
        }
        Ok(inc
            .iter()
            .enumerate()
            .map(|(c, ic)| self.reconstruct(&sys, sol.column(c).into_owned(), Some(*ic)))
            .collect())
    }

    /// Scattering solution with unit incidence in channel j = 1 from each side.
    pub fn solve(&self, z: Complex64, sheet: Sheet) -> Result<ScatteringSolution> {
        let inc = [
            Incidence {
                side: Side::Left,
                channel: 0,
            },
            Incidence {
                side: Side::Right,
                channel: 0,
            },
        ];
        let mut fields = self.solve_incidences(z, sheet, &inc)?;
        let right = fields.pop().expect("two fields");
        let left = fields.pop().expect("two fields");
        let n = left.segments.len() - 1;
        let r = left.segments[0].profiles[0].backward();
        let t = left.segments[n].profiles[0].forward();
        let rp = right.segments[n].profiles[0].forward();
        let tp = right.segments[0].profiles[0].backward();
        Ok(ScatteringSolution {
            energy: z,
            sheet,
            s_matrix: [[r, tp], [t, rp]],
            left,
            right,
            n_modes_used: self.options.n_modes,
        })
    }

    /// Transmission amplitude t(z) for left incidence.
    pub fn transmission(&self, z: Complex64, sheet: Sheet) -> Result<Complex64> {
        if self.junction_count() == 0 {
            return Ok(ONE);
        }
        let f = self.solve_incidences(
            z,
            sheet,
            &[Incidence {
                side: Side::Left,
                channel: 0,
            }],
        )?;
        let n = f[0].segments.len() - 1;
        Ok(f[0].segments[n].profiles[0].forward())
    }

    /// log det of the matching system and the logarithmic derivative
    /// d/dz log det, from a central difference of the matrix.
    pub fn log_det(&self, z: Complex64, sheet: Sheet) -> Result<LogDet> {
        if self.junction_count() == 0 {
            return Err(Error::param("uniform channel has no matching system"));
        }
        let sys = self.assemble(z, sheet);
        let lu = sys.matrix.lu();
        let (value, umin, umax) = Self::lu_log_det(&lu, self.size);
        let h = 1e-5 * z.norm().max(1.0);
        let dp = self.assemble(z + h, sheet).matrix;
        let dm = self.assemble(z - h, sheet).matrix;
        let deriv = (dp - dm) / Complex64::new(2.0 * h, 0.0);
        let trace = if umin > 1e-300 {
            lu.solve(&deriv).map(|x| x.trace())
        } else {
            None
        };
        Ok(LogDet {
            value,
            derivative: trace,
            pivot_ratio: umin / umax,
        })
    }

    /// log det of the matching system without the derivative.
    pub fn log_det_value(&self, z: Complex64, sheet: Sheet) -> Result<Complex64> {
        if self.junction_count() == 0 {
            return Err(Error::param("uniform channel has no matching system"));
        }
        let lu = self.assemble(z, sheet).matrix.lu();
        Ok(Self::lu_log_det(&lu, self.size).0)
    }

    fn lu_log_det(lu: &LU<Complex64, Dyn, Dyn>, size: usize) -> (Complex64, f64, f64) {
        let u = lu.u();
        let mut value = Complex64::new(0.0, 0.0);
        let mut umin = f64::INFINITY;
        let mut umax: f64 = 0.0;
        for i in 0..size {
            let v = u[(i, i)];
            umin = umin.min(v.norm());
            umax = umax.max(v.norm());
            value += v.ln();
        }
        if lu.p().determinant::<f64>() < 0.0 {
            value += Complex64::new(0.0, PI);
        }
        (value, umin, umax)
    }

    /// Estimate of the null vector by inverse iteration, as a modal field
    /// with no incident wave, and the relative residual ‖Dx‖/(‖D‖‖x‖).
    pub fn null_field(&self, z: Complex64, sheet: Sheet) -> Result<(ModalField, f64)> {
        if self.junction_count() == 0 {
            return Err(Error::param("uniform channel has no matching system"));
        }
        let sys = self.assemble(z, sheet);
        let mut mat = sys.matrix.clone();
        let scale = mat.norm();
        let mut lu = mat.clone().lu();
        let mut x = DVector::<Complex64>::from_fn(self.size, |i, _| Complex64::new(1.0, 0.1 * i as f64));
        let mut solved = false;
        for _ in 0..4 {
            match lu.solve(&x) {
                Some(y) if y.iter().all(|v| v.is_finite()) => {
                    let n = y.norm();
                    x = y / Complex64::new(n, 0.0);
                    solved = true;
                }
                _ => {
                    // exactly singular: perturb the diagonal at rounding level
                    for i in 0..self.size {
                        mat[(i, i)] += Complex64::new(1e-14 * scale, 0.0);
                    }
                    lu = mat.clone().lu();
                }
            }
        }
        if !solved {
            return Err(Error::Singular { z, residual: f64::NAN });
        }
        let resid = (&sys.matrix * &x).norm() / scale;
        Ok((self.reconstruct(&sys, x, None), resid))
    }

    /// Fields of the `dim` right singular vectors with the smallest singular
    /// values, for a zero of det D that is numerically repeated.
    pub fn null_space(&self, z: Complex64, sheet: Sheet, dim: usize) -> Result<Vec<ModalField>> {
        if self.junction_count() == 0 {
            return Err(Error::param("uniform channel has no matching system"));
        }
        if dim == 0 || dim > self.size {
            return Err(Error::param("null space dimension out of range"));
        }
        let sys = self.assemble(z, sheet);
        let svd = sys.matrix.clone().svd(false, true);
        let v_t = svd.v_t.as_ref().ok_or(Error::Singular { z, residual: f64::NAN })?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        Ok(order[..dim]
            .iter()
            .map(|&r| {
                let x = v_t.row(r).adjoint();
                self.reconstruct(&sys, x, None)
            })
            .collect())
    }

    fn uniform_field(&self, z: Complex64, sheet: Sheet, inc: Option<Incidence>) -> ModalField {
        let sb = &self.basis.segments[0];
        let k = &self.basis.wavenumbers(z, sheet)[0];
        let profiles = (0..sb.basis.count())
            .map(|i| {
                let (f, b) = match inc {
                    Some(ic) if ic.channel == i && ic.side == Side::Left => (ONE, ZERO),
                    Some(ic) if ic.channel == i => (ZERO, ONE),
                    _ => (ZERO, ZERO),
                };
                ModeProfile::lead(k[i], f, b)
            })
            .collect();
        ModalField {
            energy: z,
            segments: vec![SegmentField {
                segment: sb.segment,
                modes: sb.basis.modes.clone(),
                reference: 0.0,
                profiles,
            }],
        }
    }

    fn reconstruct(&self, sys: &System, x: DVector<Complex64>, inc: Option<Incidence>) -> ModalField {
        let p = self.p;
        let segs = &self.basis.segments;
        let last = segs.len() - 1;
        let coeff = |jn: usize| x.rows(jn * p, p).into_owned();
        let mut out = Vec::with_capacity(segs.len());
        for (s, sb) in segs.iter().enumerate() {
            let b = &*sb.basis;
            let ks = &sys.k[s];
            let g = b.proj.map(|v| Complex64::new(v, 0.0));
            let inc_amp = |i: usize, side: Side| match inc {
                Some(ic) if ic.side == side && ic.channel == i => ONE,
                _ => ZERO,
            };
            let profiles: Vec<ModeProfile>;
            let reference;
            if s == 0 {
                let alpha = &g * coeff(0);
                reference = sb.segment.x_end;
                profiles = (0..b.count())
                    .map(|i| {
                        let f = inc_amp(i, Side::Left);
                        ModeProfile::lead(ks[i], f, alpha[i] - f)
                    })
                    .collect();
            } else if s == last {
                let alpha = &g * coeff(last - 1);
                reference = sb.segment.x_start;
                profiles = (0..b.count())
                    .map(|i| {
                        let bi = inc_amp(i, Side::Right);
                        ModeProfile::lead(ks[i], alpha[i] - bi, bi)
                    })
                    .collect();
            } else {
                let alpha = &g * coeff(s - 1);
                let beta = &g * coeff(s);
                reference = sb.segment.x_start;
                let len = sb.segment.length;
                let off = self.offsets[s];
                let ne = sb.explicit.len();
                let mut pos = vec![usize::MAX; b.count()];
                sb.explicit.iter().enumerate().for_each(|(e, &i)| pos[i] = e);
                profiles = (0..b.count())
                    .map(|i| {
                        if pos[i] != usize::MAX {
                            ModeProfile::Standing {
                                k: ks[i],
                                length: len,
                                a: x[off + pos[i]],
                                b: x[off + ne + pos[i]],
                            }
                        } else {
                            let e = (I * ks[i] * len).exp();
                            let den = ONE - e * e;
                            ModeProfile::Waves {
                                k: ks[i],
                                length: len,
                                forward: (alpha[i] - beta[i] * e) / den,
                                backward: (beta[i] - alpha[i] * e) / den,
                            }
                        }
                    })
                    .collect();
            }
            out.push(SegmentField {
                segment: sb.segment,
                modes: b.modes.clone(),
                reference,
                profiles,
            });
        }
        ModalField {
            energy: sys.z,
            segments: out,
        }
    }
}

fn add_block(d: &mut DMatrix<Complex64>, r0: usize, c0: usize, y: &DMatrix<Complex64>, side: f64) {
    for r in 0..y.nrows() {
        for c in 0..y.ncols() {
            d[(r0 + r, c0 + c)] += y[(r, c)] * side;
        }
    }
}

/// log det D(z) with its logarithmic derivative.
#[derive(Clone, Copy, Debug)]
pub struct LogDet {
    pub value: Complex64,
    /// d/dz log det D; None when the matrix is numerically singular.
    pub derivative: Option<Complex64>,
    /// min |U_ii| / max |U_ii| of the LU factor.
    pub pivot_ratio: f64,
}

/// S-matrix and modal fields at one energy.
///
/// `s_matrix = [[r, t′], [t, r′]]` for channel j = 1. Reflection phases are
/// referenced to the outermost junction on the incident side, transmission
/// phases to the pair of outermost junctions.
#[derive(Clone, Debug)]
pub struct ScatteringSolution {
    pub energy: Complex64,
    pub sheet: Sheet,
    pub s_matrix: [[Complex64; 2]; 2],
    /// Field for unit incidence from the left.
    pub left: ModalField,
    /// Field for unit incidence from the right.
    pub right: ModalField,
    pub n_modes_used: usize,
}

impl ScatteringSolution {
    pub fn r(&self) -> Complex64 {
        self.s_matrix[0][0]
    }
    pub fn t(&self) -> Complex64 {
        self.s_matrix[1][0]
    }
    pub fn t_prime(&self) -> Complex64 {
        self.s_matrix[0][1]
    }
    pub fn r_prime(&self) -> Complex64 {
        self.s_matrix[1][1]
    }
    pub fn transmission_probability(&self) -> f64 {
        self.t().norm_sqr()
    }
    pub fn reflection_probability(&self) -> f64 {
        self.r().norm_sqr()
    }
}

/// Convenience wrapper building a one-off session.
pub fn solve_scattering(z: Complex64, geometry: &Geometry, n_modes: usize, sheet: Sheet) -> Result<ScatteringSolution> {
    ModeMatcher::new(geometry, SolverOptions::with_modes(n_modes))?.solve(z, sheet)
}
