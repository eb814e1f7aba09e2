use std::sync::OnceLock;

use num_complex::Complex64;

use super::basis::transverse_mode;
use crate::error::{Error, Result};
use crate::geometry::Segment;
use crate::special::GaussRule;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Longitudinal profile of one transverse mode inside one segment.
///
/// The coordinate s is measured from the segment's reference plane: the
/// junction for a lead, the left end for a finite segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModeProfile {
    /// f e^{iks} + b e^{-iks}.
    Lead {
        k: Complex64,
        forward: Complex64,
        backward: Complex64,
    },
    /// f e^{iks} + b e^{-ik(s-L)}; each wave is referenced to the plane it
    /// leaves from, so evanescent amplitudes stay bounded.
    Waves {
        k: Complex64,
        length: f64,
        forward: Complex64,
        backward: Complex64,
    },
    /// a cos(k(s-L/2)) + b sin(k(s-L/2))/k; regular through k = 0.
    Standing {
        k: Complex64,
        length: f64,
        a: Complex64,
        b: Complex64,
    },
}

fn sinc_k(k: Complex64, u: f64) -> Complex64 {
    let x = k * u;
    if x.norm() < 1e-4 {
        let x2 = x * x;
        (Complex64::new(1.0, 0.0) - x2 / 6.0 + x2 * x2 / 120.0) * u
    } else {
        x.sin() / k
    }
}

impl ModeProfile {
    pub fn lead(k: Complex64, forward: Complex64, backward: Complex64) -> Self {
        ModeProfile::Lead { k, forward, backward }
    }

    pub fn k(&self) -> Complex64 {
        match *self {
            ModeProfile::Lead { k, .. } | ModeProfile::Waves { k, .. } | ModeProfile::Standing { k, .. } => k,
        }
    }

    pub fn value(&self, s: f64) -> Complex64 {
        match *self {
            ModeProfile::Lead { k, forward, backward } => {
                forward * (I * k * s).exp() + backward * (-I * k * s).exp()
            }
            ModeProfile::Waves {
                k,
                length,
                forward,
                backward,
            } => forward * (I * k * s).exp() + backward * (-I * k * (s - length)).exp(),
            ModeProfile::Standing { k, length, a, b } => {
                let u = s - 0.5 * length;
                a * (k * u).cos() + b * sinc_k(k, u)
            }
        }
    }

    /// Amplitude of e^{iks} in the wave form.
    pub fn forward(&self) -> Complex64 {
        match *self {
            ModeProfile::Lead { forward, .. } | ModeProfile::Waves { forward, .. } => forward,
            ModeProfile::Standing { k, length, a, b } => {
                (a * 0.5 + b / (I * k * 2.0)) * (-I * k * (0.5 * length)).exp()
            }
        }
    }

    /// Amplitude of the backward wave in the wave form.
    pub fn backward(&self) -> Complex64 {
        match *self {
            ModeProfile::Lead { backward, .. } | ModeProfile::Waves { backward, .. } => backward,
            ModeProfile::Standing { k, length, a, b } => {
                (a * 0.5 - b / (I * k * 2.0)) * (-I * k * (0.5 * length)).exp()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SegmentField {
    pub segment: Segment,
    /// Transverse mode numbers (odd m) of the profiles.
    pub modes: Vec<u32>,
    /// x of the plane where s = 0.
    pub reference: f64,
    pub profiles: Vec<ModeProfile>,
}

impl SegmentField {
    pub fn value(&self, x: f64, y: f64) -> Complex64 {
        let s = x - self.reference;
        self.modes
            .iter()
            .zip(&self.profiles)
            .map(|(&m, p)| p.value(s) * transverse_mode(self.segment.width, m, y))
            .sum()
    }

    /// ∫ |ψ|² over the segment. Infinite if a lead carries a propagating wave.
    pub fn norm_sqr(&self) -> f64 {
        if self.segment.is_lead() {
            let left_lead = self.segment.x_start.is_infinite();
            return self
                .profiles
                .iter()
                .map(|p| {
                    let ModeProfile::Lead { k, forward, backward } = *p else {
                        unreachable!("lead segments carry lead profiles")
                    };
                    let (incoming, outgoing) = if left_lead { (forward, backward) } else { (backward, forward) };
                    if incoming.norm() > 0.0 {
                        f64::INFINITY
                    } else if outgoing.norm() == 0.0 {
                        0.0
                    } else if k.im <= 0.0 {
                        f64::INFINITY
                    } else {
                        outgoing.norm_sqr() / (2.0 * k.im)
                    }
                })
                .sum();
        }
        (0..self.profiles.len())
            .map(|i| self.mode_inner(self, i).re)
            .sum()
    }

    /// ∫ conj(ψ_i(s)) φ_i(L - s) ds: mode i of `other` reflected end to end.
    pub fn mirrored_inner(&self, other: &SegmentField, i: usize) -> Complex64 {
        let len = self.segment.length;
        let p = &self.profiles[i];
        let q = &other.profiles[i];
        integrate_profile(len, p.k().norm().max(q.k().norm()), |s| p.value(s).conj() * q.value(len - s))
    }

    /// ∫ conj(ψ_i) φ_i ds over the segment for mode i of two finite segments
    /// of equal length (in local coordinates).
    pub fn mode_inner(&self, other: &SegmentField, i: usize) -> Complex64 {
        let len = self.segment.length;
        let p = &self.profiles[i];
        let q = &other.profiles[i];
        integrate_profile(len, p.k().norm().max(q.k().norm()), |s| p.value(s).conj() * q.value(s))
    }
}

/// Composite Gauss-Legendre rule over [0, len] fine enough for oscillation
/// and growth at wavenumber scale `kmax`.
pub(crate) fn integrate_profile<F: FnMut(f64) -> Complex64>(len: f64, kmax: f64, mut f: F) -> Complex64 {
    let panels = ((len * (kmax + 1.0) / 4.0).ceil() as usize).max(1);
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    let rule = RULE.get_or_init(|| GaussRule::legendre(24));
    let h = len / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..panels {
        let a = j as f64 * h;
        acc += rule.integrate(a, a + h, &mut f);
    }
    acc
}

/// Modal representation of a solution (scattering state or resonance).
#[derive(Clone, Debug)]
pub struct ModalField {
    pub energy: Complex64,
    pub segments: Vec<SegmentField>,
}

impl ModalField {
    fn locate(&self, x: f64, y: f64) -> Result<&SegmentField> {
        let seg = self
            .segments
            .iter()
            .find(|s| s.segment.contains(x))
            .ok_or(Error::OutsideChannel { x, y })?;
        if y.abs() > 0.5 * seg.segment.width + 1e-12 || !x.is_finite() || !y.is_finite() {
            return Err(Error::OutsideChannel { x, y });
        }
        Ok(seg)
    }

    /// ψ(x, y) from the modal expansion of the containing segment.
    pub fn value(&self, x: f64, y: f64) -> Result<Complex64> {
        Ok(self.locate(x, y)?.value(x, y))
    }

    /// Finite cavity-width segments, left to right.
    pub fn cavities(&self) -> Vec<&SegmentField> {
        let lead = self.segments[0].segment.width;
        self.segments
            .iter()
            .filter(|s| !s.segment.is_lead() && s.segment.width > lead + 1e-12)
            .collect()
    }

    /// ∫ |ψ|² over the whole channel (evanescent leads included).
    pub fn norm_sqr(&self) -> f64 {
        self.segments.iter().map(|s| s.norm_sqr()).sum()
    }

    /// ∫ |ψ|² with the non-decaying lead components left out, and the
    /// largest amplitude among those left out. For a bound state the second
    /// value is at rounding level and the first is the full norm.
    pub fn confined_norm_sqr(&self) -> (f64, f64) {
        let mut norm = 0.0;
        let mut leak: f64 = 0.0;
        for seg in &self.segments {
            if !seg.segment.is_lead() {
                norm += seg.norm_sqr();
                continue;
            }
            let left_lead = seg.segment.x_start.is_infinite();
            for p in &seg.profiles {
                let amp = if left_lead { p.backward() } else { p.forward() };
                let k = p.k();
                if k.im > 0.0 {
                    norm += amp.norm_sqr() / (2.0 * k.im);
                } else {
                    leak = leak.max(amp.norm());
                }
            }
        }
        (norm, leak)
    }

    /// ⟨self|other⟩ over the channel with non-decaying lead components left
    /// out. Both fields must belong to the same energy.
    pub fn confined_inner(&self, other: &ModalField) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (sa, sb) in self.segments.iter().zip(&other.segments) {
            if !sa.segment.is_lead() {
                acc += (0..sa.profiles.len()).map(|i| sa.mode_inner(sb, i)).sum::<Complex64>();
                continue;
            }
            let left_lead = sa.segment.x_start.is_infinite();
            for (p, q) in sa.profiles.iter().zip(&sb.profiles) {
                let k = p.k();
                if k.im > 0.0 {
                    let (a, b) = if left_lead { (p.backward(), q.backward()) } else { (p.forward(), q.forward()) };
                    acc += a.conj() * b / (2.0 * k.im);
                }
            }
        }
        acc
    }

    /// Normalised overlap between the fields of cavity 1 and cavity 2, both
    /// in cavity-local coordinates. +1 when cavity 2 is a translated copy of
    /// cavity 1, −1 for a sign-flipped copy.
    pub fn cavity_translation_overlap(&self) -> Result<Complex64> {
        let cav = self.cavities();
        if cav.len() != 2 {
            return Err(Error::param("translation overlap needs two cavities"));
        }
        let (a, b) = (cav[0], cav[1]);
        let n = a.profiles.len();
        let ab: Complex64 = (0..n).map(|i| a.mode_inner(b, i)).sum();
        let aa: f64 = (0..n).map(|i| a.mode_inner(a, i).re).sum();
        let bb: f64 = (0..n).map(|i| b.mode_inner(b, i).re).sum();
        Ok(ab / (aa * bb).sqrt())
    }

    /// Normalised overlap between the field of cavity 2 and the mirror image
    /// of cavity 1 about the midplane. ±1 for a state of definite parity.
    pub fn cavity_mirror_overlap(&self) -> Result<Complex64> {
        let cav = self.cavities();
        if cav.len() != 2 {
            return Err(Error::param("mirror overlap needs two cavities"));
        }
        let (a, b) = (cav[0], cav[1]);
        let n = a.profiles.len();
        let ab: Complex64 = (0..n).map(|i| a.mirrored_inner(b, i)).sum();
        let aa: f64 = (0..n).map(|i| a.mode_inner(a, i).re).sum();
        let bb: f64 = (0..n).map(|i| b.mode_inner(b, i).re).sum();
        Ok(ab / (aa * bb).sqrt())
    }
}
