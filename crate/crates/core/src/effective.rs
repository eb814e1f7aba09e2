//! Two-level Friedrichs model of the double cavity: one resonant level per
//! cavity coupled to the first lead channel.
//!
//! The symmetric and antisymmetric combinations |1⟩ ± |2⟩ decouple. Each
//! feels the self-energy
//!
//! Σ±(z, d) = 2 ∫₀^K |u(k) ± v(k)|² (1 ± cos kd) / (z − π² − k²) dk,
//!
//! continued from the upper half-plane onto the second sheet. A pole
//! reaches the real axis when 1 ± cos kd vanishes at its energy.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{threshold, Sheet};
use crate::quadrature::{integrate, integrate_path, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Plus,
    Minus,
}

impl Level {
    fn sign(self) -> f64 {
        match self {
            Level::Plus => 1.0,
            Level::Minus => -1.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Plus => "plus",
            Level::Minus => "minus",
        }
    }
}

/// Coupling amplitude as a function of the lead wavenumber k.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Coupling {
    Constant { amplitude: Complex64 },
    /// amplitude · e^{−decay·k}
    Exponential { amplitude: Complex64, decay: f64 },
}

impl Coupling {
    pub fn constant(v: f64) -> Self {
        Coupling::Constant {
            amplitude: Complex64::new(v, 0.0),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    fn term(&self) -> (Complex64, f64) {
        match *self {
            Coupling::Constant { amplitude } => (amplitude, 0.0),
            Coupling::Exponential { amplitude, decay } => (amplitude, decay),
        }
    }

    pub fn value(&self, k: f64) -> Complex64 {
        let (a, b) = self.term();
        a * (-b * k).exp()
    }

    pub fn is_zero(&self) -> bool {
        self.term().0.norm() == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingModel {
    /// Bare cavity level.
    pub e_c0: f64,
    pub v: Coupling,
    pub u: Coupling,
    pub k_cutoff: f64,
}

impl CouplingModel {
    pub fn new(e_c0: f64, v: Coupling, k_cutoff: f64) -> Self {
        Self {
            e_c0,
            v,
            u: Coupling::zero(),
            k_cutoff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.e_c0.is_finite() || !(self.k_cutoff > 0.0) || !self.k_cutoff.is_finite() {
            return Err(Error::param("coupling model needs finite E_c0 and k_cutoff > 0"));
        }
        for c in [self.v, self.u] {
            if let Coupling::Exponential { decay, .. } = c {
                if !(decay >= 0.0) {
                    return Err(Error::param("exponential coupling decay must be >= 0"));
                }
            }
            if !c.term().0.is_finite() {
                return Err(Error::param("coupling amplitude must be finite"));
            }
        }
        Ok(())
    }

    /// Analytic continuation of |u(k) ± v(k)|² off the real k axis. `None`
    /// gives |v|² alone (single cavity).
    fn density(&self, level: Option<Level>, k: Complex64) -> Complex64 {
        let terms: Vec<(Complex64, f64)> = match level {
            None => vec![self.v.term()],
            Some(l) => {
                let (a, b) = self.v.term();
                vec![self.u.term(), (a * l.sign(), b)]
            }
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for &(ci, bi) in &terms {
            for &(cj, bj) in &terms {
                acc += ci * cj.conj() * (-(bi + bj) * k).exp();
            }
        }
        acc
    }
}

/// Which self-energy: a single cavity, or one of the two combinations at
/// centre distance d.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Channel {
    Single,
    Pair(Level, f64),
}

impl Channel {
    fn numerator(&self, model: &CouplingModel, k: Complex64) -> Complex64 {
        match *self {
            Channel::Single => 2.0 * model.density(None, k),
            Channel::Pair(l, d) => 2.0 * model.density(Some(l), k) * (1.0 + l.sign() * (k * d).cos()),
        }
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_intervals: 20000,
    }
}

fn principal_k(z: Complex64) -> Complex64 {
    let w = z - threshold(1);
    // +0 imaginary part on the real axis selects the upper lip
    let w = Complex64::new(w.re, if w.im == 0.0 { 0.0 } else { w.im });
    w.sqrt()
}

/// First-sheet value. On the real axis the upper lip (z + i0) is used.
fn sigma_first(model: &CouplingModel, ch: Channel, z: Complex64) -> Result<Complex64> {
    let big_k = model.k_cutoff;
    let kap = principal_k(z);
    if kap.norm() < 1e-12 {
        return Err(Error::param("self-energy is singular at the channel threshold"));
    }
    let w = kap * kap;
    let f_kap = ch.numerator(model, kap);
    let mut breaks = Vec::new();
    if kap.re > 0.0 && kap.re < big_k {
        breaks.push(kap.re);
    }
    let rest = integrate(
        |k| {
            let kc = Complex64::new(k, 0.0);
            let den = w - kc * kc;
            if den.norm() == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            (ch.numerator(model, kc) - f_kap) / den
        },
        0.0,
        big_k,
        &breaks,
        quad_opts(),
    )?;
    // ∫₀^K dk / (κ² − k²); κ − K on the negative real axis takes +iπ.
    let minus = kap - big_k;
    let minus = Complex64::new(minus.re, if minus.im == 0.0 { 0.0 } else { minus.im });
    let log_term = ((kap + big_k).ln() - minus.ln()) / (2.0 * kap);
    Ok(rest.value + f_kap * log_term)
}

fn sigma(model: &CouplingModel, ch: Channel, z: Complex64, sheet: Sheet) -> Result<Complex64> {
    model.validate()?;
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::param("z must be finite"));
    }
    let first = sigma_first(model, ch, z)?;
    match sheet {
        Sheet::First => Ok(first),
        Sheet::Second => {
            if z.im > 0.0 {
                return Err(Error::param("second-sheet self-energy is defined for Im z <= 0"));
            }
            if z.im == 0.0 {
                return Ok(first);
            }
            let kap = principal_k(z);
            Ok(first - I * PI * ch.numerator(model, kap) / kap)
        }
    }
}

/// Value continued from the upper half-plane: first sheet above the axis,
/// second sheet below.
fn sigma_continued(model: &CouplingModel, ch: Channel, z: Complex64) -> Result<Complex64> {
    if z.im > 0.0 {
        sigma(model, ch, z, Sheet::First)
    } else {
        sigma(model, ch, z, Sheet::Second)
    }
}

/// Self-energy Σ±(z, d) of the |1⟩ ± |2⟩ level.
pub fn self_energy(z: Complex64, level: Level, d: f64, model: &CouplingModel, sheet: Sheet) -> Result<Complex64> {
    if !(d > 0.0) {
        return Err(Error::param("cavity distance must be positive"));
    }
    sigma(model, Channel::Pair(level, d), z, sheet)
}

/// Self-energy of a single cavity level, 2 ∫ |v|² / (z − π² − k²) dk.
pub fn single_self_energy(z: Complex64, model: &CouplingModel, sheet: Sheet) -> Result<Complex64> {
    sigma(model, Channel::Single, z, sheet)
}

/// Independent evaluation of Σ by direct quadrature along a k-contour that
/// dips below the real axis around Re κ, which is the continuation from
/// above without any analytic subtraction.
pub fn self_energy_contour(z: Complex64, level: Option<(Level, f64)>, model: &CouplingModel, sheet: Sheet) -> Result<Complex64> {
    model.validate()?;
    let ch = match level {
        None => Channel::Single,
        Some((l, d)) => Channel::Pair(l, d),
    };
    let w = z - threshold(1);
    let big_k = model.k_cutoff;
    let kap = principal_k(z);
    let integrand = |k: Complex64| ch.numerator(model, k) / (w - k * k);
    let below_axis = match sheet {
        Sheet::First => z.im == 0.0,
        Sheet::Second => z.im <= 0.0,
    };
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let path = if below_axis && kap.re > 0.0 && kap.re < big_k {
        let delta = (0.5 * kap.re).min(0.5 * (big_k - kap.re)).min(1.0);
        let depth = kap.im.abs() + 0.5;
        vec![
            c(0.0, 0.0),
            c(kap.re - delta, 0.0),
            c(kap.re - delta, -depth),
            c(kap.re + delta, -depth),
            c(kap.re + delta, 0.0),
            c(big_k, 0.0),
        ]
    } else {
        vec![c(0.0, 0.0), c(big_k, 0.0)]
    };
    Ok(integrate_path(integrand, &path, quad_opts())?.value)
}

/// Solution of z = E_c0 + Σ(z).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectivePole {
    pub level: Level,
    pub d: f64,
    pub z0: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

const MAX_ITER: usize = 200;
const POLE_TOL: f64 = 1e-10;

fn newton_pole(model: &CouplingModel, ch: Channel, start: Complex64) -> Result<(Complex64, usize, f64)> {
    let f = |z: Complex64| -> Result<Complex64> { Ok(z - model.e_c0 - sigma_continued(model, ch, z)?) };
    let mut z = start;
    let mut fz = f(z)?;
    for it in 1..=MAX_ITER {
        if fz.norm() < POLE_TOL {
            return Ok((z, it - 1, fz.norm()));
        }
        let h = 1e-6;
        let deriv = (f(z + h)? - f(z - h)?) / (2.0 * h);
        let mut step = -fz / deriv;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        if step.norm() > 1.0 {
            step /= step.norm();
        }
        z += step;
        fz = f(z)?;
    }
    if fz.norm() < POLE_TOL {
        return Ok((z, MAX_ITER, fz.norm()));
    }
    Err(Error::NoConvergence {
        what: "effective pole equation".into(),
        iterations: MAX_ITER,
        last: z,
        residual: fz.norm(),
    })
}

/// Pole of the |1⟩ ± |2⟩ level at distance d, by Newton iteration from
/// E_c0 − 10⁻³i.
pub fn solve_pole_equation(level: Level, d: f64, model: &CouplingModel) -> Result<EffectivePole> {
    if !(d > 0.0) {
        return Err(Error::param("cavity distance must be positive"));
    }
    model.validate()?;
    let ch = Channel::Pair(level, d);
    if model.v.is_zero() && model.u.is_zero() {
        return Ok(EffectivePole {
            level,
            d,
            z0: Complex64::new(model.e_c0, 0.0),
            iterations: 0,
            residual: 0.0,
        });
    }
    let (mut z0, iterations, residual) = newton_pole(model, ch, Complex64::new(model.e_c0, -1e-3))?;
    if z0.im > 0.0 && z0.im < 1e-10 {
        z0.im = 0.0;
    }
    Ok(EffectivePole {
        level,
        d,
        z0,
        iterations,
        residual,
    })
}

/// Pole of the single-cavity level.
pub fn single_level_pole(model: &CouplingModel) -> Result<Complex64> {
    model.validate()?;
    if model.v.is_zero() {
        return Ok(Complex64::new(model.e_c0, 0.0));
    }
    Ok(newton_pole(model, Channel::Single, Complex64::new(model.e_c0, -1e-3))?.0)
}

/// Distance multiple of π/k at which the level becomes bound:
/// 2n + 1 for the plus level, 2n for the minus level.
fn bic_multiple(level: Level, n: u32) -> u32 {
    match level {
        Level::Plus => 2 * n + 1,
        Level::Minus => 2 * n,
    }
}

/// Self-consistent bound-state distance d±(n) and its real energy.
pub fn bic_distance(level: Level, n: u32, model: &CouplingModel) -> Result<(f64, f64)> {
    model.validate()?;
    let m = bic_multiple(level, n);
    if m == 0 {
        return Err(Error::param("n = 0 gives zero distance for the minus level"));
    }
    let e_l = threshold(1);
    let mut e = model.e_c0;
    let mut d = f64::NAN;
    for _ in 0..MAX_ITER {
        if e <= e_l {
            return Err(Error::NoBic { d, gamma: f64::NAN });
        }
        let k = (e - e_l).sqrt();
        let d_new = m as f64 * PI / k;
        let ch = Channel::Pair(level, d_new);
        // real solve of E = E_c0 + Re Σ(E + i0)
        let g = |x: f64| -> Result<f64> {
            Ok(x - model.e_c0 - sigma(model, ch, Complex64::new(x, 0.0), Sheet::First)?.re)
        };
        let mut x = e;
        for _ in 0..60 {
            let h = 1e-7;
            let gx = g(x)?;
            let dg = (g(x + h)? - g(x - h)?) / (2.0 * h);
            let step = -gx / dg;
            x += step.clamp(-0.5, 0.5);
            if step.abs() < 1e-13 {
                break;
            }
        }
        let converged = (d_new - d).abs() < 1e-8;
        d = d_new;
        e = x;
        if converged {
            let im = sigma(model, ch, Complex64::new(e, 0.0), Sheet::First)?.im;
            if im.abs() > 1e-8 {
                return Err(Error::NoBic { d, gamma: -im });
            }
            return Ok((d, e));
        }
    }
    Err(Error::NoConvergence {
        what: "bound-state distance self-consistency".into(),
        iterations: MAX_ITER,
        last: Complex64::new(e, d),
        residual: f64::NAN,
    })
}

/// How the bare level is chosen when calibrating to a pole.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Calibration {
    /// Fit E_c0 and v₀ so the single-level pole equals the target.
    FitPole,
    /// Keep E_c0 at the given closed-cavity level and fit v₀ to the width.
    BareLevel { e_c0: f64 },
}

/// Constant coupling v₀ (u ≡ 0) reproducing a single-cavity pole. The
/// cutoff is `cutoff_factor` times the resonant wavenumber.
pub fn calibrate_coupling(pole: Complex64, calibration: Calibration, cutoff_factor: f64) -> Result<CouplingModel> {
    if !(pole.im < 0.0) || pole.re <= threshold(1) {
        return Err(Error::param("target pole must lie below the real axis above the first threshold"));
    }
    if !(cutoff_factor > 1.0) {
        return Err(Error::param("cutoff factor must exceed 1"));
    }
    let k_res = (pole.re - threshold(1)).sqrt();
    let unit = CouplingModel::new(0.0, Coupling::constant(1.0), cutoff_factor * k_res);
    // Σ is linear in v₀²
    let s = single_self_energy(pole, &unit, Sheet::Second)?;
    if !(s.im < 0.0) {
        return Err(Error::param("unit self-energy has no decay at the target pole"));
    }
    let v2 = pole.im / s.im;
    match calibration {
        Calibration::FitPole => {
            let e_c0 = pole.re - v2 * s.re;
            let model = CouplingModel::new(e_c0, Coupling::constant(v2.sqrt()), unit.k_cutoff);
            let z = single_level_pole(&model)?;
            if (z - pole).norm() > 1e-6 {
                return Err(Error::NoConvergence {
                    what: "coupling calibration".into(),
                    iterations: 1,
                    last: z,
                    residual: (z - pole).norm(),
                });
            }
            Ok(model)
        }
        Calibration::BareLevel { e_c0 } => {
            // secant on v₀² for Im z(v₀²) = Im pole
            let gamma_of = |v2: f64| -> Result<f64> {
                let m = CouplingModel::new(e_c0, Coupling::constant(v2.max(0.0).sqrt()), unit.k_cutoff);
                Ok(single_level_pole(&m)?.im - pole.im)
            };
            let (mut a, mut b) = (v2, 1.05 * v2);
            let (mut fa, mut fb) = (gamma_of(a)?, gamma_of(b)?);
            for _ in 0..60 {
                if fb.abs() < 1e-12 {
                    break;
                }
                let c = b - fb * (b - a) / (fb - fa);
                a = b;
                fa = fb;
                b = c.max(1e-16);
                fb = gamma_of(b)?;
            }
            if fb.abs() > 1e-9 {
                return Err(Error::NoConvergence {
                    what: "coupling calibration (width)".into(),
                    iterations: 60,
                    last: Complex64::new(b, 0.0),
                    residual: fb.abs(),
                });
            }
            Ok(CouplingModel::new(e_c0, Coupling::constant(b.sqrt()), unit.k_cutoff))
        }
    }
}
