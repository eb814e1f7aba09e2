use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::special::{ApertureBasis, EDGE_LAMBDA};

/// Hard-wall transverse mode of a channel of the given width centred on y = 0.
pub fn transverse_mode(width: f64, m: u32, y: f64) -> f64 {
    if y.abs() > 0.5 * width {
        return 0.0;
    }
    (2.0 / width).sqrt() * (m as f64 * PI * (y / width + 0.5)).sin()
}

/// ∫ cos(κ y + φ) dy over [-h, h].
fn cos_integral(kappa: f64, phi: f64, h: f64) -> f64 {
    if kappa.abs() < 1e-12 {
        2.0 * h * phi.cos()
    } else {
        ((kappa * h + phi).sin() - (-kappa * h + phi).sin()) / kappa
    }
}

/// Overlaps ⟨φᵃ_i | φᵇ_j⟩ between the first `n_modes` transverse modes of a
/// narrow channel (width_a) and a wider coaxial one (width_b). The integral
/// runs over the narrow cross-section.
pub fn junction_overlap(width_a: f64, width_b: f64, n_modes: usize) -> Result<DMatrix<f64>> {
    if !(width_a > 0.0 && width_a <= width_b) {
        return Err(Error::param(format!(
            "junction_overlap needs 0 < width_a <= width_b (got {width_a}, {width_b})"
        )));
    }
    let (a, b) = (width_a, width_b);
    let norm = 2.0 / (a * b).sqrt();
    Ok(DMatrix::from_fn(n_modes, n_modes, |i, j| {
        let ka = (i + 1) as f64 * PI / a;
        let kb = (j + 1) as f64 * PI / b;
        let pa = (i + 1) as f64 * PI / 2.0;
        let pb = (j + 1) as f64 * PI / 2.0;
        let minus = cos_integral(ka - kb, pa - pb, 0.5 * a);
        let plus = cos_integral(ka + kb, pa + pb, 0.5 * a);
        0.5 * norm * (minus - plus)
    }))
}

/// Odd-m modes kept explicitly per unit of width, relative to `n_modes`.
pub(crate) fn explicit_count(n_modes: usize, width: f64) -> usize {
    ((n_modes as f64) * width).round().max(1.0) as usize
}

/// Number of odd modes summed for the energy-independent tail tables.
pub(crate) const TAIL_COUNT: usize = 200_000;

/// Projections of the even transverse modes (m = 1, 3, 5, …) of one channel
/// width onto the aperture functions of a centred junction, plus the
/// energy-independent tail tables for all modes beyond the explicit ones.
#[derive(Debug)]
pub struct WidthBasis {
    pub width: f64,
    pub aperture: f64,
    /// Mode numbers m (odd).
    pub modes: Vec<u32>,
    /// G[(i, p)] = ⟨φ_{m_i} | g_p⟩.
    pub proj: DMatrix<f64>,
    /// Σ_{m beyond} G_mp G_mq (mπ/W)^(1-2j), j = 0, 1, 2.
    pub tails: [DMatrix<f64>; 3],
}

impl WidthBasis {
    pub fn count(&self) -> usize {
        self.modes.len()
    }

    pub fn aperture_count(&self) -> usize {
        self.proj.ncols()
    }

    /// Transverse cutoff energy (mπ/W)² of local mode i.
    pub fn threshold(&self, i: usize) -> f64 {
        let q = self.modes[i] as f64 * PI / self.width;
        q * q
    }

    fn build(width: f64, aperture: f64, ab: &ApertureBasis, explicit: usize) -> Self {
        let p = ab.len();
        let alpha = PI * aperture / (2.0 * width);
        let pref = (2.0 / width).sqrt() * 0.5 * aperture;
        let row = |m: usize, out: &mut [f64]| {
            ab.cosine_transform(alpha * m as f64, out);
            let s = if (m / 2).is_multiple_of(2) { pref } else { -pref };
            out.iter_mut().for_each(|v| *v *= s);
        };
        let modes: Vec<u32> = (0..explicit).map(|i| (2 * i + 1) as u32).collect();
        let mut proj = DMatrix::zeros(explicit, p);
        let mut buf = vec![0.0; p];
        for i in 0..explicit {
            row(2 * i + 1, &mut buf);
            for q in 0..p {
                proj[(i, q)] = buf[q];
            }
        }

        let chunk = 4096;
        let starts: Vec<usize> = (explicit..TAIL_COUNT).step_by(chunk).collect();
        let zero = || [DMatrix::<f64>::zeros(p, p), DMatrix::zeros(p, p), DMatrix::zeros(p, p)];
        let mut tails = starts
            .par_iter()
            .map(|&s| {
                let mut acc = zero();
                let mut g = vec![0.0; p];
                for i in s..(s + chunk).min(TAIL_COUNT) {
                    let m = 2 * i + 1;
                    row(m, &mut g);
                    let q = m as f64 * PI / width;
                    let f = [q, 1.0 / q, 1.0 / (q * q * q)];
                    for a in 0..p {
                        for b in a..p {
                            let gg = g[a] * g[b];
                            for j in 0..3 {
                                acc[j][(a, b)] += gg * f[j];
                            }
                        }
                    }
                }
                acc
            })
            .reduce(zero, |mut x, y| {
                for j in 0..3 {
                    x[j] += &y[j];
                }
                x
            });

        // Analytic remainder of the slowly converging j = 0 table.
        let lam = EDGE_LAMBDA;
        let big_m = (2 * TAIL_COUNT) as f64;
        let s = big_m.powf(1.0 - 2.0 * lam) / (2.0 * (2.0 * lam - 1.0));
        let ratio = aperture / width;
        let resonant = (ratio - ratio.round()).abs() < 1e-12;
        let c = ab.bessel_const();
        for a in 0..p {
            for b in a..p {
                let sign_ab = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                let mut bracket = sign_ab * sign_ab;
                if resonant {
                    let phase = 2.0 * alpha * (big_m + 1.0) - ((a + b) as f64 + lam) * PI - 0.5 * PI;
                    bracket += phase.cos();
                }
                let rem = aperture / (PI * width) * c[a] * c[b] * sign_ab * alpha.powf(-2.0 * lam) * s * bracket;
                tails[0][(a, b)] += rem;
            }
        }
        for t in tails.iter_mut() {
            for a in 0..p {
                for b in 0..a {
                    t[(a, b)] = t[(b, a)];
                }
            }
        }
        Self {
            width,
            aperture,
            modes,
            proj,
            tails,
        }
    }
}

type Key = (u64, u64, usize, usize);

fn aperture_cache(p: usize) -> Arc<ApertureBasis> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ApertureBasis>>>> = OnceLock::new();
    let map = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = map.lock().expect("aperture cache poisoned");
    g.entry(p).or_insert_with(|| Arc::new(ApertureBasis::new(p))).clone()
}

/// Shared, lazily built basis for a (width, aperture, aperture count, explicit
/// count) combination. Building costs a few tens of milliseconds.
pub fn width_basis(width: f64, aperture: f64, p: usize, explicit: usize) -> Arc<WidthBasis> {
    type Slot = Arc<OnceLock<Arc<WidthBasis>>>;
    static CACHE: OnceLock<Mutex<HashMap<Key, Slot>>> = OnceLock::new();
    let key = (width.to_bits(), aperture.to_bits(), p, explicit);
    let cell = {
        let map = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut g = map.lock().expect("basis cache poisoned");
        g.entry(key).or_default().clone()
    };
    cell.get_or_init(|| {
        let ab = aperture_cache(p);
        Arc::new(WidthBasis::build(width, aperture, &ab, explicit))
    })
    .clone()
}
