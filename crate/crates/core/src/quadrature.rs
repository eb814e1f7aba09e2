//! Adaptive Gauss-Kronrod (7, 15) quadrature for complex integrands, on real
//! intervals and along straight segments in the complex plane.

use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub intervals: usize,
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[i];
        if i % 2 == 1 {
            gauss += s * WG[i / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).norm())
}

/// Adaptive integral of f over [a, b], split first at the given breakpoints.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breaks: &[f64], opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(f64) -> Complex64,
{
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(|x, y| x.total_cmp(y));
    edges.extend(inner);
    edges.push(b);

    // (a, b, value, error)
    let mut pieces: Vec<(f64, f64, Complex64, f64)> = edges
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();

    loop {
        let total: Complex64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * total.norm());
        if err <= tol {
            return Ok(QuadResult {
                value: total,
                error: err,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= opts.max_intervals {
            return Err(Error::NoConvergence {
                what: "adaptive quadrature".into(),
                iterations: pieces.len(),
                last: total,
                residual: err,
            });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::NoConvergence {
                what: "adaptive quadrature (interval underflow)".into(),
                iterations: pieces.len(),
                last: total,
                residual: err,
            });
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// ∫ f(k) dk along the straight segment from `from` to `to` in the complex plane.
pub fn integrate_segment<F>(mut f: F, from: Complex64, to: Complex64, opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(Complex64) -> Complex64,
{
    let dir = to - from;
    integrate(|t| f(from + dir * t) * dir, 0.0, 1.0, &[], opts)
}

/// ∫ f along a polyline through the given vertices.
pub fn integrate_path<F>(mut f: F, vertices: &[Complex64], opts: QuadOptions) -> Result<QuadResult>
where
    F: FnMut(Complex64) -> Complex64,
{
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut intervals = 0;
    for w in vertices.windows(2) {
        let r = integrate_segment(&mut f, w[0], w[1], opts)?;
        value += r.value;
        error += r.error;
        intervals += r.intervals;
    }
    Ok(QuadResult {
        value,
        error,
        intervals,
    })
}
