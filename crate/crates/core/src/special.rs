//! Gauss rules, Bessel functions of large argument and the edge-weighted
//! aperture basis used by the mode-matching solver.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

/// Nodes and weights of a Gauss rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Off-diagonal of the Jacobi matrix for the weight (1-t²)^(λ-1/2), n ≥ 1.
fn gegenbauer_offdiag(n: usize, lambda: f64) -> f64 {
    let n = n as f64;
    (n * (n + 2.0 * lambda - 1.0) / (4.0 * (n + lambda) * (n + lambda - 1.0))).sqrt()
}

fn gegenbauer_mass(lambda: f64) -> f64 {
    (0.5 * PI.ln() + ln_gamma(lambda + 0.5) - ln_gamma(lambda + 1.0)).exp()
}

impl GaussRule {
    /// Golub-Welsch rule for the weight (1-t²)^(λ-1/2).
    pub fn gegenbauer(n: usize, lambda: f64) -> Self {
        assert!(n >= 1 && lambda > -0.5);
        let mut j = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            let b = gegenbauer_offdiag(i, lambda);
            j[(i, i - 1)] = b;
            j[(i - 1, i)] = b;
        }
        let eig = SymmetricEigen::new(j);
        let mu0 = gegenbauer_mass(lambda);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn legendre(n: usize) -> Self {
        Self::gegenbauer(n, 0.5)
    }

    /// Integrate over [a, b] (only meaningful for the Legendre rule).
    pub fn integrate<T, F>(&self, a: f64, b: f64, mut f: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        F: FnMut(f64) -> T,
    {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        let mut acc = T::default();
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(c + h * t) * (w * h);
        }
        acc
    }
}

/// Orthonormal polynomials for the weight (1-t²)^(λ-1/2), degrees 0..count.
pub fn orthonormal_gegenbauer(t: f64, lambda: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let p0 = 1.0 / gegenbauer_mass(lambda).sqrt();
    out.push(p0);
    if count == 1 {
        return out;
    }
    out.push(t * p0 / gegenbauer_offdiag(1, lambda));
    for n in 1..count - 1 {
        let next = (t * out[n] - gegenbauer_offdiag(n, lambda) * out[n - 1])
            / gegenbauer_offdiag(n + 1, lambda);
        out.push(next);
    }
    out
}

/// J_ν(x) and J_{ν+1}(x) from the Hankel expansion. Accurate to roughly
/// machine precision for x ≥ 30 and small ν.
pub fn bessel_j_pair_large(nu: f64, x: f64) -> (f64, f64) {
    (hankel_j(nu, x), hankel_j(nu + 1.0, x))
}

fn hankel_j(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        a *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * x);
        if a.abs() > last {
            break;
        }
        last = a.abs();
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// J_{ν}, J_{ν+1}, …, J_{ν+count-1} at large x by upward recurrence
/// (stable while the order stays below x).
pub fn bessel_j_sequence_large(nu: f64, x: f64, count: usize, out: &mut Vec<f64>) {
    out.clear();
    let (j0, j1) = bessel_j_pair_large(nu, x);
    out.push(j0);
    if count > 1 {
        out.push(j1);
    }
    for i in 2..count {
        let order = nu + (i - 1) as f64;
        let next = 2.0 * order / x * out[i - 1] - out[i - 2];
        out.push(next);
    }
}

/// Even aperture functions on t ∈ [-1, 1]:
/// g_p(t) = (1-t²)^(2/3) · q_{2p}(t), with q_n orthonormal for that weight.
/// The 2/3 exponent matches the field behaviour at a right-angle corner.
#[derive(Clone, Debug)]
pub struct ApertureBasis {
    count: usize,
    rule: GaussRule,
    /// q_{2p}(t_i) · w_i, row p.
    weighted: DMatrix<f64>,
    /// |I_p(ω)| ω^λ / |J_{2p+λ}(ω)|.
    bessel_const: Vec<f64>,
    cutoff: f64,
}

pub const EDGE_LAMBDA: f64 = 7.0 / 6.0;

impl ApertureBasis {
    pub fn new(count: usize) -> Self {
        assert!(count >= 1);
        let lambda = EDGE_LAMBDA;
        let nu_max = lambda + 2.0 * (count as f64 - 1.0);
        let cutoff = (nu_max + 10.0).max(40.0);
        let nq = cutoff.ceil() as usize + 2 * count + 40;
        let rule = GaussRule::gegenbauer(nq, lambda);
        let mut weighted = DMatrix::zeros(count, nq);
        for (i, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let q = orthonormal_gegenbauer(t, lambda, 2 * count);
            for p in 0..count {
                weighted[(p, i)] = q[2 * p] * w;
            }
        }
        let bessel_const = (0..count)
            .map(|p| {
                let n = (2 * p) as f64;
                let lh = PI.ln() + (1.0 - 2.0 * lambda) * 2f64.ln() + ln_gamma(n + 2.0 * lambda)
                    - ln_gamma(n + 1.0)
                    - (n + lambda).ln()
                    - 2.0 * ln_gamma(lambda);
                let lc = PI.ln() + (1.0 - lambda) * 2f64.ln() + ln_gamma(n + 2.0 * lambda)
                    - ln_gamma(n + 1.0)
                    - ln_gamma(lambda);
                (lc - 0.5 * lh).exp()
            })
            .collect();
        Self {
            count,
            rule,
            weighted,
            bessel_const,
            cutoff,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Frequency above which the Bessel form is used.
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// g_p(t) for all p.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if t.abs() >= 1.0 {
            return vec![0.0; self.count];
        }
        let w = (1.0 - t * t).powf(EDGE_LAMBDA - 0.5);
        let q = orthonormal_gegenbauer(t, EDGE_LAMBDA, 2 * self.count);
        (0..self.count).map(|p| w * q[2 * p]).collect()
    }

    /// I_p(ω) = ∫ cos(ωt) g_p(t) dt for all p, written into `out`.
    pub fn cosine_transform(&self, omega: f64, out: &mut [f64]) {
        let omega = omega.abs();
        if omega < self.cutoff {
            self.cosine_transform_quadrature(omega, out);
        } else {
            let mut js = Vec::with_capacity(2 * self.count);
            self.cosine_transform_bessel(omega, out, &mut js);
        }
    }

    pub(crate) fn cosine_transform_quadrature(&self, omega: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &t) in self.rule.nodes.iter().enumerate() {
            let c = (omega * t).cos();
            for (p, v) in out.iter_mut().enumerate() {
                *v += self.weighted[(p, i)] * c;
            }
        }
    }

    pub(crate) fn cosine_transform_bessel(&self, omega: f64, out: &mut [f64], js: &mut Vec<f64>) {
        bessel_j_sequence_large(EDGE_LAMBDA, omega, 2 * self.count - 1, js);
        let scale = omega.powf(-EDGE_LAMBDA);
        for (p, v) in out.iter_mut().enumerate() {
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            *v = sign * self.bessel_const[p] * js[2 * p] * scale;
        }
    }

    pub(crate) fn bessel_const(&self) -> &[f64] {
        &self.bessel_const
    }
}
