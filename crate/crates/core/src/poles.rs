//! S-matrix poles on the second sheet: counting, location, symmetry labels,
//! tracking in the cavity distance and detection of bound states in the
//! continuum.
//!
//! Poles are zeros of det D(z), where D is the mode-matching system with the
//! open channel continued to the second sheet. The transmission amplitude
//! inherits them, except at a bound state in the continuum where the state
//! decouples and T stays finite.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Sheet};
use crate::modematch::{ModeMatcher, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
    Indeterminate,
    /// Single cavity: no mirror partner to compare with.
    None,
}

impl Symmetry {
    pub fn as_str(&self) -> &'static str {
        match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Antisymmetric => "antisymmetric",
            Symmetry::Indeterminate => "indeterminate",
            Symmetry::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleRecord {
    pub d: f64,
    pub z: Complex64,
    pub symmetry: Symmetry,
    pub trajectory_id: usize,
    /// σ_min/σ_max of the matching system at z.
    pub residual: f64,
    /// Snapped onto the real axis.
    pub bic: bool,
}

impl PoleRecord {
    pub fn energy(&self) -> f64 {
        self.z.re
    }
    pub fn gamma(&self) -> f64 {
        0.0 - self.z.im
    }
}

/// Axis-aligned rectangle in the complex energy plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub samples_per_edge: usize,
}

impl Contour {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Self {
            re_min,
            re_max,
            im_min,
            im_max,
            samples_per_edge: 48,
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re > self.re_min && z.re < self.re_max && z.im > self.im_min && z.im < self.im_max
    }

    fn grown(&self, f: f64) -> Self {
        let dr = f * (self.re_max - self.re_min);
        let di = f * (self.im_max - self.im_min);
        Self {
            re_min: self.re_min - dr,
            re_max: self.re_max + dr,
            im_min: self.im_min - di,
            im_max: self.im_max + di,
            ..*self
        }
    }

    fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))
    }

    fn corners(&self) -> [Complex64; 5] {
        let c = Complex64::new;
        [
            c(self.re_min, self.im_min),
            c(self.re_max, self.im_min),
            c(self.re_max, self.im_max),
            c(self.re_min, self.im_max),
            c(self.re_min, self.im_min),
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.re_max > self.re_min && self.im_max > self.im_min) || self.samples_per_edge < 4 {
            return Err(Error::param("contour must have positive extent and >= 4 samples per edge"));
        }
        Ok(())
    }

    /// Split at an off-centre point into four quadrants.
    fn quadrants(&self, frac: f64) -> [Contour; 4] {
        let xm = self.re_min + frac * (self.re_max - self.re_min);
        let ym = self.im_min + (1.0 - frac) * (self.im_max - self.im_min);
        let mk = |a, b, c, d| Contour {
            re_min: a,
            re_max: b,
            im_min: c,
            im_max: d,
            samples_per_edge: self.samples_per_edge,
        };
        [
            mk(self.re_min, xm, self.im_min, ym),
            mk(xm, self.re_max, self.im_min, ym),
            mk(self.re_min, xm, ym, self.im_max),
            mk(xm, self.re_max, ym, self.im_max),
        ]
    }
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Winding number of f around 0 along the contour, computed from a function
/// returning log f on any branch. Edges are refined where consecutive phase
/// changes exceed π/2.
pub fn winding_number_log<F>(mut log_f: F, contour: &Contour) -> Result<i64>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    contour.validate()?;
    let corners = contour.corners();
    let mut total = 0.0;
    for w in corners.windows(2) {
        let n = contour.samples_per_edge;
        let pts: Vec<Complex64> = (0..=n).map(|i| w[0] + (w[1] - w[0]) * (i as f64 / n as f64)).collect();
        let mut vals = Vec::with_capacity(pts.len());
        for &p in &pts {
            let v = log_f(p)?;
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Sampling(format!("function vanishes or is undefined on the contour at {p}")));
            }
            vals.push(v);
        }
        for i in 0..n {
            total += refine_phase(&mut log_f, pts[i], pts[i + 1], vals[i], vals[i + 1], 0)?;
        }
    }
    let wn = total / (2.0 * PI);
    let r = wn.round();
    if (wn - r).abs() > 0.1 {
        return Err(Error::Sampling(format!("winding number {wn:.3} is not close to an integer")));
    }
    Ok(r as i64)
}

fn refine_phase<F>(log_f: &mut F, a: Complex64, b: Complex64, fa: Complex64, fb: Complex64, depth: usize) -> Result<f64>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    let d = wrap(fb.im - fa.im);
    if d.abs() <= 0.5 * PI {
        return Ok(d);
    }
    if depth >= 14 {
        return Err(Error::Sampling(format!(
            "phase jump {d:.3} between {a} and {b} persists after refinement"
        )));
    }
    let m = 0.5 * (a + b);
    let fm = log_f(m)?;
    if !fm.re.is_finite() || !fm.im.is_finite() {
        return Err(Error::Sampling(format!("function vanishes on the contour at {m}")));
    }
    Ok(refine_phase(log_f, a, m, fa, fm, depth + 1)? + refine_phase(log_f, m, b, fm, fb, depth + 1)?)
}

/// (#zeros − #poles) of an analytic f inside the contour.
pub fn pole_count<F>(mut f: F, contour: &Contour) -> Result<i64>
where
    F: FnMut(Complex64) -> Complex64,
{
    winding_number_log(|z| Ok(f(z).ln()), contour)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleOptions {
    pub solver: SolverOptions,
    /// Newton stops when |Δz| falls below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Acceptance bound on σ_min/σ_max at a refined pole.
    pub residual_tol: f64,
    /// Poles closer than this to the real axis are snapped onto it.
    pub real_snap: f64,
    pub max_depth: usize,
    /// Cavity mode (longitudinal m, transverse n) whose coupling defines
    /// the |1⟩ ± |2⟩ labels.
    pub reference_mode: (u32, u32),
}

impl Default for PoleOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            newton_tol: 1e-10,
            max_newton: 60,
            residual_tol: 1e-8,
            real_snap: 1e-8,
            max_depth: 10,
            reference_mode: (2, 3),
        }
    }
}

/// Pole search for one geometry.
#[derive(Clone, Debug)]
pub struct PoleSolver {
    matcher: ModeMatcher,
    options: PoleOptions,
    sheet: Sheet,
}

impl PoleSolver {
    pub fn new(geometry: &Geometry, options: PoleOptions) -> Result<Self> {
        Self::on_sheet(geometry, options, Sheet::Second)
    }

    /// Zeros of the matching determinant on the given sheet. On the first
    /// sheet these are the bound states below the first threshold.
    pub fn on_sheet(geometry: &Geometry, options: PoleOptions, sheet: Sheet) -> Result<Self> {
        if geometry.cavity_count == 0 {
            return Err(Error::param("the uniform channel has no poles"));
        }
        Ok(Self {
            matcher: ModeMatcher::new(geometry, options.solver)?,
            options,
            sheet,
        })
    }

    pub fn matcher(&self) -> &ModeMatcher {
        &self.matcher
    }

    pub fn options(&self) -> &PoleOptions {
        &self.options
    }

    pub fn log_det(&self, z: Complex64) -> Result<Complex64> {
        self.matcher.log_det_value(z, self.sheet)
    }

    pub fn count(&self, contour: &Contour) -> Result<i64> {
        winding_number_log(|z| self.log_det(z), contour)
    }

    /// Newton iteration on det D from `z0`. Returns the root and the
    /// number of iterations.
    pub fn refine(&self, z0: Complex64) -> Result<(Complex64, usize)> {
        self.refine_deflated(z0, &[])
    }

    /// Newton iteration on det D / Π(z − r) over the known roots r, which
    /// separates clustered zeros.
    pub fn refine_deflated(&self, z0: Complex64, known: &[Complex64]) -> Result<(Complex64, usize)> {
        let mut z = z0;
        let mut last = f64::INFINITY;
        for it in 1..=self.options.max_newton {
            let ld = self.matcher.log_det(z, self.sheet)?;
            let Some(deriv) = ld.derivative else {
                return Ok((z, it));
            };
            let deflation: Complex64 = known.iter().map(|r| 1.0 / (z - r)).sum();
            let mut step = -1.0 / (deriv - deflation);
            let cap = 0.5;
            if step.norm() > cap {
                step *= cap / step.norm();
            }
            z += step;
            last = step.norm();
            if last < self.options.newton_tol {
                return Ok((z, it));
            }
        }
        Err(Error::NoConvergence {
            what: "pole Newton iteration".into(),
            iterations: self.options.max_newton,
            last: z,
            residual: last,
        })
    }

    /// σ_min/σ_max of the matching system.
    pub fn residual(&self, z: Complex64) -> f64 {
        let sys = self.matcher.assemble(z, self.sheet);
        let sv = sys.matrix.singular_values();
        let max = sv.max();
        let min = sv.min();
        min / max
    }

    /// Symmetry label and mirror overlap of the resonant field.
    ///
    /// The two-cavity channel is mirror symmetric, so every resonance has a
    /// definite parity P. The label refers to the combination |1⟩ ± |2⟩ of
    /// the reference mode in each cavity: P times the reference mode's own
    /// parity under reflection inside one cavity.
    pub fn classify(&self, z: Complex64) -> Result<(Symmetry, Complex64)> {
        if self.matcher.geometry().cavity_count != 2 {
            return Err(Error::param("symmetry classification needs two cavities"));
        }
        let (field, _) = self.matcher.null_field(z, self.sheet)?;
        let o = field.cavity_mirror_overlap()?;
        let internal = if self.options.reference_mode.0 % 2 == 1 { 1.0 } else { -1.0 };
        let label = if o.norm() < 0.5 {
            Symmetry::Indeterminate
        } else if o.re * internal > 0.0 {
            Symmetry::Symmetric
        } else {
            Symmetry::Antisymmetric
        };
        Ok((label, o))
    }

    fn record(&self, z: Complex64) -> Result<PoleRecord> {
        let mut z = z;
        let mut bic = false;
        if z.im.abs() < self.options.real_snap {
            z.im = 0.0;
            bic = true;
        }
        let symmetry = if self.matcher.geometry().cavity_count == 2 {
            self.classify(z)?.0
        } else {
            Symmetry::None
        };
        Ok(PoleRecord {
            d: self.matcher.geometry().distance,
            z,
            symmetry,
            trajectory_id: 0,
            residual: self.residual(z),
            bic,
        })
    }

    /// Refine from a guess and build a record.
    pub fn pole_near(&self, z0: Complex64) -> Result<PoleRecord> {
        let (z, _) = self.refine(z0)?;
        let rec = self.record(z)?;
        if rec.residual > self.options.residual_tol {
            return Err(Error::NoConvergence {
                what: "pole refinement (residual)".into(),
                iterations: self.options.max_newton,
                last: z,
                residual: rec.residual,
            });
        }
        Ok(rec)
    }

    /// All poles inside the contour, by recursive quadrant bisection and
    /// Newton refinement.
    pub fn locate(&self, contour: &Contour) -> Result<Vec<PoleRecord>> {
        let n = self.count(contour)?;
        if n < 0 {
            return Err(Error::Sampling(format!("negative zero count {n} inside contour")));
        }
        let mut roots = Vec::new();
        self.locate_rec(contour, n, 0, &mut roots)?;
        roots.sort_by(|a: &Complex64, b| a.re.total_cmp(&b.re));
        roots.iter().map(|&z| self.record(z)).collect()
    }

    /// n zeros in a box that does not split cleanly: successive Newton
    /// runs, each deflated by the zeros already found there. A zero that is
    /// repeated to rounding level is returned once per multiplicity.
    fn deflate_cluster(&self, c: &Contour, n: i64, out: &mut Vec<Complex64>) -> bool {
        let mut found: Vec<Complex64> = Vec::new();
        let box_ = c.grown(1e-6);
        for j in 0..n {
            let start = c.center() + Complex64::new(1e-3 * (c.re_max - c.re_min) * j as f64, 0.0);
            match self.refine_deflated(start, &found) {
                Ok((z, _)) if box_.contains(z) => found.push(z),
                _ => return false,
            }
        }
        out.extend(found);
        true
    }

    /// Zeros on the real interval [re_min, re_max], for a sheet where all
    /// zeros are real (bound states on the first sheet). Repeated zeros are
    /// returned once per multiplicity.
    pub fn locate_real(&self, re_min: f64, re_max: f64, half_height: f64) -> Result<Vec<PoleRecord>> {
        let c = Contour::new(re_min, re_max, -half_height, half_height);
        let roots = self.locate_columns(&c)?;
        roots
            .iter()
            .map(|r| self.record(Complex64::new(r.z.re, 0.0)))
            .collect()
    }

    /// Poles in a strip that is only ever cut vertically, so the long edges
    /// stay where the caller put them (away from the axis and from poles
    /// crowding it).
    pub fn locate_columns(&self, c: &Contour) -> Result<Vec<PoleRecord>> {
        let n = self.count(c)?;
        if n < 0 {
            return Err(Error::Sampling(format!("negative zero count {n} in a strip")));
        }
        let mut roots = Vec::new();
        self.locate_columns_rec(c, c, n, 0, &mut roots);
        // cuts that pass close to a pole pair can misplace a zero between
        // columns; the strip total is trusted and the rest found by deflation
        let inside = c.grown(1e-6);
        let mut attempt = 0;
        while (roots.len() as i64) < n && attempt < 16 {
            let fx = (attempt as f64 * 0.618_034).fract();
            let fy = [0.5, 0.8, 0.2, 0.65][attempt % 4];
            let start = Complex64::new(
                c.re_min + fx * (c.re_max - c.re_min),
                c.im_min + fy * (c.im_max - c.im_min),
            );
            if let Ok((z, _)) = self.refine_deflated(start, &roots) {
                if inside.contains(z) {
                    roots.push(z);
                }
            }
            attempt += 1;
        }
        if roots.len() as i64 != n {
            return Err(Error::Sampling(format!(
                "found {} of {n} zeros in [{}, {}] x [{}, {}]",
                roots.len(),
                c.re_min,
                c.re_max,
                c.im_min,
                c.im_max
            )));
        }
        roots.sort_by(|a: &Complex64, b| a.re.total_cmp(&b.re));
        roots.iter().map(|&z| self.record(z)).collect()
    }

    fn locate_columns_rec(&self, strip: &Contour, c: &Contour, n: i64, depth: usize, out: &mut Vec<Complex64>) {
        if n <= 0 {
            return;
        }
        let inside = strip.grown(1e-6);
        if n == 1 {
            let x = 0.5 * (c.re_min + c.re_max);
            for f in [0.5, 0.85, 0.15, 0.7, 0.3, 0.95, 0.05] {
                let start = Complex64::new(x, c.im_min + f * (c.im_max - c.im_min));
                if let Ok((z, _)) = self.refine(start) {
                    if inside.contains(z) && !out.iter().any(|w| (w - z).norm() < 1e-9) {
                        out.push(z);
                        return;
                    }
                }
                // a wide column has its centre as the natural start
                if c.re_max - c.re_min > 1e-3 * (c.im_max - c.im_min) {
                    break;
                }
            }
        }
        if depth < 3 * self.options.max_depth {
            for frac in [0.4937, 0.4613, 0.5311, 0.3817, 0.6172] {
                let cut = c.re_min + frac * (c.re_max - c.re_min);
                let halves = [
                    Contour { re_max: cut, ..*c },
                    Contour { re_min: cut, ..*c },
                ];
                let (Ok(a), Ok(b)) = (self.count(&halves[0]), self.count(&halves[1])) else {
                    continue;
                };
                if a + b != n || a < 0 || b < 0 {
                    continue;
                }
                self.locate_columns_rec(strip, &halves[0], a, depth + 1, out);
                self.locate_columns_rec(strip, &halves[1], b, depth + 1, out);
                return;
            }
        }
        self.deflate_cluster(c, n, out);
    }

    fn locate_rec(&self, c: &Contour, n: i64, depth: usize, out: &mut Vec<Complex64>) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        if n == 1 {
            if let Ok((z, _)) = self.refine(c.center()) {
                if c.grown(1e-6).contains(z) && !out.iter().any(|w| (w - z).norm() < 1e-7) {
                    out.push(z);
                    return Ok(());
                }
            }
        }
        if depth >= self.options.max_depth {
            if self.deflate_cluster(c, n, out) {
                return Ok(());
            }
            return Err(Error::NoConvergence {
                what: format!(
                    "pole location in [{:.6}, {:.6}] x [{:.6}, {:.6}]",
                    c.re_min, c.re_max, c.im_min, c.im_max
                ),
                iterations: depth,
                last: c.center(),
                residual: f64::NAN,
            });
        }
        for frac in [0.4937, 0.4613, 0.5311] {
            let quads = c.quadrants(frac);
            let counts: Result<Vec<i64>> = quads.iter().map(|q| self.count(q)).collect();
            let Ok(counts) = counts else { continue };
            if counts.iter().sum::<i64>() != n || counts.iter().any(|&k| k < 0) {
                continue;
            }
            for (q, &k) in quads.iter().zip(&counts) {
                self.locate_rec(q, k, depth + 1, out)?;
            }
            return Ok(());
        }
        if self.deflate_cluster(c, n, out) {
            return Ok(());
        }
        Err(Error::Sampling(format!(
            "could not split contour around {} consistently",
            c.center()
        )))
    }
}

/// Poles of the geometry inside the region.
pub fn locate_poles(geometry: &Geometry, region: &Contour, options: PoleOptions) -> Result<Vec<PoleRecord>> {
    PoleSolver::new(geometry, options)?.locate(region)
}

/// Symmetry label of the resonance at (or near) z.
pub fn classify_symmetry(geometry: &Geometry, z: Complex64, options: PoleOptions) -> Result<Symmetry> {
    if geometry.cavity_count != 2 {
        return Err(Error::param("symmetry classification needs two cavities"));
    }
    Ok(PoleSolver::new(geometry, options)?.classify(z)?.0)
}

/// Complex zero of the transmission amplitude near `guess` (secant iteration).
pub fn transmission_zero(matcher: &ModeMatcher, guess: Complex64) -> Result<Complex64> {
    let t = |z: Complex64| matcher.transmission(z, Sheet::First);
    let mut z0 = guess;
    let mut z1 = guess + Complex64::new(1e-3, 0.0);
    let mut f0 = t(z0)?;
    let mut f1 = t(z1)?;
    for it in 0..60 {
        let den = f1 - f0;
        if den.norm() == 0.0 {
            break;
        }
        let mut step = -f1 * (z1 - z0) / den;
        if step.norm() > 0.2 {
            step *= 0.2 / step.norm();
        }
        let z2 = z1 + step;
        if step.norm() < 1e-12 * z1.norm().max(1.0) {
            return Ok(z2);
        }
        z0 = z1;
        f0 = f1;
        z1 = z2;
        f1 = match t(z1) {
            Ok(v) => v,
            // landed on a bound state: nudge off it
            Err(Error::Singular { .. }) => t(z1 + Complex64::new(1e-9, 0.0))?,
            Err(e) => return Err(e),
        };
        if f1.norm() == 0.0 {
            return Ok(z1);
        }
        let _ = it;
    }
    Err(Error::NoConvergence {
        what: "transmission zero".into(),
        iterations: 60,
        last: z1,
        residual: f1.norm(),
    })
}

/// One tracked pole as a function of d.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub symmetry: Symmetry,
    pub points: Vec<PoleRecord>,
}

impl Trajectory {
    pub fn labels_constant(&self) -> bool {
        self.points.iter().all(|p| p.symmetry == self.symmetry)
    }

    /// Minimum of γ over the samples with its index.
    pub fn min_gamma(&self) -> (usize, f64) {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.gamma()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::NAN))
    }

    /// Signed area enclosed by the path z(d), closed by the chord from the
    /// last point to the first. Positive for counter-clockwise motion.
    pub fn signed_area(&self) -> f64 {
        let p = &self.points;
        let n = p.len();
        (0..n)
            .map(|i| {
                let a = p[i].z;
                let b = p[(i + 1) % n].z;
                a.re * b.im - b.re * a.im
            })
            .sum::<f64>()
            * 0.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    pub poles: PoleOptions,
    /// Give up after this many consecutive step halvings.
    pub max_halvings: usize,
    /// Predicted and refined positions must agree within this fraction of
    /// the smallest distance between tracked poles.
    pub match_fraction: f64,
    /// Classify every sample (otherwise only the first one).
    pub classify_each: bool,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            poles: PoleOptions::default(),
            max_halvings: 6,
            match_fraction: 0.3,
            classify_each: true,
        }
    }
}

fn solver_at(base: &Geometry, d: f64, opts: &PoleOptions) -> Result<PoleSolver> {
    PoleSolver::new(&base.with_distance(d), *opts)
}

/// Follow the poles found in `window` at `d_from` until `d_to`.
pub fn track_poles(
    geometry_base: &Geometry,
    d_from: f64,
    d_to: f64,
    d_step: f64,
    window: &Contour,
    options: TrackOptions,
) -> Result<Vec<Trajectory>> {
    if geometry_base.cavity_count != 2 {
        return Err(Error::param("pole tracking in d needs two cavities"));
    }
    let start = solver_at(geometry_base, d_from, &options.poles)?.locate(window)?;
    track_from(geometry_base, d_from, d_to, d_step, start, options)
}

/// Continue the given poles (located at `d_from`) until `d_to`.
pub fn track_from(
    geometry_base: &Geometry,
    d_from: f64,
    d_to: f64,
    d_step: f64,
    start: Vec<PoleRecord>,
    options: TrackOptions,
) -> Result<Vec<Trajectory>> {
    if !(d_step > 0.0) {
        return Err(Error::param("d_step must be positive"));
    }
    let mut traj: Vec<Trajectory> = start
        .into_iter()
        .enumerate()
        .map(|(id, mut p)| {
            p.trajectory_id = id;
            Trajectory {
                id,
                symmetry: p.symmetry,
                points: vec![p],
            }
        })
        .collect();
    if traj.is_empty() || d_from == d_to {
        return Ok(traj);
    }
    let dir = (d_to - d_from).signum();
    let mut d = d_from;
    let mut h = d_step;
    let mut halvings = 0;
    while (d_to - d) * dir > 1e-12 {
        let step = h.min((d_to - d).abs());
        let d_next = d + dir * step;
        let solver = solver_at(geometry_base, d_next, &options.poles)?;
        let preds: Vec<Complex64> = traj
            .iter()
            .map(|t| {
                let n = t.points.len();
                let z1 = t.points[n - 1].z;
                if n >= 2 {
                    let p0 = &t.points[n - 2];
                    let dd = t.points[n - 1].d - p0.d;
                    if dd.abs() > 0.0 {
                        return z1 + (z1 - p0.z) * ((d_next - t.points[n - 1].d) / dd);
                    }
                }
                z1
            })
            .collect();
        let min_sep = pairwise_min(&traj.iter().map(|t| t.points.last().expect("non-empty").z).collect::<Vec<_>>());
        let refined: Vec<Result<Complex64>> = preds.par_iter().map(|&z| solver.refine(z).map(|r| r.0)).collect();
        let mut ok = true;
        let mut zs = Vec::with_capacity(refined.len());
        for (r, (&pred, t)) in refined.into_iter().zip(preds.iter().zip(&traj)) {
            match r {
                Ok(z) => {
                    let last = t.points.last().expect("non-empty").z;
                    let moved = (z - pred).norm();
                    let travel = (pred - last).norm();
                    let tol = (options.match_fraction * min_sep).max(2.0 * travel).clamp(1e-9, 0.5);
                    if moved > tol {
                        ok = false;
                    }
                    zs.push(z);
                }
                Err(_) => ok = false,
            }
        }
        if ok && pairwise_min(&zs) < 1e-6 {
            ok = false;
        }
        if !ok {
            halvings += 1;
            if halvings > options.max_halvings {
                return Err(Error::AmbiguousHandoff { d, halvings: halvings - 1 });
            }
            h *= 0.5;
            continue;
        }
        let records: Result<Vec<PoleRecord>> = zs
            .par_iter()
            .zip(traj.par_iter())
            .map(|(&z, t)| {
                let mut rec = if options.classify_each {
                    solver.record(z)?
                } else {
                    let mut zz = z;
                    let bic = zz.im.abs() < options.poles.real_snap;
                    if bic {
                        zz.im = 0.0;
                    }
                    PoleRecord {
                        d: d_next,
                        z: zz,
                        symmetry: t.symmetry,
                        trajectory_id: t.id,
                        residual: f64::NAN,
                        bic,
                    }
                };
                rec.trajectory_id = t.id;
                Ok(rec)
            })
            .collect();
        for (t, r) in traj.iter_mut().zip(records?) {
            t.points.push(r);
        }
        d = d_next;
        halvings = 0;
        h = (2.0 * h).min(d_step);
    }
    Ok(traj)
}

fn pairwise_min(z: &[Complex64]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            m = m.min((z[i] - z[j]).norm());
        }
    }
    m
}

/// A bound state in the continuum located in (E, d).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicRecord {
    pub d: f64,
    pub energy: f64,
    pub symmetry: Symmetry,
    /// Pole re-located at d on the second sheet (before snapping).
    pub pole: Complex64,
    /// Zero of the transmission amplitude nearest the bound state.
    pub transmission_zero: Complex64,
    pub residual: f64,
}

impl BicRecord {
    pub fn gamma(&self) -> f64 {
        -self.pole.im
    }
}

/// Distance at which the pole near `z0` (located at `d0`) touches the real
/// axis. γ(d) has a double zero there, so Newton runs on dγ/dd with the pole
/// re-converged at each sample. Returns (d, pole at d).
pub fn refine_bic(geometry_base: &Geometry, z0: Complex64, d0: f64, options: &PoleOptions) -> Result<(f64, Complex64)> {
    let pole_at = |d: f64, z: Complex64| -> Result<Complex64> { Ok(solver_at(geometry_base, d, options)?.refine(z)?.0) };
    let mut d = d0;
    let mut z = pole_at(d, z0)?;
    let h = 2e-4;
    for _ in 0..30 {
        let zp = pole_at(d + h, z)?;
        let zm = pole_at(d - h, z)?;
        let g1 = (zm.im - zp.im) / (2.0 * h);
        let g2 = -(zp.im - 2.0 * z.im + zm.im) / (h * h);
        if !(g2 > 0.0) {
            return Err(Error::NoBic { d, gamma: -z.im });
        }
        let step = (-g1 / g2).clamp(-0.05, 0.05);
        let pred = z + (zp - zm) / (2.0 * h) * step;
        d += step;
        z = pole_at(d, pred)?;
        if step.abs() < 1e-10 {
            break;
        }
    }
    if -z.im > 1e-6 {
        return Err(Error::NoBic { d, gamma: -z.im });
    }
    Ok((d, z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicSearch {
    pub track: TrackOptions,
    pub d_step: f64,
    /// Energy window searched for poles; centred on the resonance by default.
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    /// Length of the d-intervals after which poles are re-located.
    pub relocate_every: f64,
    /// Trajectory minima of γ below this are refined.
    pub gamma_candidate: f64,
}

impl Default for BicSearch {
    fn default() -> Self {
        let e = 3.25 * PI * PI;
        Self {
            track: TrackOptions {
                classify_each: false,
                ..TrackOptions::default()
            },
            d_step: 0.01,
            re_min: e - 1.5,
            re_max: e + 1.5,
            im_min: -1.6,
            relocate_every: 0.7,
            gamma_candidate: 0.2,
        }
    }
}

/// Bound states in the continuum for d in [d_from, d_to].
pub fn find_bic(geometry_base: &Geometry, d_from: f64, d_to: f64, search: &BicSearch) -> Result<Vec<BicRecord>> {
    if geometry_base.cavity_count != 2 {
        return Err(Error::param("bound states in the continuum need two cavities"));
    }
    if !(d_to >= d_from) {
        return Err(Error::param("empty distance range"));
    }
    let window = Contour::new(search.re_min, search.re_max, search.im_min, 0.05);
    let mut chunks = Vec::new();
    let mut a = d_from;
    while a < d_to - 1e-12 {
        let b = (a + search.relocate_every).min(d_to);
        chunks.push((a, b));
        a = b;
    }
    if chunks.is_empty() {
        chunks.push((d_from, d_to));
    }
    let opts = search.track;
    let popts = opts.poles;
    let mut candidates: Vec<(Complex64, f64)> = Vec::new();
    let mut nearest = (f64::NAN, f64::INFINITY);
    for &(a, b) in &chunks {
        // poles entering the window mid-chunk are only seen from the far end
        let mut traj = track_poles(geometry_base, a, b, search.d_step, &window, opts)?;
        traj.extend(track_poles(geometry_base, b, a, search.d_step, &window, opts)?);
        for t in &traj {
            let pts = &t.points;
            for i in 0..pts.len() {
                let g = pts[i].gamma();
                if g < nearest.1 {
                    nearest = (pts[i].d, g);
                }
                let left = if i > 0 { pts[i - 1].gamma() } else { f64::INFINITY };
                let right = if i + 1 < pts.len() { pts[i + 1].gamma() } else { f64::INFINITY };
                if g <= left && g <= right && g < search.gamma_candidate && pts[i].z.re > search.re_min && pts[i].z.re < search.re_max {
                    candidates.push((pts[i].z, pts[i].d));
                }
            }
        }
    }
    let refined: Vec<Result<(f64, Complex64)>> = candidates
        .par_iter()
        .map(|&(z, d)| refine_bic(geometry_base, z, d, &popts))
        .collect();
    let mut found: Vec<(f64, Complex64)> = Vec::new();
    for (d, z) in refined.into_iter().flatten() {
        if d < d_from - 1e-9 || d > d_to + 1e-9 {
            continue;
        }
        if !found.iter().any(|&(d2, z2)| (z - z2).norm() < 1e-6 && (d - d2).abs() < 1e-6) {
            found.push((d, z));
        }
    }
    if found.is_empty() {
        return Err(Error::NoBic {
            d: nearest.0,
            gamma: nearest.1,
        });
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    found
        .par_iter()
        .map(|&(d, z)| {
            let e = z.re;
            let solver = solver_at(geometry_base, d, &popts)?;
            let (symmetry, _) = solver.classify(Complex64::new(e, 0.0))?;
            let tz = transmission_zero(solver.matcher(), Complex64::new(e + 2e-3, 0.0))?;
            Ok(BicRecord {
                d,
                energy: e,
                symmetry,
                pole: z,
                transmission_zero: tz,
                residual: solver.residual(Complex64::new(e, 0.0)),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn winding_of_simple_functions() {
        let box_ = Contour::new(-1.0, 1.0, -1.0, 1.0);
        let z0 = c(0.3, -0.2);
        assert_eq!(pole_count(|z| z - z0, &box_).unwrap(), 1);
        assert_eq!(pole_count(|z| z - c(3.0, 0.0), &box_).unwrap(), 0);
        assert_eq!(pole_count(|z| (z - z0) * (z - z0), &box_).unwrap(), 2);
        assert_eq!(pole_count(|z| 1.0 / (z - z0), &box_).unwrap(), -1);
        // high winding forces refinement
        assert_eq!(pole_count(|z| z.powu(9), &box_).unwrap(), 9);
    }

    #[test]
    fn winding_detects_zero_on_contour() {
        let box_ = Contour::new(-1.0, 1.0, -1.0, 1.0);
        assert!(pole_count(|z| z - c(1.0, 0.0), &box_).is_err());
    }

    #[test]
    fn phase_wrap() {
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(-0.5) + 0.5).abs() < 1e-15);
    }
}
