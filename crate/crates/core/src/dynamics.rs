//! Survival probability of states prepared inside the cavities.
//!
//! A(t) = ⟨ψ|e^{−iHt}|ψ⟩ = Σ_b |⟨ψ|b⟩|² e^{−iE_b t} + ∫ w(E) e^{−iEt} dE, with
//! bound states b (below the first threshold, or embedded BIC) split out and
//! the continuum weight w(E) = Σ_c |⟨ψ|E, c⟩|² summed over both incidence
//! sides and every open even channel. Scattering states are normalised to
//! δ(E − E'): unit incoming amplitude divided by sqrt(4πk).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cavity_energy, threshold, Geometry, Sheet};
use crate::modematch::{integrate_profile, transverse_mode, Incidence, ModalField, ModeMatcher, SegmentField, Side, SolverOptions};
use crate::poles::{Contour, PoleOptions, PoleRecord, PoleSolver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Plus,
    Minus,
    Single,
}

impl StateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StateKind::Plus => "plus",
            StateKind::Minus => "minus",
            StateKind::Single => "single",
        }
    }
}

/// Closed-cavity eigenfunction sin(mπ(x − x_l)/L) cos(nπy/W) (n odd) in each
/// cavity, combined with equal weight and sign ±, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub kind: StateKind,
    /// (longitudinal m, transverse n)
    pub mode: (u32, u32),
    pub geometry: Geometry,
    /// Amplitude per cavity, left to right.
    pub weights: Vec<f64>,
    /// ⟨ψ|ψ⟩ by quadrature.
    pub norm: f64,
}

/// State of the given kind for the default (2, 3) cavity mode.
pub fn initial_state(kind: StateKind, geometry: &Geometry) -> Result<InitialState> {
    initial_state_mode(kind, geometry, (2, 3))
}

pub fn initial_state_mode(kind: StateKind, geometry: &Geometry, mode: (u32, u32)) -> Result<InitialState> {
    geometry.validate()?;
    let (m, n) = mode;
    if m < 1 || n < 1 || n % 2 == 0 {
        return Err(Error::param("state needs m >= 1 and an odd transverse index n"));
    }
    let weights = match (kind, geometry.cavity_count) {
        (StateKind::Single, 1) => vec![1.0],
        (StateKind::Plus, 2) => vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()],
        (StateKind::Minus, 2) => vec![1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()],
        (k, c) => {
            return Err(Error::param(format!(
                "state {} needs {} cavities, geometry has {c}",
                k.as_str(),
                if k == StateKind::Single { 1 } else { 2 }
            )))
        }
    };
    let mut state = InitialState {
        kind,
        mode,
        geometry: *geometry,
        weights,
        norm: f64::NAN,
    };
    state.norm = state.numerical_norm();
    Ok(state)
}

impl InitialState {
    fn longitudinal(&self, s: f64) -> f64 {
        let l = self.geometry.cavity_length;
        (2.0 / l).sqrt() * (self.mode.0 as f64 * PI * s / l).sin()
    }

    fn transverse(&self, y: f64) -> f64 {
        let w = self.geometry.cavity_width;
        if y.abs() > 0.5 * w {
            return 0.0;
        }
        (2.0 / w).sqrt() * (self.mode.1 as f64 * PI * y / w).cos()
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let l = self.geometry.cavity_length;
        self.geometry
            .cavity_centers()
            .iter()
            .zip(&self.weights)
            .map(|(&c, &a)| {
                let s = x - (c - 0.5 * l);
                if (0.0..=l).contains(&s) {
                    a * self.longitudinal(s) * self.transverse(y)
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn numerical_norm(&self) -> f64 {
        let l = self.geometry.cavity_length;
        let w = self.geometry.cavity_width;
        let lon = integrate_profile(l, self.mode.0 as f64 * PI / l, |s| Complex64::new(self.longitudinal(s).powi(2), 0.0)).re;
        let tr = integrate_profile(w, self.mode.1 as f64 * PI / w, |y| Complex64::new(self.transverse(y - 0.5 * w).powi(2), 0.0)).re;
        self.weights.iter().map(|a| a * a).sum::<f64>() * lon * tr
    }

    fn cavity_overlap(&self, seg: &SegmentField) -> Result<Complex64> {
        let Some(i) = seg.modes.iter().position(|&m| m == self.mode.1) else {
            return Err(Error::param("cavity basis lacks the state's transverse mode"));
        };
        let p = &seg.profiles[i];
        let l = seg.segment.length;
        // the channel's transverse modes are ±cos(nπy/W) for odd n
        let sign = transverse_mode(seg.segment.width, self.mode.1, 0.0).signum();
        Ok(integrate_profile(l, p.k().norm().max(self.mode.0 as f64 * PI / l), |s| {
            p.value(s) * self.longitudinal(s)
        }) * sign)
    }

    /// ⟨ψ|field⟩.
    pub fn overlap(&self, field: &ModalField) -> Result<Complex64> {
        let cav = field.cavities();
        if cav.len() != self.weights.len() {
            return Err(Error::param("field and state disagree on the number of cavities"));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (seg, &a) in cav.iter().zip(&self.weights) {
            acc += self.cavity_overlap(seg)? * a;
        }
        Ok(acc)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscreteKind {
    /// Below the first threshold.
    Bound,
    /// Embedded in the continuum.
    Bic,
    /// Narrow resonance, weight already in the continuum.
    Resonance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWeight {
    pub energy: f64,
    pub weight: f64,
    pub kind: DiscreteKind,
    /// Decay rate parameter (0 for a true bound state).
    pub gamma: f64,
    /// Largest outgoing open-channel amplitude of the normalised state.
    pub leak: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub solver: SolverOptions,
    /// Upper end of the continuum grid.
    pub e_max: f64,
    /// Grid step well away from the resonance.
    pub base_step: f64,
    /// Grid step within `core_halfwidth` of the state's cavity energy.
    pub core_step: f64,
    pub core_halfwidth: f64,
    /// Points per γ around resolved resonances.
    pub points_per_gamma: f64,
    /// Growth factor of the step away from a resolved resonance.
    pub pole_ratio: f64,
    /// Half-width (Re) and depth (−Im) of the window searched for poles.
    pub pole_window: (f64, f64),
    /// Resonances narrower than this (γ) become discrete weights when they
    /// sit on the real axis, else they are refined on the grid.
    pub bic_gamma: f64,
    /// Depth of the strip below the real axis scanned for narrow poles over
    /// the whole grid. Broader poles are resolved by the base step.
    pub scan_depth: f64,
    /// Resonances narrower than this also get a weight from their
    /// near-bound field, used for the plateau estimate.
    pub narrow_gamma: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            e_max: 200.0,
            base_step: 0.05,
            core_step: 0.01,
            core_halfwidth: 4.0,
            points_per_gamma: 20.0,
            pole_ratio: 1.02,
            pole_window: (1.5, 1.6),
            bic_gamma: 1e-8,
            scan_depth: 0.1,
            narrow_gamma: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralWeight {
    pub state: StateKind,
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
    pub discrete: Vec<DiscreteWeight>,
    /// Narrow resonances and their near-bound weight. This weight is part
    /// of the continuum and does not enter `total`.
    pub resonances: Vec<DiscreteWeight>,
    /// Poles found in the resonance window and the narrow-pole scan.
    pub poles: Vec<PoleRecord>,
    /// ∫ w dE (trapezoid on the grid).
    pub continuum: f64,
    /// continuum + discrete.
    pub total: f64,
    /// Largest grid step over the intervals carrying at least 10⁻⁵ of the
    /// weight.
    pub resolved_step: f64,
}

impl SpectralWeight {
    pub fn discrete_total(&self) -> f64 {
        self.discrete.iter().map(|d| d.weight).sum()
    }

    /// 1 − total.
    pub fn deficit(&self) -> f64 {
        1.0 - self.total
    }

    /// Latest time the grid resolves, 2π/ΔE.
    pub fn horizon(&self) -> f64 {
        2.0 * PI / self.resolved_step
    }

    /// Widest pole in the window (γ).
    pub fn broadest_gamma(&self) -> Option<f64> {
        self.poles.iter().map(|p| p.gamma()).reduce(f64::max)
    }
}

fn lead_thresholds(e_max: f64) -> Vec<f64> {
    (0..)
        .map(|i| threshold(2 * i + 1))
        .take_while(|&t| t < e_max)
        .collect()
}

/// Deterministic energy grid over [π², e_max]: clustered above each channel
/// threshold, finer near the cavity level and geometric around narrow poles.
fn build_grid(e_core: f64, poles: &[PoleRecord], opts: &SpectralOptions) -> Vec<f64> {
    let ths = lead_thresholds(opts.e_max);
    let mut pts: Vec<f64> = Vec::new();
    let step_at = |e: f64| {
        if (e - e_core).abs() < opts.core_halfwidth {
            opts.core_step
        } else {
            opts.base_step
        }
    };
    for (i, &lo) in ths.iter().enumerate() {
        let hi = ths.get(i + 1).copied().unwrap_or(opts.e_max);
        // w ~ sqrt(E − threshold) just above each opening
        let h0 = step_at(lo);
        for j in 0..12 {
            let u = j as f64 / 12.0;
            pts.push(lo + h0 * 4.0 * u * u);
        }
        let mut e = lo + 4.0 * h0;
        while e < hi {
            pts.push(e);
            e += step_at(e);
        }
    }
    pts.push(opts.e_max);
    for p in poles {
        let g = p.gamma();
        if g < opts.bic_gamma || p.z.re <= threshold(1) {
            continue;
        }
        let mut h = g / opts.points_per_gamma;
        let mut off = 0.0;
        pts.push(p.z.re);
        while h < step_at(p.z.re) {
            off += h;
            pts.push(p.z.re + off);
            pts.push(p.z.re - off);
            h *= opts.pole_ratio;
        }
    }
    let first = threshold(1);
    pts.retain(|&e| e >= first && e <= opts.e_max);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * a.abs().max(1.0));
    pts
}

/// Continuum weight at one energy for each state.
fn continuum_weight(matcher: &ModeMatcher, states: &[&InitialState], e: f64) -> Result<Vec<f64>> {
    let open = matcher.open_channels(e);
    if open == 0 {
        return Ok(vec![0.0; states.len()]);
    }
    let lead = &matcher.mode_basis().segments[0].basis;
    let mut inc = Vec::with_capacity(2 * open);
    for side in [Side::Left, Side::Right] {
        for channel in 0..open {
            inc.push(Incidence { side, channel });
        }
    }
    let fields = matcher.solve_incidences(Complex64::new(e, 0.0), Sheet::First, &inc)?;
    let mut w = vec![0.0; states.len()];
    for (f, ic) in fields.iter().zip(&inc) {
        let k = (e - lead.threshold(ic.channel)).sqrt();
        if !(k > 0.0) {
            continue;
        }
        for (ws, st) in w.iter_mut().zip(states) {
            *ws += st.overlap(f)?.norm_sqr() / (4.0 * PI * k);
        }
    }
    Ok(w)
}

/// Weight of the (possibly degenerate) eigenspace at e in each state:
/// o†G⁻¹o with overlaps o and Gram matrix G of a basis of the null space.
fn discrete_weights(
    matcher: &ModeMatcher,
    states: &[&InitialState],
    e: f64,
    sheet: Sheet,
    dim: usize,
) -> Result<(Vec<f64>, f64)> {
    let z = Complex64::new(e, 0.0);
    let fields = if dim == 1 {
        vec![matcher.null_field(z, sheet)?.0]
    } else {
        matcher.null_space(z, sheet, dim)?
    };
    let gram = DMatrix::from_fn(dim, dim, |i, j| fields[i].confined_inner(&fields[j]));
    let leak = fields
        .iter()
        .map(|f| {
            let (norm, leak) = f.confined_norm_sqr();
            leak / norm.sqrt()
        })
        .fold(0.0, f64::max);
    let inv = gram
        .try_inverse()
        .ok_or(Error::Singular { z, residual: f64::NAN })?;
    let mut out = Vec::with_capacity(states.len());
    for st in states {
        let o = DVector::from_iterator(dim, fields.iter().map(|f| st.overlap(f)).collect::<Result<Vec<_>>>()?);
        out.push((o.adjoint() * &inv * &o)[(0, 0)].re);
    }
    Ok((out, leak))
}

/// Groups of numerically coincident real roots: (energy, multiplicity).
fn cluster_roots(roots: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut sorted = roots.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<(f64, usize)> = Vec::new();
    for e in sorted {
        match out.last_mut() {
            Some((e0, m)) if (e - *e0).abs() < tol => *m += 1,
            _ => out.push((e, 1)),
        }
    }
    out
}

/// Poles within `scan_depth` of the real axis over [π², e_max], each
/// threshold interval searched on the sheet that borders it. That sheet
/// agrees with the physical one above the axis, so the strips reach well up
/// into the zero-free half and their long edges stay clear of pole pairs.
fn narrow_poles(geometry: &Geometry, popts: PoleOptions, opts: &SpectralOptions) -> Result<Vec<PoleRecord>> {
    let ths = lead_thresholds(opts.e_max);
    let mut out = Vec::new();
    for (n, &lo) in ths.iter().enumerate() {
        let hi = ths.get(n + 1).copied().unwrap_or(opts.e_max).min(opts.e_max);
        let solver = SolverOptions {
            second_sheet_channels: n + 1,
            ..popts.solver
        };
        let ps = PoleSolver::new(geometry, PoleOptions { solver, ..popts })?;
        let (a, b) = (lo + 1e-3, hi - 1e-3);
        let strips = ((b - a) / 5.0).ceil().max(1.0) as usize;
        let w = (b - a) / strips as f64;
        for j in 0..strips {
            let c = Contour::new(a + j as f64 * w, a + (j + 1) as f64 * w, -opts.scan_depth, 0.5);
            out.extend(ps.locate_columns(&c)?);
        }
    }
    Ok(out)
}

/// Spectral weights of several states of one geometry, sharing the
/// scattering solutions.
pub fn spectral_weights(states: &[InitialState], opts: &SpectralOptions) -> Result<Vec<SpectralWeight>> {
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let geometry = &first.geometry;
    if states.iter().any(|s| s.geometry != *geometry || s.mode != first.mode) {
        return Err(Error::param("states must share geometry and cavity mode"));
    }
    if !(opts.e_max > threshold(1)) || !(opts.base_step > 0.0) || !(opts.core_step > 0.0) || !(opts.pole_ratio > 1.0) {
        return Err(Error::param("spectral grid needs e_max above the first threshold and positive steps"));
    }
    let solver = SolverOptions {
        explicit_energy: opts.solver.explicit_energy.max(1.2 * opts.e_max),
        ..opts.solver
    };
    let matcher = ModeMatcher::new(geometry, solver)?;
    let refs: Vec<&InitialState> = states.iter().collect();
    let e_core = cavity_energy(first.mode.0, first.mode.1, geometry)?;
    let popts = PoleOptions {
        solver,
        ..PoleOptions::default()
    };

    // resonances near the cavity level
    let (hw, depth) = opts.pole_window;
    let lo = (e_core - hw).max(threshold(1) + 1e-3);
    let window = Contour::new(lo, e_core + hw, -depth, 0.05);
    let mut poles = PoleSolver::new(geometry, popts)?.locate(&window)?;
    for p in narrow_poles(geometry, popts, opts)? {
        if !poles.iter().any(|q| (q.z - p.z).norm() < 1e-6) {
            poles.push(p);
        }
    }
    poles.sort_by(|a, b| a.z.re.total_cmp(&b.z.re));

    // bound states below the first threshold
    let mut discrete: Vec<Vec<DiscreteWeight>> = vec![Vec::new(); states.len()];
    let mut resonances: Vec<Vec<DiscreteWeight>> = vec![Vec::new(); states.len()];
    let lowest = (PI / geometry.cavity_width.max(geometry.lead_width)).powi(2);
    let bound = PoleSolver::on_sheet(geometry, popts, Sheet::First)?.locate_real(0.9 * lowest, threshold(1) - 1e-4, 0.3)?;
    let bound: Vec<f64> = bound.iter().map(|b| b.z.re).collect();
    for (e, dim) in cluster_roots(&bound, 1e-7) {
        let (ws, leak) = discrete_weights(&matcher, &refs, e, Sheet::First, dim)?;
        for (d, w) in discrete.iter_mut().zip(ws) {
            d.push(DiscreteWeight {
                energy: e,
                weight: w,
                kind: DiscreteKind::Bound,
                gamma: 0.0,
                leak,
            });
        }
    }
    // open channels agree on both sheets at real energy, so one matcher
    // serves every threshold interval here
    for p in poles.iter().filter(|p| p.gamma() < opts.narrow_gamma) {
        let bic = p.gamma() < opts.bic_gamma;
        let (ws, leak) = discrete_weights(&matcher, &refs, p.z.re, Sheet::Second, 1)?;
        let target = if bic { &mut discrete } else { &mut resonances };
        for (d, w) in target.iter_mut().zip(ws) {
            d.push(DiscreteWeight {
                energy: p.z.re,
                weight: w,
                kind: if bic { DiscreteKind::Bic } else { DiscreteKind::Resonance },
                gamma: if bic { 0.0 } else { p.gamma() },
                leak,
            });
        }
    }

    let mut grid = build_grid(e_core, &poles, opts);
    // the continuum side of an embedded bound state is smooth; keep grid
    // points off the exact energy, where the solve is singular
    for p in poles.iter().filter(|p| p.gamma() < opts.bic_gamma) {
        grid.retain(|&e| (e - p.z.re).abs() > 1e-7);
    }
    let rows: Vec<Result<Vec<f64>>> = grid.par_iter().map(|&e| continuum_weight(&matcher, &refs, e)).collect();
    let mut per_state: Vec<Vec<f64>> = vec![Vec::with_capacity(grid.len()); states.len()];
    for r in rows {
        for (col, v) in per_state.iter_mut().zip(r?) {
            col.push(v);
        }
    }

    Ok(states
        .iter()
        .zip(per_state)
        .zip(discrete)
        .zip(resonances)
        .map(|(((st, w), disc), res)| {
            let pieces: Vec<(f64, f64)> = grid
                .windows(2)
                .zip(w.windows(2))
                .map(|(e, v)| (e[1] - e[0], 0.5 * (e[1] - e[0]) * (v[0] + v[1])))
                .collect();
            let continuum: f64 = pieces.iter().map(|p| p.1).sum();
            let resolved_step = pieces
                .iter()
                .filter(|p| p.1 > 1e-5 * continuum)
                .map(|p| p.0)
                .fold(0.0, f64::max);
            let dsum: f64 = disc.iter().map(|d| d.weight).sum();
            SpectralWeight {
                state: st.kind,
                energies: grid.clone(),
                weights: w,
                discrete: disc,
                resonances: res,
                poles: poles.clone(),
                continuum,
                total: continuum + dsum,
                resolved_step,
            }
        })
        .collect())
}

/// Spectral weight of one state.
pub fn spectral_weight(state: &InitialState, opts: &SpectralOptions) -> Result<SpectralWeight> {
    Ok(spectral_weights(std::slice::from_ref(state), opts)?.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTrace {
    pub state: StateKind,
    pub times: Vec<f64>,
    pub amplitude: Vec<Complex64>,
    pub probability: Vec<f64>,
    /// Times beyond this are not resolved by the energy grid.
    pub horizon: f64,
    /// Captured spectral weight used to normalise A(0) to 1.
    pub normalisation: f64,
}

impl SurvivalTrace {
    pub fn trusted_len(&self) -> usize {
        self.times.iter().take_while(|&&t| t <= self.horizon).count()
    }
}

/// ∫₀¹ e^{−iθu} du and ∫₀¹ u e^{−iθu} du.
fn filon_weights(theta: f64) -> (Complex64, Complex64) {
    let i = Complex64::new(0.0, 1.0);
    if theta.abs() < 1e-3 {
        let t = Complex64::new(theta, 0.0);
        let t2 = t * t;
        let p0 = 1.0 - i * t / 2.0 - t2 / 6.0 + i * t2 * t / 24.0;
        let p1 = 0.5 - i * t / 3.0 - t2 / 8.0 + i * t2 * t / 30.0;
        return (p0, p1);
    }
    let e = (-i * theta).exp();
    let p0 = (1.0 - e) / (i * theta);
    let p1 = (-e + p0) / (i * theta);
    (p0, p1)
}

/// A(t) from the spectral weight, exact for w linear between grid points.
pub fn survival_amplitude(spectral: &SpectralWeight, t: f64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut acc: Complex64 = spectral
        .discrete
        .iter()
        .map(|d| d.weight * (-i * d.energy * t).exp())
        .sum();
    let e = &spectral.energies;
    let w = &spectral.weights;
    for j in 0..e.len().saturating_sub(1) {
        let h = e[j + 1] - e[j];
        let (p0, p1) = filon_weights(t * h);
        acc += (-i * e[j] * t).exp() * h * (w[j] * p0 + (w[j + 1] - w[j]) * p1);
    }
    acc
}

/// P(t) = |A(t)|² on the given times, normalised by the captured weight.
pub fn survival_probability(spectral: &SpectralWeight, times: &[f64]) -> Result<SurvivalTrace> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("times must be finite"));
    }
    if spectral.deficit().abs() > 1e-2 {
        return Err(Error::Incomplete(format!(
            "spectral weight captures {:.5} of the state; refine the grid or raise e_max",
            spectral.total
        )));
    }
    let norm = spectral.total;
    let amplitude: Vec<Complex64> = times.par_iter().map(|&t| survival_amplitude(spectral, t) / norm).collect();
    let probability = amplitude.iter().map(|a| a.norm_sqr()).collect();
    Ok(SurvivalTrace {
        state: spectral.state,
        times: times.to_vec(),
        amplitude,
        probability,
        horizon: spectral.horizon(),
        normalisation: norm,
    })
}

/// Evenly spaced times on [0, t_max].
pub fn time_grid(t_max: f64, count: usize) -> Vec<f64> {
    let n = count.max(2);
    (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    /// Mean of P over the last quarter of the trusted window.
    pub value: f64,
    /// (max − min)/max of P over the last half of the trusted window.
    pub variation: f64,
    /// Σ_b |⟨ψ|b⟩|⁴ over the discrete weights and the resonances that
    /// barely decay within the window (2γt < 0.1).
    pub predicted: f64,
}

/// Long-time level of P(t).
pub fn plateau_value(trace: &SurvivalTrace, spectral: &SpectralWeight) -> Result<Plateau> {
    let n = trace.trusted_len();
    if n < 8 {
        return Err(Error::param("trace has too few trusted samples for a plateau"));
    }
    let t_end = trace.times[n - 1];
    if let Some(g) = spectral.broadest_gamma() {
        if t_end < 5.0 / g {
            return Err(Error::param(format!(
                "trace ends at t = {t_end:.3}, before the transient (5/γ = {:.3})",
                5.0 / g
            )));
        }
    }
    let p = &trace.probability[..n];
    let quarter = &p[3 * n / 4..];
    let value = quarter.iter().sum::<f64>() / quarter.len() as f64;
    let half = &p[n / 2..];
    let max = half.iter().cloned().fold(f64::MIN, f64::max);
    let min = half.iter().cloned().fold(f64::MAX, f64::min);
    let norm = spectral.total;
    let predicted = spectral
        .discrete
        .iter()
        .chain(spectral.resonances.iter().filter(|r| 2.0 * r.gamma * t_end < 0.1))
        .map(|d| (d.weight / norm).powi(2))
        .sum();
    Ok(Plateau {
        value,
        variation: if max > 0.0 { (max - min) / max } else { 0.0 },
        predicted,
    })
}

/// Least-squares slope of −ln P(t) over [t0, t1].
pub fn decay_rate(trace: &SurvivalTrace, t0: f64, t1: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.probability)
        .filter(|(&t, &p)| t >= t0 && t <= t1 && p > 0.0)
        .map(|(&t, &p)| (t, p.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::param("decay fit window holds fewer than 3 samples"));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn states_are_normalised_and_orthogonal() {
        let g = Geometry::double(2.0, 2.0, 5.6);
        let p = initial_state(StateKind::Plus, &g).unwrap();
        let m = initial_state(StateKind::Minus, &g).unwrap();
        assert!((p.norm - 1.0).abs() < 1e-12);
        assert!((m.norm - 1.0).abs() < 1e-12);
        let dot: f64 = p.weights.iter().zip(&m.weights).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-15);
        let s = initial_state(StateKind::Single, &Geometry::single(2.0, 2.0)).unwrap();
        assert!((s.norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn state_vanishes_outside_cavities() {
        let g = Geometry::double(2.0, 2.0, 5.6);
        let p = initial_state(StateKind::Plus, &g).unwrap();
        for x in [-3.0, 1.5, 2.8, 4.0, 7.0] {
            assert_eq!(p.value(x, 0.1), 0.0);
        }
        assert!(p.value(0.5, 0.0).abs() > 0.1);
        // sin(2π(x − x_c)/L) cos(3πy/W) / √2 up to the sign fixed by x_l
        let (x, y) = (5.9, 0.3);
        let expect = (2.0 * PI * (x - 5.6) / 2.0).sin() * (3.0 * PI * y / 2.0).cos() / 2f64.sqrt();
        assert!((p.value(x, y) + expect).abs() < 1e-14);
    }

    #[test]
    fn mismatched_cavity_count_rejected() {
        assert!(initial_state(StateKind::Single, &Geometry::double(2.0, 2.0, 5.6)).is_err());
        assert!(initial_state(StateKind::Plus, &Geometry::single(2.0, 2.0)).is_err());
    }

    #[test]
    fn filon_matches_direct_sum() {
        for theta in [0.0, 1e-4, 0.3, 5.0] {
            let (p0, p1) = filon_weights(theta);
            let n = 20000;
            let (mut a, mut b) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for j in 0..n {
                let u = (j as f64 + 0.5) / n as f64;
                let e = Complex64::new(0.0, -theta * u).exp();
                a += e / n as f64;
                b += e * u / n as f64;
            }
            assert!((a - p0).norm() < 1e-8 && (b - p1).norm() < 1e-8, "{theta}");
        }
    }

    #[test]
    fn grid_is_sorted_and_refined_near_thresholds() {
        let opts = SpectralOptions::default();
        let g = build_grid(32.0, &[], &opts);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g[0], threshold(1));
        assert!(g[1] - g[0] < 2e-3);
        assert!(g.iter().any(|&e| e == threshold(3)));
    }
}
