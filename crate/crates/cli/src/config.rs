//! Run configuration. One TOML document with geometry, physics, solver and
//! task blocks; command-line flags are applied on top.

use std::f64::consts::PI;
use std::path::PathBuf;

use bicwg_core::geometry::cavity_energy;
use bicwg_core::modematch::SolverOptions;
use bicwg_core::poles::PoleOptions;
use bicwg_core::{Geometry, PhysicalParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Electron volts, through the physics block.
    Ev,
    /// ħ²/2m* = 1 and lead width 1.
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; not part of the config hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    pub solver: SolverConfig,
    pub task: TaskConfig,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub cavity_width: f64,
    pub cavity_length: f64,
    pub cavity_count: usize,
    /// Explicit distances, used when no range is set.
    pub d: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_max: Option<f64>,
    pub d_step: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            cavity_width: 2.0,
            cavity_length: 2.0,
            cavity_count: 2,
            d: vec![5.6],
            d_min: None,
            d_max: None,
            d_step: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub effective_mass_ratio: f64,
    pub lead_width_angstrom: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        let p = PhysicalParams::default();
        Self {
            effective_mass_ratio: p.effective_mass_ratio,
            lead_width_angstrom: p.lead_width_angstrom,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub n_modes: usize,
    pub newton_tol: f64,
    pub residual_tol: f64,
    /// Poles closer than this to the real axis count as bound.
    pub real_snap: f64,
    /// Effective-model momentum cutoff in units of the resonant wavenumber.
    pub k_cutoff_factor: f64,
    /// Top of the energy grid for spectral weights (internal units).
    pub e_max: f64,
    pub base_step: f64,
    pub core_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PoleOptions::default();
        Self {
            n_modes: SolverOptions::default().n_modes,
            newton_tol: p.newton_tol,
            residual_tol: p.residual_tol,
            real_snap: p.real_snap,
            k_cutoff_factor: 10.0,
            e_max: 200.0,
            base_step: 0.05,
            core_step: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// Units of every energy in the task block.
    pub units: Units,
    pub transmission: TransmissionTask,
    pub polemap: PolemapTask,
    pub poletrack: WindowTask,
    pub bic: WindowTask,
    pub effective: EffectiveTask,
    pub survival: SurvivalTask,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            units: Units::Ev,
            transmission: TransmissionTask::default(),
            polemap: PolemapTask::default(),
            poletrack: WindowTask::default(),
            bic: WindowTask::default(),
            effective: EffectiveTask::default(),
            survival: SurvivalTask::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmissionTask {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emax: Option<f64>,
    pub points: usize,
}

impl Default for TransmissionTask {
    fn default() -> Self {
        Self {
            emin: None,
            emax: None,
            points: 501,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolemapTask {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_max: Option<f64>,
    pub re_points: usize,
    pub im_points: usize,
}

impl Default for PolemapTask {
    fn default() -> Self {
        Self {
            emin: None,
            emax: None,
            im_min: None,
            im_max: None,
            re_points: 121,
            im_points: 41,
        }
    }
}

impl PolemapTask {
    pub fn window(&self) -> WindowTask {
        WindowTask {
            emin: self.emin,
            emax: self.emax,
            im_min: self.im_min,
            im_max: self.im_max,
        }
    }
}

/// Complex-energy window; unset edges default to the resonance window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowTask {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_max: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Keep the closed-cavity level and fit the coupling to the width.
    BareLevel,
    /// Fit level and coupling to the full pole.
    FitPole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveTask {
    /// JSON file holding the single-cavity pole; computed when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate_from: Option<PathBuf>,
    pub calibration: CalibrationMode,
    /// Explicit constant coupling (internal units); skips calibration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    /// Inclusive range of n, "a..b" or a single value.
    pub predict_bic: String,
}

impl Default for EffectiveTask {
    fn default() -> Self {
        Self {
            calibrate_from: None,
            calibration: CalibrationMode::BareLevel,
            v0: None,
            predict_bic: "3..6".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StateChoice {
    Plus,
    Minus,
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalTask {
    pub state: StateChoice,
    /// Internal time units; defaults to the resolved horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    pub samples: usize,
}

impl Default for SurvivalTask {
    fn default() -> Self {
        Self {
            state: StateChoice::Plus,
            t_max: None,
            samples: 2001,
        }
    }
}

/// Resolved complex window in internal units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.geometry;
        positive("cavity_width", g.cavity_width)?;
        positive("cavity_length", g.cavity_length)?;
        positive("d_step", g.d_step)?;
        if g.cavity_count > 2 {
            return Err(CliError::Config("cavity_count must be 0, 1 or 2".into()));
        }
        match (g.d_min, g.d_max) {
            (Some(a), Some(b)) if !(a <= b) => {
                return Err(CliError::Config(format!("empty distance range [{a}, {b}]")));
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(CliError::Config("d_min and d_max must be given together".into()));
            }
            _ => {}
        }
        if g.d_min.is_none() && g.d.is_empty() && g.cavity_count == 2 {
            return Err(CliError::Config("no cavity distance given".into()));
        }
        positive("effective_mass_ratio", self.physics.effective_mass_ratio)?;
        positive("lead_width_angstrom", self.physics.lead_width_angstrom)?;
        let s = &self.solver;
        if s.n_modes < 4 {
            return Err(CliError::Config("n_modes must be at least 4".into()));
        }
        positive("newton_tol", s.newton_tol)?;
        positive("residual_tol", s.residual_tol)?;
        positive("real_snap", s.real_snap)?;
        positive("e_max", s.e_max)?;
        positive("base_step", s.base_step)?;
        positive("core_step", s.core_step)?;
        if !(s.k_cutoff_factor > 1.0) {
            return Err(CliError::Config("k_cutoff_factor must exceed 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        let t = &self.task;
        if t.transmission.points < 2 {
            return Err(CliError::Config("transmission needs at least 2 points".into()));
        }
        if t.polemap.re_points < 2 || t.polemap.im_points < 2 {
            return Err(CliError::Config("polemap grid needs at least 2 points per axis".into()));
        }
        if t.survival.samples < 2 {
            return Err(CliError::Config("survival needs at least 2 samples".into()));
        }
        if let Some(x) = t.survival.t_max {
            positive("t_max", x)?;
        }
        self.predict_range()?;
        for d in self.distances() {
            self.geometry_at(d).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn physical(&self) -> PhysicalParams {
        PhysicalParams {
            effective_mass_ratio: self.physics.effective_mass_ratio,
            lead_width_angstrom: self.physics.lead_width_angstrom,
        }
    }

    /// Task-block energy to internal units.
    pub fn energy(&self, e: f64) -> f64 {
        match self.task.units {
            Units::Ev => self.physical().from_ev(e),
            Units::Internal => e,
        }
    }

    pub fn geometry_at(&self, d: f64) -> Geometry {
        let g = &self.geometry;
        match g.cavity_count {
            0 => Geometry::uniform(),
            1 => Geometry::single(g.cavity_width, g.cavity_length),
            _ => Geometry::double(g.cavity_width, g.cavity_length, d),
        }
    }

    /// Distances of a sweep: the range when set, else the explicit list.
    /// Irrelevant (a single NaN) without two cavities.
    pub fn distances(&self) -> Vec<f64> {
        let g = &self.geometry;
        if g.cavity_count < 2 {
            return vec![f64::NAN];
        }
        match (g.d_min, g.d_max) {
            (Some(a), Some(b)) => {
                let n = ((b - a) / g.d_step + 1e-9).floor() as usize;
                let mut v: Vec<f64> = (0..=n).map(|i| a + i as f64 * g.d_step).collect();
                if b - v[n] > 1e-9 {
                    v.push(b);
                }
                v
            }
            _ => g.d.clone(),
        }
    }

    /// (d_min, d_max) for range tasks; a single explicit distance counts as
    /// a degenerate range.
    pub fn d_range(&self) -> Result<(f64, f64), CliError> {
        let g = &self.geometry;
        match (g.d_min, g.d_max, g.d.as_slice()) {
            (Some(a), Some(b), _) => Ok((a, b)),
            (None, None, [d]) => Ok((*d, *d)),
            _ => Err(CliError::Config("this task needs --dmin and --dmax".into())),
        }
    }

    pub fn predict_range(&self) -> Result<(u32, u32), CliError> {
        let s = self.task.effective.predict_bic.trim();
        let bad = || CliError::Config(format!("predict_bic must be \"a..b\" or \"n\", got {s:?}"));
        let (a, b) = match s.split_once("..") {
            Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
            None => (s, s),
        };
        let a: u32 = a.parse().map_err(|_| bad())?;
        let b: u32 = b.parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        Ok((a, b))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions::with_modes(self.solver.n_modes)
    }

    pub fn pole_options(&self) -> PoleOptions {
        PoleOptions {
            solver: self.solver_options(),
            newton_tol: self.solver.newton_tol,
            residual_tol: self.solver.residual_tol,
            real_snap: self.solver.real_snap,
            ..PoleOptions::default()
        }
    }

    /// Closed-cavity level of the reference mode (2, 3).
    pub fn resonance_energy(&self) -> f64 {
        let g = Geometry::single(self.geometry.cavity_width, self.geometry.cavity_length);
        cavity_energy(2, 3, &g).unwrap_or(3.25 * PI * PI)
    }

    pub fn window(&self, w: &WindowTask) -> Window {
        let e = self.resonance_energy();
        Window {
            re_min: w.emin.map_or(e - 1.5, |x| self.energy(x)),
            re_max: w.emax.map_or(e + 1.5, |x| self.energy(x)),
            im_min: w.im_min.map_or(-1.6, |x| self.energy(x)),
            im_max: w.im_max.map_or(0.05, |x| self.energy(x)),
        }
    }

    /// SHA-256 of the canonical TOML with the output directory and thread
    /// count removed, so neither changes the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        let text = c.to_toml().unwrap_or_default();
        Sha256::digest(text.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
