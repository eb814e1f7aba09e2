use bicwg_core::dynamics::{
    initial_state, plateau_value, spectral_weight, survival_probability, SpectralOptions, StateKind, SurvivalTrace,
};
use bicwg_core::effective::{self, Calibration, Coupling, CouplingModel, Level};
use bicwg_core::modematch::{ModeMatcher, SolverOptions};
use bicwg_core::poles::{self, BicSearch, Contour, PoleOptions, TrackOptions};
use bicwg_core::{Error, Sheet};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::InvalidGeometry(_) | Error::OutsideChannel { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn sheet(name: &str) -> PyResult<Sheet> {
    match name {
        "first" | "physical" => Ok(Sheet::First),
        "second" | "continued" => Ok(Sheet::Second),
        _ => Err(PyValueError::new_err(format!("unknown sheet {name:?}; use 'first' or 'second'"))),
    }
}

/// Channel with zero, one or two rectangular cavities. Lengths in units of
/// the lead width.
#[pyclass(name = "Geometry", from_py_object)]
#[derive(Clone)]
struct PyGeometry {
    inner: bicwg_core::Geometry,
}

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (cavity_count=2, distance=5.6, cavity_width=2.0, cavity_length=2.0))]
    fn new(cavity_count: usize, distance: f64, cavity_width: f64, cavity_length: f64) -> PyResult<Self> {
        let inner = match cavity_count {
            0 => bicwg_core::Geometry::uniform(),
            1 => bicwg_core::Geometry::single(cavity_width, cavity_length),
            2 => bicwg_core::Geometry::double(cavity_width, cavity_length, distance),
            n => return Err(PyValueError::new_err(format!("cavity_count must be 0, 1 or 2, got {n}"))),
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn cavity_count(&self) -> usize {
        self.inner.cavity_count
    }

    #[getter]
    fn distance(&self) -> f64 {
        self.inner.distance
    }

    fn with_distance(&self, d: f64) -> PyResult<Self> {
        let inner = self.inner.with_distance(d);
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Closed-cavity level E(m, n).
    fn cavity_energy(&self, m: u32, n: u32) -> PyResult<f64> {
        bicwg_core::cavity_energy(m, n, &self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!(
            "Geometry(cavity_count={}, distance={}, cavity_width={}, cavity_length={})",
            g.cavity_count, g.distance, g.cavity_width, g.cavity_length
        )
    }
}

/// Mode-matching solver for one geometry.
#[pyclass(name = "Solver")]
struct PySolver {
    inner: ModeMatcher,
}

#[pymethods]
impl PySolver {
    #[new]
    #[pyo3(signature = (geometry, n_modes=30))]
    fn new(geometry: &PyGeometry, n_modes: usize) -> PyResult<Self> {
        let inner = ModeMatcher::new(&geometry.inner, SolverOptions::with_modes(n_modes)).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Transmission amplitude t(E) of the lowest channel.
    #[pyo3(signature = (energy, sheet="first"))]
    fn transmission(&self, energy: Complex64, sheet: &str) -> PyResult<Complex64> {
        self.inner.transmission(energy, self::sheet(sheet)?).map_err(py_err)
    }

    /// (r, t) at a real energy.
    fn scattering(&self, energy: f64) -> PyResult<(Complex64, Complex64)> {
        let s = self.inner.solve(Complex64::new(energy, 0.0), Sheet::First).map_err(py_err)?;
        Ok((s.r(), s.t()))
    }

    fn transmission_scan(&self, py: Python<'_>, energies: Vec<f64>) -> PyResult<Vec<f64>> {
        let table = py
            .detach(|| bicwg_core::modematch::transmission_scan(&self.inner, &energies))
            .map_err(py_err)?;
        Ok(table.rows.iter().map(|r| r.t_abs2).collect())
    }
}

#[pyclass(name = "Pole", frozen, get_all)]
struct PyPole {
    d: f64,
    energy: f64,
    gamma: f64,
    symmetry: String,
    trajectory_id: usize,
    residual: f64,
}

impl From<&poles::PoleRecord> for PyPole {
    fn from(p: &poles::PoleRecord) -> Self {
        Self {
            d: p.d,
            energy: p.energy(),
            gamma: p.gamma(),
            symmetry: p.symmetry.as_str().into(),
            trajectory_id: p.trajectory_id,
            residual: p.residual,
        }
    }
}

#[pymethods]
impl PyPole {
    #[getter]
    fn z(&self) -> Complex64 {
        Complex64::new(self.energy, -self.gamma)
    }

    fn __repr__(&self) -> String {
        format!("Pole(E={:.6}, gamma={:.3e}, {})", self.energy, self.gamma, self.symmetry)
    }
}

#[pyclass(name = "Bic", frozen, get_all)]
struct PyBic {
    d: f64,
    energy: f64,
    gamma: f64,
    symmetry: String,
    transmission_zero: Complex64,
}

#[pymethods]
impl PyBic {
    fn __repr__(&self) -> String {
        format!("Bic(d={:.6}, E={:.6}, {})", self.d, self.energy, self.symmetry)
    }
}

/// Poles of the continued transmission inside a rectangle.
#[pyfunction]
#[pyo3(signature = (geometry, re_min, re_max, im_min, im_max=0.05, n_modes=30))]
fn locate_poles(
    py: Python<'_>,
    geometry: &PyGeometry,
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
    n_modes: usize,
) -> PyResult<Vec<PyPole>> {
    let opts = PoleOptions {
        solver: SolverOptions::with_modes(n_modes),
        ..PoleOptions::default()
    };
    let g = geometry.inner;
    let found = py
        .detach(|| poles::locate_poles(&g, &Contour::new(re_min, re_max, im_min, im_max), opts))
        .map_err(py_err)?;
    Ok(found.iter().map(PyPole::from).collect())
}

/// Pole trajectories from d_min to d_max, one list of poles per trajectory.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (geometry, d_min, d_max, step=0.01, re_min=None, re_max=None, im_min=-1.6))]
fn track_poles(
    py: Python<'_>,
    geometry: &PyGeometry,
    d_min: f64,
    d_max: f64,
    step: f64,
    re_min: Option<f64>,
    re_max: Option<f64>,
    im_min: f64,
) -> PyResult<Vec<Vec<PyPole>>> {
    let e = bicwg_core::cavity_energy(2, 3, &geometry.inner).map_err(py_err)?;
    let window = Contour::new(re_min.unwrap_or(e - 1.5), re_max.unwrap_or(e + 1.5), im_min, 0.05);
    let g = geometry.inner;
    let traj = py
        .detach(|| poles::track_poles(&g, d_min, d_max, step, &window, TrackOptions::default()))
        .map_err(py_err)?;
    Ok(traj.iter().map(|t| t.points.iter().map(PyPole::from).collect()).collect())
}

/// Bound states in the continuum for d in [d_min, d_max].
#[pyfunction]
fn find_bic(py: Python<'_>, geometry: &PyGeometry, d_min: f64, d_max: f64) -> PyResult<Vec<PyBic>> {
    let g = geometry.inner;
    let found = py
        .detach(|| poles::find_bic(&g, d_min, d_max, &BicSearch::default()))
        .map_err(py_err)?;
    Ok(found
        .iter()
        .map(|b| PyBic {
            d: b.d,
            energy: b.energy,
            gamma: b.gamma(),
            symmetry: b.symmetry.as_str().into(),
            transmission_zero: b.transmission_zero,
        })
        .collect())
}

fn level(name: &str) -> PyResult<Level> {
    match name {
        "plus" | "+" => Ok(Level::Plus),
        "minus" | "-" => Ok(Level::Minus),
        _ => Err(PyValueError::new_err(format!("unknown level {name:?}; use 'plus' or 'minus'"))),
    }
}

/// Single-level coupling model of a cavity pair.
#[pyclass(name = "EffectiveModel")]
struct PyEffectiveModel {
    inner: CouplingModel,
}

#[pymethods]
impl PyEffectiveModel {
    /// Constant coupling v0 with the given bare level and momentum cutoff.
    #[new]
    fn new(e_c0: f64, v0: f64, k_cutoff: f64) -> PyResult<Self> {
        let inner = CouplingModel::new(e_c0, Coupling::constant(v0), k_cutoff);
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Calibrated to a single-cavity pole. With `e_c0` the bare level is
    /// kept and only the coupling is fitted.
    #[staticmethod]
    #[pyo3(signature = (pole, e_c0=None, cutoff_factor=10.0))]
    fn calibrate(pole: Complex64, e_c0: Option<f64>, cutoff_factor: f64) -> PyResult<Self> {
        let c = match e_c0 {
            Some(e_c0) => Calibration::BareLevel { e_c0 },
            None => Calibration::FitPole,
        };
        let inner = effective::calibrate_coupling(pole, c, cutoff_factor).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn e_c0(&self) -> f64 {
        self.inner.e_c0
    }

    #[pyo3(signature = (z, level, d, sheet="first"))]
    fn self_energy(&self, z: Complex64, level: &str, d: f64, sheet: &str) -> PyResult<Complex64> {
        effective::self_energy(z, self::level(level)?, d, &self.inner, self::sheet(sheet)?).map_err(py_err)
    }

    fn pole(&self, level: &str, d: f64) -> PyResult<Complex64> {
        Ok(effective::solve_pole_equation(self::level(level)?, d, &self.inner)
            .map_err(py_err)?
            .z0)
    }

    /// (d, E) where the level becomes bound for the n-th time.
    fn bic_distance(&self, level: &str, n: u32) -> PyResult<(f64, f64)> {
        effective::bic_distance(self::level(level)?, n, &self.inner).map_err(py_err)
    }
}

#[pyclass(name = "Survival", frozen, get_all)]
struct PySurvival {
    times: Vec<f64>,
    probability: Vec<f64>,
    horizon: f64,
    captured_weight: f64,
    plateau: Option<f64>,
}

impl PySurvival {
    fn new(trace: SurvivalTrace, plateau: Option<f64>) -> Self {
        Self {
            horizon: trace.horizon,
            captured_weight: trace.normalisation,
            times: trace.times,
            probability: trace.probability,
            plateau,
        }
    }
}

/// P(t) for the cavity state `state` ('plus', 'minus' or 'single').
#[pyfunction]
#[pyo3(signature = (geometry, state, times, e_max=200.0))]
fn survival(py: Python<'_>, geometry: &PyGeometry, state: &str, times: Vec<f64>, e_max: f64) -> PyResult<PySurvival> {
    let kind = match state {
        "plus" => StateKind::Plus,
        "minus" => StateKind::Minus,
        "single" => StateKind::Single,
        _ => return Err(PyValueError::new_err(format!("unknown state {state:?}"))),
    };
    let g = geometry.inner;
    let opts = SpectralOptions {
        e_max,
        ..SpectralOptions::default()
    };
    let (trace, plateau) = py
        .detach(|| -> bicwg_core::Result<_> {
            let s = spectral_weight(&initial_state(kind, &g)?, &opts)?;
            let trace = survival_probability(&s, &times)?;
            let plateau = plateau_value(&trace, &s).ok().map(|p| p.value);
            Ok((trace, plateau))
        })
        .map_err(py_err)?;
    Ok(PySurvival::new(trace, plateau))
}

/// Internal energy to eV for the given material.
#[pyfunction]
#[pyo3(signature = (e, effective_mass_ratio=0.05, lead_width_angstrom=100.0))]
fn to_ev(e: f64, effective_mass_ratio: f64, lead_width_angstrom: f64) -> PyResult<f64> {
    let p = bicwg_core::PhysicalParams::new(effective_mass_ratio, lead_width_angstrom).map_err(py_err)?;
    Ok(p.to_ev(e))
}

#[pyfunction]
#[pyo3(signature = (e_ev, effective_mass_ratio=0.05, lead_width_angstrom=100.0))]
fn from_ev(e_ev: f64, effective_mass_ratio: f64, lead_width_angstrom: f64) -> PyResult<f64> {
    let p = bicwg_core::PhysicalParams::new(effective_mass_ratio, lead_width_angstrom).map_err(py_err)?;
    Ok(p.from_ev(e_ev))
}

#[pymodule]
pub fn bicwg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PySolver>()?;
    m.add_class::<PyPole>()?;
    m.add_class::<PyBic>()?;
    m.add_class::<PyEffectiveModel>()?;
    m.add_class::<PySurvival>()?;
    m.add_function(wrap_pyfunction!(locate_poles, m)?)?;
    m.add_function(wrap_pyfunction!(track_poles, m)?)?;
    m.add_function(wrap_pyfunction!(find_bic, m)?)?;
    m.add_function(wrap_pyfunction!(survival, m)?)?;
    m.add_function(wrap_pyfunction!(to_ev, m)?)?;
    m.add_function(wrap_pyfunction!(from_ev, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
