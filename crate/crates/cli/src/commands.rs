use std::f64::consts::PI;
use std::io::Write;

use bicwg_core::dynamics::{
    initial_state, plateau_value, spectral_weight, survival_probability, time_grid, SpectralOptions, StateKind,
};
use bicwg_core::effective::{
    bic_distance, calibrate_coupling, single_level_pole, solve_pole_equation, Calibration, Coupling, CouplingModel,
    Level,
};
use bicwg_core::geometry::threshold;
use bicwg_core::io::{
    discrete_weights_json, trajectories_json, write_bic_csv, write_poles_csv, write_spectral_csv, write_survival_csv,
    write_transmission_csv, PoleRow,
};
use bicwg_core::modematch::{transmission_scan, ModeMatcher};
use bicwg_core::poles::{find_bic, track_poles, BicSearch, Contour, PoleRecord, PoleSolver, TrackOptions};
use bicwg_core::{Geometry, Sheet};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CalibrationMode, RunConfig, StateChoice, Window};
use crate::error::CliError;
use crate::manifest::Outputs;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `#` lines opening every CSV.
fn header(cfg: &RunConfig, command: &str, extra: String) -> Vec<String> {
    let p = cfg.physical();
    vec![
        format!("config_hash={} bicwg {VERSION} {command}", cfg.hash()),
        format!("energy unit {:.6e} eV; time unit {:.6e} s", p.energy_unit_ev(), p.time_unit_seconds()),
        extra,
    ]
}

fn tag(g: &Geometry) -> String {
    match g.cavity_count {
        0 => "uniform".into(),
        1 => "single".into(),
        _ => format!("d{}", g.distance),
    }
}

fn describe(g: &Geometry, cfg: &RunConfig) -> String {
    format!(
        "cavities={} cavity_width={} cavity_length={} d={} n_modes={}",
        g.cavity_count, g.cavity_width, g.cavity_length, g.distance, cfg.solver.n_modes
    )
}

fn contour(w: &Window) -> Result<Contour, CliError> {
    if !(w.re_min < w.re_max && w.im_min < w.im_max) {
        return Err(CliError::Config(format!("empty complex window {w:?}")));
    }
    Ok(Contour::new(w.re_min, w.re_max, w.im_min, w.im_max))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn transmission(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let t = &cfg.task.transmission;
    let emin = t.emin.map_or(PI * PI + 0.01, |e| cfg.energy(e));
    let emax = t.emax.map_or(4.0 * PI * PI - 0.01, |e| cfg.energy(e));
    if !(emin < emax) {
        return Err(CliError::Config(format!("empty energy range [{emin}, {emax}]")));
    }
    let energies = linspace(emin, emax, t.points);
    let mut flagged = 0;
    for d in cfg.distances() {
        let g = cfg.geometry_at(d);
        let matcher = ModeMatcher::new(&g, cfg.solver_options())?;
        let table = transmission_scan(&matcher, &energies)?;
        flagged += table.flagged();
        let name = format!("transmission_{}.csv", tag(&g));
        let head = header(cfg, "transmission", describe(&g, cfg));
        out.write(&name, |w| Ok(write_transmission_csv(w, &table, &cfg.physical(), &head)?))?;
        let min = table.rows.iter().map(|r| r.t_abs2).fold(f64::INFINITY, f64::min);
        out.diag(format!("{name}: min |T|^2"), min);
        out.diag(format!("{name}: flagged rows"), table.flagged());
    }
    if flagged > 0 {
        return Err(CliError::Numerical(format!("{flagged} transmission rows failed to solve")));
    }
    Ok(())
}

/// Pole in the JSON form read back by `effective --calibrate-from`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoleJson {
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(rename = "E_R_internal")]
    pub e_r_internal: f64,
    pub gamma_internal: f64,
    #[serde(rename = "E_R_eV", default)]
    pub e_r_ev: Option<f64>,
    #[serde(rename = "gamma_eV", default)]
    pub gamma_ev: Option<f64>,
    #[serde(default)]
    pub symmetry: Option<String>,
}

impl PoleJson {
    fn new(p: &PoleRecord, g: &Geometry, cfg: &RunConfig) -> Self {
        let u = cfg.physical();
        Self {
            d: (g.cavity_count == 2).then_some(p.d),
            e_r_internal: p.energy(),
            gamma_internal: p.gamma(),
            e_r_ev: Some(u.to_ev(p.energy())),
            gamma_ev: Some(u.to_ev(p.gamma())),
            symmetry: Some(p.symmetry.as_str().into()),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoleFile {
    One(PoleJson),
    Many(Vec<PoleJson>),
}

pub fn polemap(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let task = &cfg.task.polemap;
    let w = cfg.window(&task.window());
    let c = contour(&w)?;
    let u = cfg.physical();
    let res = cfg.resonance_energy();
    for d in cfg.distances() {
        let g = cfg.geometry_at(d);
        let solver = PoleSolver::new(&g, cfg.pole_options())?;
        let matcher = solver.matcher();
        let res_grid = linspace(w.re_min, w.re_max, task.re_points);
        let im_grid = linspace(w.im_min, w.im_max, task.im_points);
        let points: Vec<(f64, f64)> = im_grid
            .iter()
            .flat_map(|&y| res_grid.iter().map(move |&x| (x, y)))
            .collect();
        let values: Vec<f64> = points
            .par_iter()
            .map(|&(x, y)| {
                matcher
                    .transmission(Complex64::new(x, y), Sheet::Second)
                    .map_or(f64::NAN, |t| t.norm())
            })
            .collect();
        let poles = solver.locate(&c)?;
        let t = tag(&g);
        let head = header(cfg, "polemap", describe(&g, cfg));
        out.write(&format!("polemap_{t}.csv"), |f| {
            for l in &head {
                writeln!(f, "# {l}")?;
            }
            writeln!(f, "E_re_internal,E_im_internal,E_re_eV,E_im_eV,T_abs")?;
            for (&(x, y), v) in points.iter().zip(&values) {
                writeln!(f, "{x:e},{y:e},{:e},{:e},{v:e}", u.to_ev(x), u.to_ev(y))?;
            }
            Ok(())
        })?;
        let rows: Vec<PoleRow> = poles
            .iter()
            .enumerate()
            .map(|(i, p)| PoleRow {
                trajectory_id: i,
                ..PoleRow::from(p)
            })
            .collect();
        out.write(&format!("poles_{t}.csv"), |f| Ok(write_poles_csv(f, &rows, &u, None, &head)?))?;
        let json: Vec<PoleJson> = poles.iter().map(|p| PoleJson::new(p, &g, cfg)).collect();
        out.write_text(&format!("poles_{t}.json"), &serde_json::to_string_pretty(&json)?)?;
        if g.cavity_count == 1 {
            if let Some(p) = poles
                .iter()
                .min_by(|a, b| (a.energy() - res).abs().total_cmp(&(b.energy() - res).abs()))
            {
                out.write_text("single_cavity_pole.json", &serde_json::to_string_pretty(&PoleJson::new(p, &g, cfg))?)?;
            }
        }
        out.diag(format!("{t}: poles"), poles.len());
        out.diag(
            format!("{t}: max pole residual"),
            poles.iter().map(|p| p.residual).fold(0.0, f64::max),
        );
    }
    Ok(())
}

fn double_only(cfg: &RunConfig, what: &str) -> Result<(), CliError> {
    if cfg.geometry.cavity_count != 2 {
        return Err(CliError::Config(format!("{what} needs two cavities")));
    }
    Ok(())
}

pub fn poletrack(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    double_only(cfg, "poletrack")?;
    let (a, b) = cfg.d_range()?;
    let c = contour(&cfg.window(&cfg.task.poletrack))?;
    let opts = TrackOptions {
        poles: cfg.pole_options(),
        ..TrackOptions::default()
    };
    let traj = track_poles(&cfg.geometry_at(a), a, b, cfg.geometry.d_step, &c, opts)?;
    let u = cfg.physical();
    out.write_text("poletrack.json", &trajectories_json(&traj, &u)?)?;
    let rows: Vec<PoleRow> = traj.iter().flat_map(|t| t.points.iter().map(PoleRow::from)).collect();
    let head = header(
        cfg,
        "poletrack",
        format!("d from {a} to {b} step {}; {}", cfg.geometry.d_step, describe(&cfg.geometry_at(a), cfg)),
    );
    out.write("poletrack.csv", |f| Ok(write_poles_csv(f, &rows, &u, None, &head)?))?;
    out.diag("trajectories", traj.len());
    for t in &traj {
        let (i, g) = t.min_gamma();
        out.diag(
            format!("trajectory {}", t.id),
            serde_json::json!({
                "symmetry": t.symmetry.as_str(),
                "labels_constant": t.labels_constant(),
                "samples": t.points.len(),
                "min_gamma_internal": g,
                "min_gamma_d": t.points[i].d,
            }),
        );
    }
    Ok(())
}

pub fn bic(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    double_only(cfg, "bic")?;
    let (a, b) = cfg.d_range()?;
    let w = cfg.window(&cfg.task.bic);
    contour(&w)?;
    let defaults = BicSearch::default();
    let search = BicSearch {
        track: TrackOptions {
            poles: cfg.pole_options(),
            ..defaults.track
        },
        d_step: cfg.geometry.d_step,
        re_min: w.re_min,
        re_max: w.re_max,
        im_min: w.im_min,
        ..defaults
    };
    let found = find_bic(&cfg.geometry_at(a), a, b, &search)?;
    let head = header(cfg, "bic", format!("d from {a} to {b}; {}", describe(&cfg.geometry_at(a), cfg)));
    out.write("bic.csv", |f| Ok(write_bic_csv(f, &found, &cfg.physical(), &head)?))?;
    out.diag("bound states", found.len());
    out.diag(
        "max |gamma|",
        found.iter().map(|b| b.gamma().abs()).fold(0.0, f64::max),
    );
    Ok(())
}

/// Single-cavity pole for calibration: from the file when given, else
/// located afresh.
fn calibration_pole(cfg: &RunConfig) -> Result<(Complex64, String), CliError> {
    if let Some(path) = &cfg.task.effective.calibrate_from {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: PoleFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let p = match file {
            PoleFile::One(p) => p,
            PoleFile::Many(v) => v
                .into_iter()
                .next()
                .ok_or_else(|| CliError::Config(format!("{} holds no poles", path.display())))?,
        };
        return Ok((Complex64::new(p.e_r_internal, -p.gamma_internal), path.display().to_string()));
    }
    let g = Geometry::single(cfg.geometry.cavity_width, cfg.geometry.cavity_length);
    let w = cfg.window(&Default::default());
    let poles = PoleSolver::new(&g, cfg.pole_options())?.locate(&contour(&w)?)?;
    let res = cfg.resonance_energy();
    let p = poles
        .iter()
        .min_by(|a, b| (a.energy() - res).abs().total_cmp(&(b.energy() - res).abs()))
        .ok_or_else(|| CliError::Numerical("no single-cavity pole near the resonance".into()))?;
    Ok((p.z, "located".into()))
}

pub fn effective(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let task = &cfg.task.effective;
    let e_c0 = cfg.resonance_energy();
    let cutoff = cfg.solver.k_cutoff_factor * (e_c0 - threshold(1)).sqrt();
    let model = match task.v0 {
        Some(v0) => {
            out.diag("calibration", "explicit v0");
            CouplingModel::new(e_c0, Coupling::constant(v0), cutoff)
        }
        None => {
            let (pole, source) = calibration_pole(cfg)?;
            let calibration = match task.calibration {
                CalibrationMode::BareLevel => Calibration::BareLevel { e_c0 },
                CalibrationMode::FitPole => Calibration::FitPole,
            };
            out.diag("calibration", serde_json::json!({ "source": source, "pole": [pole.re, pole.im] }));
            calibrate_coupling(pole, calibration, cfg.solver.k_cutoff_factor)?
        }
    };
    let u = cfg.physical();
    out.write_text(
        "effective_model.json",
        &serde_json::to_string_pretty(&serde_json::json!({
            "model": model,
            "single_level_pole": single_level_pole(&model).ok().map(|z| [z.re, z.im]),
        }))?,
    )?;

    let (n0, n1) = cfg.predict_range()?;
    let head = header(cfg, "effective", format!("source=effective predict_bic={n0}..{n1}"));
    let mut predictions = Vec::new();
    for n in n0..=n1 {
        for level in [Level::Plus, Level::Minus] {
            if level == Level::Minus && n == 0 {
                continue;
            }
            match bic_distance(level, n, &model) {
                Ok((d, e)) => predictions.push((level, n, d, e)),
                Err(e) => out.diag(format!("{} n={n}", level.as_str()), e.to_string()),
            }
        }
    }
    predictions.sort_by(|a, b| a.2.total_cmp(&b.2));
    out.write("effective_bic.csv", |f| {
        for l in &head {
            writeln!(f, "# {l}")?;
        }
        writeln!(f, "level,n,d,E_internal,E_eV")?;
        for (level, n, d, e) in &predictions {
            writeln!(f, "{},{n},{d:e},{e:e},{:e}", level.as_str(), u.to_ev(*e))?;
        }
        Ok(())
    })?;

    let mut rows = Vec::new();
    if cfg.geometry.cavity_count == 2 {
        for d in cfg.distances() {
            for level in [Level::Plus, Level::Minus] {
                rows.push(PoleRow::from(&solve_pole_equation(level, d, &model)?));
            }
        }
    }
    out.write("effective_poles.csv", |f| Ok(write_poles_csv(f, &rows, &u, Some("effective"), &head)?))?;
    out.diag("predicted bound states", predictions.len());
    Ok(())
}

pub fn survival(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let task = &cfg.task.survival;
    let kind = match (cfg.geometry.cavity_count, task.state) {
        (1, _) => StateKind::Single,
        (2, StateChoice::Plus) => StateKind::Plus,
        (2, StateChoice::Minus) => StateKind::Minus,
        (2, StateChoice::Single) => {
            return Err(CliError::Config("state single needs --cavities 1".into()));
        }
        _ => return Err(CliError::Config("survival needs one or two cavities".into())),
    };
    let opts = SpectralOptions {
        solver: cfg.solver_options(),
        e_max: cfg.solver.e_max,
        base_step: cfg.solver.base_step,
        core_step: cfg.solver.core_step,
        ..SpectralOptions::default()
    };
    for d in cfg.distances() {
        let g = cfg.geometry_at(d);
        let state = initial_state(kind, &g)?;
        let spectral = spectral_weight(&state, &opts)?;
        let name = match g.cavity_count {
            1 => kind.as_str().to_string(),
            _ => format!("{}_{}", kind.as_str(), tag(&g)),
        };
        let head = header(cfg, "survival", format!("state={} {}", kind.as_str(), describe(&g, cfg)));
        out.write(&format!("spectral_{name}.csv"), |f| Ok(write_spectral_csv(f, &spectral, &head)?))?;
        out.write_text(&format!("weights_{name}.json"), &discrete_weights_json(&spectral)?)?;
        out.diag(format!("{name}: captured weight"), spectral.total);
        out.diag(format!("{name}: horizon"), spectral.horizon());
        let t_max = task.t_max.unwrap_or_else(|| spectral.horizon());
        let trace = survival_probability(&spectral, &time_grid(t_max, task.samples))?;
        out.write(&format!("survival_{name}.csv"), |f| Ok(write_survival_csv(f, &trace, &head)?))?;
        if let Ok(p) = plateau_value(&trace, &spectral) {
            out.diag(format!("{name}: plateau"), p);
        }
    }
    Ok(())
}
