use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{CalibrationMode, RunConfig, StateChoice, Units, WindowTask};

/// Scattering, pole and survival calculations for cavity-loaded electron
/// waveguides. Flags override the config file.
#[derive(Debug, Parser)]
#[command(name = "bicwg", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: config, then $BICWG_OUTPUT_DIR, then ./bicwg-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Units of energy flags and task energies.
    #[arg(long, global = true, value_enum)]
    pub units: Option<Units>,
    #[arg(long, global = true)]
    pub n_modes: Option<usize>,
    /// 0 (plain lead), 1 or 2.
    #[arg(long, global = true)]
    pub cavities: Option<usize>,
    #[arg(long, global = true)]
    pub cavity_width: Option<f64>,
    #[arg(long, global = true)]
    pub cavity_length: Option<f64>,
    /// Comma-separated cavity distances.
    #[arg(long, global = true, value_delimiter = ',')]
    pub d: Vec<f64>,
    #[arg(long, global = true)]
    pub dmin: Option<f64>,
    #[arg(long, global = true)]
    pub dmax: Option<f64>,
    /// Distance step of ranges.
    #[arg(long, global = true)]
    pub step: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// |T|² on a real energy grid, one CSV per distance.
    Transmission {
        #[arg(long)]
        emin: Option<f64>,
        #[arg(long)]
        emax: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// |T| on a complex-energy grid plus the poles inside it.
    Polemap {
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        re_points: Option<usize>,
        #[arg(long)]
        im_points: Option<usize>,
    },
    /// Pole trajectories over a distance range.
    Poletrack {
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Bound states in the continuum over a distance range.
    Bic {
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Effective-model poles and predicted bound-state distances.
    Effective {
        /// JSON with the single-cavity pole (as written by `polemap --cavities 1`).
        #[arg(long)]
        calibrate_from: Option<PathBuf>,
        #[arg(long, value_enum)]
        calibration: Option<CalibrationMode>,
        /// Constant coupling in internal units; skips calibration.
        #[arg(long)]
        v0: Option<f64>,
        /// Range of n, e.g. 3..6.
        #[arg(long)]
        predict_bic: Option<String>,
    },
    /// Survival probability of a cavity state.
    Survival {
        #[arg(long, value_enum)]
        state: Option<StateChoice>,
        /// Internal time units.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Top of the spectral energy grid (internal units).
        #[arg(long)]
        e_max: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[arg(long)]
    pub emin: Option<f64>,
    #[arg(long)]
    pub emax: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub im_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub im_max: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl WindowArgs {
    fn apply(&self, w: &mut WindowTask) {
        set_opt(&mut w.emin, self.emin);
        set_opt(&mut w.emax, self.emax);
        set_opt(&mut w.im_min, self.im_min);
        set_opt(&mut w.im_max, self.im_max);
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Transmission { .. } => "transmission",
            Command::Polemap { .. } => "polemap",
            Command::Poletrack { .. } => "poletrack",
            Command::Bic { .. } => "bic",
            Command::Effective { .. } => "effective",
            Command::Survival { .. } => "survival",
        }
    }
}

impl Cli {
    /// Applies every given flag on top of `cfg`.
    pub fn apply(&self, cfg: &mut RunConfig) {
        let g = &self.global;
        set_opt(&mut cfg.output_dir, g.out.clone());
        set_opt(&mut cfg.threads, g.threads);
        set(&mut cfg.task.units, g.units);
        set(&mut cfg.solver.n_modes, g.n_modes);
        set(&mut cfg.geometry.cavity_count, g.cavities);
        set(&mut cfg.geometry.cavity_width, g.cavity_width);
        set(&mut cfg.geometry.cavity_length, g.cavity_length);
        if !g.d.is_empty() {
            cfg.geometry.d = g.d.clone();
            cfg.geometry.d_min = None;
            cfg.geometry.d_max = None;
        }
        set_opt(&mut cfg.geometry.d_min, g.dmin);
        set_opt(&mut cfg.geometry.d_max, g.dmax);
        set(&mut cfg.geometry.d_step, g.step);
        let t = &mut cfg.task;
        match &self.command {
            Command::Transmission { emin, emax, points } => {
                set_opt(&mut t.transmission.emin, *emin);
                set_opt(&mut t.transmission.emax, *emax);
                set(&mut t.transmission.points, *points);
            }
            Command::Polemap {
                window,
                re_points,
                im_points,
            } => {
                let mut w = t.polemap.window();
                window.apply(&mut w);
                t.polemap.emin = w.emin;
                t.polemap.emax = w.emax;
                t.polemap.im_min = w.im_min;
                t.polemap.im_max = w.im_max;
                set(&mut t.polemap.re_points, *re_points);
                set(&mut t.polemap.im_points, *im_points);
            }
            Command::Poletrack { window } => window.apply(&mut t.poletrack),
            Command::Bic { window } => window.apply(&mut t.bic),
            Command::Effective {
                calibrate_from,
                calibration,
                v0,
                predict_bic,
            } => {
                set_opt(&mut t.effective.calibrate_from, calibrate_from.clone());
                set(&mut t.effective.calibration, *calibration);
                set_opt(&mut t.effective.v0, *v0);
                set(&mut t.effective.predict_bic, predict_bic.clone());
            }
            Command::Survival {
                state,
                t_max,
                samples,
                e_max,
            } => {
                set(&mut t.survival.state, *state);
                set_opt(&mut t.survival.t_max, *t_max);
                set(&mut t.survival.samples, *samples);
                set(&mut cfg.solver.e_max, *e_max);
            }
        }
    }
}
