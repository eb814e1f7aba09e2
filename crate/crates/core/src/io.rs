//! CSV and JSON output. Every CSV opens with `#` comment lines supplied by
//! the caller (config hash, units) followed by a single header row.

use std::io::Write;

use serde::Serialize;

use crate::dynamics::{DiscreteWeight, SpectralWeight, SurvivalTrace};
use crate::effective::{EffectivePole, Level};
use crate::error::{Error, Result};
use crate::modematch::TransmissionTable;
use crate::poles::{BicRecord, PoleRecord, Symmetry, Trajectory};
use crate::units::PhysicalParams;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Io(std::io::Error::other(format!("{other:?}"))),
        }
    }
}

fn comments<W: Write>(w: &mut W, lines: &[String]) -> Result<()> {
    for l in lines {
        for part in l.lines() {
            writeln!(w, "# {part}")?;
        }
    }
    Ok(())
}

fn writer<W: Write>(mut w: W, header: &[String]) -> Result<csv::Writer<W>> {
    comments(&mut w, header)?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(w))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// `E_internal,E_eV,T_re,T_im,T_abs2`.
pub fn write_transmission_csv<W: Write>(w: W, table: &TransmissionTable, units: &PhysicalParams, header: &[String]) -> Result<()> {
    let mut out = writer(w, header)?;
    out.write_record(["E_internal", "E_eV", "T_re", "T_im", "T_abs2"])?;
    for r in &table.rows {
        out.write_record([
            num(r.energy),
            num(units.to_ev(r.energy)),
            num(r.t.re),
            num(r.t.im),
            num(r.t_abs2),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One pole row, independent of where it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleRow {
    pub d: f64,
    pub energy: f64,
    pub gamma: f64,
    pub symmetry: Symmetry,
    pub trajectory_id: usize,
}

impl From<&PoleRecord> for PoleRow {
    fn from(p: &PoleRecord) -> Self {
        Self {
            d: p.d,
            energy: p.energy(),
            gamma: p.gamma(),
            symmetry: p.symmetry,
            trajectory_id: p.trajectory_id,
        }
    }
}

impl From<&EffectivePole> for PoleRow {
    fn from(p: &EffectivePole) -> Self {
        Self {
            d: p.d,
            energy: p.z0.re,
            gamma: 0.0 - p.z0.im,
            symmetry: match p.level {
                Level::Plus => Symmetry::Symmetric,
                Level::Minus => Symmetry::Antisymmetric,
            },
            trajectory_id: 0,
        }
    }
}

/// `d,E_R_internal,gamma_internal,E_R_eV,gamma_eV,symmetry,trajectory_id`,
/// plus a trailing `source` column when `source` is given.
pub fn write_poles_csv<W: Write>(
    w: W,
    rows: &[PoleRow],
    units: &PhysicalParams,
    source: Option<&str>,
    header: &[String],
) -> Result<()> {
    let mut out = writer(w, header)?;
    let mut cols = vec![
        "d",
        "E_R_internal",
        "gamma_internal",
        "E_R_eV",
        "gamma_eV",
        "symmetry",
        "trajectory_id",
    ];
    if source.is_some() {
        cols.push("source");
    }
    out.write_record(&cols)?;
    for r in rows {
        let mut rec = vec![
            num(r.d),
            num(r.energy),
            num(r.gamma),
            num(units.to_ev(r.energy)),
            num(units.to_ev(r.gamma)),
            r.symmetry.as_str().to_string(),
            r.trajectory_id.to_string(),
        ];
        if let Some(s) = source {
            rec.push(s.to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `d,E_internal,E_eV,symmetry,gamma_internal,zero_re_internal,zero_im_internal,residual`.
pub fn write_bic_csv<W: Write>(w: W, bics: &[BicRecord], units: &PhysicalParams, header: &[String]) -> Result<()> {
    let mut out = writer(w, header)?;
    out.write_record([
        "d",
        "E_internal",
        "E_eV",
        "symmetry",
        "gamma_internal",
        "zero_re_internal",
        "zero_im_internal",
        "residual",
    ])?;
    for b in bics {
        out.write_record([
            num(b.d),
            num(b.energy),
            num(units.to_ev(b.energy)),
            b.symmetry.as_str().to_string(),
            num(b.gamma()),
            num(b.transmission_zero.re),
            num(b.transmission_zero.im),
            num(b.residual),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    id: usize,
    symmetry: &'a str,
    d: Vec<f64>,
    e_r_internal: Vec<f64>,
    gamma_internal: Vec<f64>,
    e_r_ev: Vec<f64>,
    gamma_ev: Vec<f64>,
}

/// Per-trajectory arrays.
pub fn trajectories_json(trajectories: &[Trajectory], units: &PhysicalParams) -> Result<String> {
    let doc: Vec<TrajectoryJson> = trajectories
        .iter()
        .map(|t| TrajectoryJson {
            id: t.id,
            symmetry: t.symmetry.as_str(),
            d: t.points.iter().map(|p| p.d).collect(),
            e_r_internal: t.points.iter().map(|p| p.energy()).collect(),
            gamma_internal: t.points.iter().map(|p| p.gamma()).collect(),
            e_r_ev: t.points.iter().map(|p| units.to_ev(p.energy())).collect(),
            gamma_ev: t.points.iter().map(|p| units.to_ev(p.gamma())).collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// `t_internal,P`.
pub fn write_survival_csv<W: Write>(w: W, trace: &SurvivalTrace, header: &[String]) -> Result<()> {
    let mut out = writer(w, header)?;
    out.write_record(["t_internal", "P"])?;
    for (t, p) in trace.times.iter().zip(&trace.probability) {
        out.write_record([num(*t), num(*p)])?;
    }
    out.flush()?;
    Ok(())
}

/// `E_internal,w`.
pub fn write_spectral_csv<W: Write>(w: W, spectral: &SpectralWeight, header: &[String]) -> Result<()> {
    let mut out = writer(w, header)?;
    out.write_record(["E_internal", "w"])?;
    for (e, v) in spectral.energies.iter().zip(&spectral.weights) {
        out.write_record([num(*e), num(*v)])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DiscreteJson<'a> {
    state: &'a str,
    continuum: f64,
    total: f64,
    deficit: f64,
    horizon: f64,
    discrete: &'a [DiscreteWeight],
    resonances: &'a [DiscreteWeight],
}

/// Discrete and resonance weights with the completeness summary.
pub fn discrete_weights_json(spectral: &SpectralWeight) -> Result<String> {
    Ok(serde_json::to_string_pretty(&DiscreteJson {
        state: spectral.state.as_str(),
        continuum: spectral.continuum,
        total: spectral.total,
        deficit: spectral.deficit(),
        horizon: spectral.horizon(),
        discrete: &spectral.discrete,
        resonances: &spectral.resonances,
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn units() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn pole_csv_layout() {
        let rows = [PoleRow {
            d: 5.6,
            energy: 32.5,
            gamma: 1e-5,
            symmetry: Symmetry::Symmetric,
            trajectory_id: 3,
        }];
        let mut buf = Vec::new();
        write_poles_csv(&mut buf, &rows, &units(), None, &["config_hash=abc".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc");
        assert_eq!(lines[1], "d,E_R_internal,gamma_internal,E_R_eV,gamma_eV,symmetry,trajectory_id");
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0].parse::<f64>().unwrap(), 5.6);
        assert_eq!(fields[5], "symmetric");

        let mut buf = Vec::new();
        write_poles_csv(&mut buf, &rows, &units(), Some("effective"), &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",source"));
        assert!(text.lines().nth(1).unwrap().ends_with(",effective"));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 32.452081478283, -7.5e-19, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn effective_row_maps_levels() {
        let p = EffectivePole {
            level: Level::Minus,
            d: 6.6,
            z0: Complex64::new(32.0, -0.1),
            iterations: 3,
            residual: 0.0,
        };
        let r = PoleRow::from(&p);
        assert_eq!(r.symmetry, Symmetry::Antisymmetric);
        assert!((r.gamma - 0.1).abs() < 1e-15);
    }
}
