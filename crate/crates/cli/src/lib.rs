//! Batch front-end: TOML configuration, flag overrides, CSV/JSON outputs
//! and a manifest per run.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use args::{Cli, Command};
use config::RunConfig;
use error::CliError;
use manifest::{Outputs, RunManifest};

/// Default output directory when neither flag nor config sets one.
pub const OUTPUT_DIR_ENV: &str = "BICWG_OUTPUT_DIR";

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("bicwg-out"))
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    cli.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    if let Some(n) = cfg.threads {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    out.write_text(&format!("{}_config.toml", cli.command.name()), &cfg.to_toml()?)?;
    match cli.command {
        Command::Transmission { .. } => commands::transmission(cfg, out),
        Command::Polemap { .. } => commands::polemap(cfg, out),
        Command::Poletrack { .. } => commands::poletrack(cfg, out),
        Command::Bic { .. } => commands::bic(cfg, out),
        Command::Effective { .. } => commands::effective(cfg, out),
        Command::Survival { .. } => commands::survival(cfg, out),
    }
}

/// Runs one invocation and returns the process exit code. A manifest is
/// written whenever the output directory can be created.
pub fn run(cli: Cli) -> i32 {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let (cfg, loaded) = match load(&cli) {
        Ok(c) => (c, Ok(())),
        Err(e) => {
            let mut c = RunConfig::default();
            c.output_dir = cli.global.out.clone();
            (c, Err(e))
        }
    };
    let dir = output_dir(&cfg);
    let mut out = match Outputs::new(&dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("bicwg: cannot create {}: {e}", dir.display());
            return loaded.err().map_or(1, |e| e.exit_code());
        }
    };
    let mut result = loaded.and_then(|_| dispatch(&cli, &cfg, &mut out));
    let outputs = out.listing();
    if result.is_ok() && outputs.iter().any(|f| f.bytes == 0) {
        result = Err(CliError::Numerical("an output file is empty".into()));
    }
    let exit_code = result.as_ref().map_or_else(|e| e.exit_code(), |_| 0);
    let manifest = RunManifest {
        tool: "bicwg",
        version: commands::VERSION,
        command: cli.command.name().into(),
        status: if exit_code == 0 { "ok" } else { "failed" },
        exit_code,
        error: result.as_ref().err().map(|e| e.to_string()),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        threads: rayon::current_num_threads(),
        started_unix: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        outputs,
        diagnostics: out.diagnostics.clone(),
    };
    let path = dir.join(format!("{}_manifest.json", cli.command.name()));
    match serde_json::to_string_pretty(&manifest) {
        Ok(text) => {
            if let Err(e) = std::fs::write(&path, text) {
                eprintln!("bicwg: cannot write {}: {e}", path.display());
            }
        }
        Err(e) => eprintln!("bicwg: cannot serialise manifest: {e}"),
    }
    if let Err(e) = &result {
        eprintln!("bicwg {}: {e}", cli.command.name());
    }
    exit_code
}
