use std::path::{Path, PathBuf};

use egf_core::config::{Config, ConfigError};
use egf_core::diagnostics::{biomass_audit, compare_to_pde, summarize_ensemble, ComparisonReport, DiagnosticsError};
use egf_core::ibm::{run_ensemble, SimError};
use egf_core::io::{self, IoError};
use egf_core::model::{admissibility, AdmissibilityReport};
use egf_core::pde::{solve, PdeError};

use crate::output::{output_dir, sha256_hex, RunManifest};

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// 1: the model or configuration fails validation.
    Validation(String),
    /// 2: a file or argument cannot be parsed.
    Parse(String),
    /// 3: reading or writing files failed.
    Io(String),
    /// 4: the simulation or solver diverged or violated a stability guard.
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Parse(_) => 2,
            Self::Io(_) => 3,
            Self::Divergence(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Validation(m) | Self::Parse(m) | Self::Io(m) | Self::Divergence(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::Io(e.to_string()),
            ConfigError::Parse { .. } => Self::Parse(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => Self::Io(e.to_string()),
            IoError::Format { .. } => Self::Parse(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Initial(_) | SimError::State(_) => Self::Validation(e.to_string()),
            _ => Self::Divergence(e.to_string()),
        }
    }
}

impl From<PdeError> for CliError {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::Cfl { .. } | PdeError::Divergence { .. } => Self::Divergence(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        Self::Validation(e.to_string())
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<Config, CliError> {
    let mut cfg = Config::load(path)?;
    if let Some(s) = seed {
        cfg.simulation.seed = s;
    }
    Ok(cfg)
}

/// Runs every structural check. `Ok` carries the report and whether it passed.
pub fn validate(path: &Path) -> Result<(AdmissibilityReport, bool), CliError> {
    let cfg = load_config(path, None)?;
    let p = cfg.model_params()?;
    let report = admissibility(&p, &cfg.weight);
    let ok = report.blocking_ok();
    Ok((report, ok))
}

pub struct IbmArgs {
    pub replicas: Option<usize>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

pub fn run_ibm(path: &Path, args: &IbmArgs) -> Result<PathBuf, CliError> {
    let mut cfg = load_config(path, args.seed)?;
    if let Some(r) = args.replicas {
        cfg.ibm.replicas = r;
    }
    let sim = cfg.sim_config()?;
    let hash = sha256_hex(&cfg.canonical_json());
    let dir = output_dir(args.out.as_deref(), "run-ibm", &hash);
    create_dir(&dir)?;
    let manifest = RunManifest::start("run-ibm", hash, Some(cfg.simulation.seed));
    let trajs = run_ensemble(&sim, cfg.ibm.replicas, args.threads)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    io::write_timeseries(&dir.join("timeseries.csv"), &trajs)?;
    io::write_events(&dir.join("events.json"), &trajs)?;
    let summary = summarize_ensemble(&trajs)?;
    io::write_ensemble_summary(&dir.join("ensemble_summary.csv"), &summary)?;
    for s in &summary.snapshots {
        io::write_histogram(&dir.join(io::snapshot_file(s.time)), &s.histogram)?;
    }
    let violations: u64 = trajs.iter().map(|t| biomass_audit(t, &sim.model)).sum();
    if violations > 0 {
        eprintln!("warning: {violations} samples violate the biomass bound");
    }
    manifest.finish(&dir)?;
    Ok(dir)
}

pub fn run_pde(path: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let cfg = load_config(path, None)?;
    let (p, grid, init, opts) = cfg.pde_setup()?;
    let hash = sha256_hex(&cfg.canonical_json());
    let dir = output_dir(out, "run-pde", &hash);
    let traj = solve(&p, &grid, &init, &opts)?;
    create_dir(&dir)?;
    let manifest = RunManifest::start("run-pde", hash, None);
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    io::write_pde_output(&dir, &traj)?;
    manifest.finish(&dir)?;
    Ok(dir)
}

pub fn parse_window(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Parse(format!("window must look like t0:t1, got {text:?}"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let t0: f64 = a.trim().parse().map_err(|_| bad())?;
    let t1: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(bad());
    }
    Ok((t0, t1))
}

pub fn compare(ibm_dir: &Path, pde_dir: &Path, window: (f64, f64), out: Option<&Path>) -> Result<(PathBuf, ComparisonReport), CliError> {
    let cfg = load_config(&ibm_dir.join("config.toml"), None)?;
    let p = cfg.model_params()?;
    let trajs = io::read_timeseries(&ibm_dir.join("timeseries.csv"), cfg.simulation.k)?;
    let pde = io::read_pde_output(pde_dir)?;
    let mut times = Vec::new();
    for &t in &cfg.simulation.snapshot_times {
        let file = ibm_dir.join(io::snapshot_file(t));
        if file.exists() && pde.snapshot(t).is_some() {
            times.push(t);
        }
    }
    let mut summary = summarize_ensemble(&trajs)?;
    for &t in &times {
        summary.snapshots.push(egf_core::ibm::Snapshot {
            time: t,
            histogram: io::read_histogram(&ibm_dir.join(io::snapshot_file(t)))?,
        });
    }
    let mut report = compare_to_pde(&summary, &pde, window, &times)?;
    report.biomass_violations = trajs.iter().map(|t| biomass_audit(t, &p)).sum();

    let key = format!("{}|{}|{}:{}", ibm_dir.display(), pde_dir.display(), window.0, window.1);
    let hash = sha256_hex(&key);
    let dir = output_dir(out, "compare", &hash);
    create_dir(&dir)?;
    let manifest = RunManifest::start("compare", hash, None);
    io::write_json(&dir.join("comparison_report.json"), &report)?;
    manifest.finish(&dir)?;
    Ok((dir, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_parse() {
        assert_eq!(parse_window("0:50").unwrap(), (0.0, 50.0));
        assert_eq!(parse_window(" 1.5 : 2 ").unwrap(), (1.5, 2.0));
        for bad in ["", "3", "a:b", "0:inf", "1:2:3"] {
            assert_eq!(parse_window(bad).unwrap_err().exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let cfl = PdeError::Cfl { dt: 1.0, required: 0.1, max_speed: 10.0, time: 0.0 };
        assert_eq!(CliError::from(cfl).exit_code(), 4);
        assert_eq!(CliError::from(PdeError::Options("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(SimError::Config("x".into())).exit_code(), 1);
        let missing = Config::load(Path::new("/nonexistent/egf.toml")).unwrap_err();
        assert_eq!(CliError::from(missing).exit_code(), 3);
        assert_eq!(CliError::from(Config::from_toml("[model").unwrap_err()).exit_code(), 2);
    }
}
