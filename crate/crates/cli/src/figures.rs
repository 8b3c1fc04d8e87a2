//! Plot-ready long-format CSVs for the figure scripts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use egf_core::config::Config;
use egf_core::diagnostics::summarize_ensemble;
use egf_core::ibm::run_ensemble;
use egf_core::initial::{BumpDensity, InitialCondition};
use egf_core::io::{self, fmt_float, time_label};
use egf_core::model::{linspace, log_grid, make_weight, region_scan_delta_beta, region_scan_delta_kappa};
use egf_core::pde::solve;
use serde::Serialize;

use crate::commands::CliError;
use crate::output::{sha256_hex, RunManifest};

pub struct FigureArgs {
    pub config: Option<PathBuf>,
    pub scales: Vec<u64>,
    pub replicas: usize,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// The reference run behind the figures: weight exponents (1/4, 5/8),
/// horizon 200, density snapshots at 0, 20 and 160.
pub fn default_config() -> Config {
    let mut cfg = Config::reference(100, 200.0);
    cfg.weight = make_weight(0.25, 0.625).expect("valid exponents");
    cfg.simulation.seed = 42;
    cfg.simulation.snapshot_times = vec![0.0, 20.0, 160.0];
    cfg
}

struct Table {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Table {
    fn create(path: PathBuf, header: &str) -> Result<Self, CliError> {
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut t = Self { path, out: BufWriter::new(file) };
        t.line(header)?;
        Ok(t)
    }

    fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.out, "{text}").map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))
    }

    fn row(&mut self, values: &[f64]) -> Result<(), CliError> {
        let text: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
        self.line(&text.join(","))
    }

    fn close(mut self) -> Result<(), CliError> {
        self.out.flush().map_err(|e| CliError::Io(format!("{}: {e}", self.path.display())))
    }
}

#[derive(Serialize)]
struct FigureMeta {
    scales: Vec<u64>,
    replicas: usize,
    snapshot_times: Vec<f64>,
    /// PDE resource at the final time, the reference level for phase plots.
    r_eq: f64,
    histogram_window: [f64; 2],
    histogram_bins: usize,
}

pub fn run(out: &Path, args: &FigureArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => crate::commands::load_config(path, None)?,
        None => default_config(),
    };
    if let Some(s) = args.seed {
        cfg.simulation.seed = s;
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let hash = sha256_hex(&format!("{}|{:?}|{}", cfg.canonical_json(), args.scales, args.replicas));
    let manifest = RunManifest::start("figures", hash, Some(cfg.simulation.seed));

    let (p, grid, init, opts) = cfg.pde_setup()?;
    let pde = solve(&p, &grid, &init, &opts)?;
    let mut t = Table::create(out.join("figure5_pde.csv"), &io::PDE_TIMESERIES_COLUMNS.join(","))?;
    for i in 0..pde.times.len() {
        t.row(&[pde.times[i], pde.n[i], pde.e[i], pde.omega[i], pde.r[i]])?;
    }
    t.close()?;
    for frame in &pde.snapshots {
        let mass: f64 = frame.u.iter().sum::<f64>() * grid.dx() + frame.layer.iter().map(|q| q.mass).sum::<f64>();
        let scale = if mass > 0.0 { 1.0 / mass } else { 0.0 };
        let mut t = Table::create(out.join(format!("figure6_pde_t{}.csv", time_label(frame.time))), "x,u_tilde")?;
        for (i, u) in frame.u.iter().enumerate() {
            t.row(&[grid.x(i), u * scale])?;
        }
        t.close()?;
    }

    for &k in &args.scales {
        let mut run = cfg.clone();
        run.simulation.k = k;
        let sim = run.sim_config()?;
        let trajs = run_ensemble(&sim, args.replicas, args.threads)?;
        io::write_timeseries(&out.join(format!("figure5_ibm_K{k}.csv")), &trajs)?;
        let summary = summarize_ensemble(&trajs)?;
        io::write_ensemble_summary(&out.join(format!("figure5_mean_K{k}.csv")), &summary)?;
        for s in &summary.snapshots {
            let h = s.histogram.normalized().unwrap_or_else(|| s.histogram.clone());
            io::write_histogram(&out.join(format!("figure6_ibm_K{k}_t{}.csv", time_label(s.time))), &h)?;
        }
    }

    if let InitialCondition::DensityU0 { x_min, x_max, .. } = cfg.initial {
        let bump = BumpDensity::new(x_min, x_max).map_err(|e| CliError::Validation(e.to_string()))?;
        let mut t = Table::create(out.join("figure6_u0.csv"), "x,u0")?;
        let edges = cfg.histogram.edges();
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        for x in linspace(lo, hi, 501) {
            t.row(&[x, bump.density(x)])?;
        }
        t.close()?;
    }

    let mut t = Table::create(out.join("weight_shape.csv"), "kappa1,kappa2,x,omega")?;
    for (k1, k2) in [(0.25, 0.625), (0.0, 1.0), (0.5, 0.5), (0.0, 0.0)] {
        let w = make_weight(k1, k2).expect("valid exponents");
        for x in log_grid(1e-3, 1e3, 121) {
            t.row(&[k1, k2, x, w.eval(x)])?;
        }
    }
    t.close()?;

    let axis = linspace(-3.0, 1.0, 50);
    let mut t = Table::create(out.join("region_delta_beta.csv"), "alpha,delta,beta,admissible")?;
    for (i, row) in region_scan_delta_beta(0.0, &axis, &axis).iter().enumerate() {
        for (j, &ok) in row.iter().enumerate() {
            t.row(&[0.0, axis[i], axis[j], f64::from(u8::from(ok))])?;
        }
    }
    t.close()?;
    let kappas: Vec<f64> = axis.iter().rev().map(|d| -d).collect();
    let mut t = Table::create(out.join("region_delta_kappa.csv"), "alpha,delta,kappa,admissible")?;
    for (i, row) in region_scan_delta_kappa(1.0, -3.0, &axis, &kappas).iter().enumerate() {
        for (j, &ok) in row.iter().enumerate() {
            t.row(&[1.0, axis[i], kappas[j], f64::from(u8::from(ok))])?;
        }
    }
    t.close()?;

    let window = cfg.histogram.clone();
    let meta = FigureMeta {
        scales: args.scales.clone(),
        replicas: args.replicas,
        snapshot_times: cfg.simulation.snapshot_times.clone(),
        r_eq: pde.r.last().copied().unwrap_or(f64::NAN),
        histogram_window: [window.edges()[0], window.edges()[window.bins()]],
        histogram_bins: window.bins(),
    };
    io::write_json(&out.join("figure_meta.json"), &meta)?;
    manifest.finish(out)?;
    Ok(())
}
