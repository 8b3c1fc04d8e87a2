//! CSV and JSON artifacts. Floats are written with 17 significant digits so
//! every value reads back bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{EnsembleSummary, SeriesStats};
use crate::histogram::Histogram;
use crate::ibm::{EventCounts, Trajectory};
use crate::model::{AllometricParams, ModelParams, WeightFunction};
use crate::pde::{DensityFrame, DensityTrajectory, Grid, Parcel, PdeCounters};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: impl ToString) -> IoError {
    IoError::Format { path: path.display().to_string(), message: message.to_string() }
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// File-name label of a time: `20` for 20.0, `0.5` for 0.5.
pub fn time_label(t: f64) -> String {
    format!("{t}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(file)))
}

fn csv_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let found: Vec<String> = reader.headers().map_err(|e| format_err(path, e))?.iter().map(String::from).collect();
    if found != header {
        return Err(format_err(path, format!("expected columns {}, found {}", header.join(","), found.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format_err(path, e))?;
        let row = record
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| format_err(path, format!("{v:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn finish(path: &Path, mut w: csv::Writer<BufWriter<File>>) -> Result<(), IoError> {
    w.flush().map_err(io_err(path))
}

fn write_row<I: IntoIterator<Item = String>>(path: &Path, w: &mut csv::Writer<BufWriter<File>>, row: I) -> Result<(), IoError> {
    w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(|e| format_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| format_err(path, e))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

pub const TIMESERIES_COLUMNS: [&str; 6] = ["replica", "t", "N", "E", "Omega", "R"];

/// Long format, replicas in the order given.
pub fn write_timeseries(path: &Path, trajs: &[Trajectory]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, TIMESERIES_COLUMNS.map(String::from))?;
    for t in trajs {
        for i in 0..t.times.len() {
            let row = [t.times[i], t.n[i], t.e[i], t.omega[i], t.r[i]].map(fmt_float);
            write_row(path, &mut w, std::iter::once(t.replica.to_string()).chain(row))?;
        }
    }
    finish(path, w)
}

/// Inverse of [`write_timeseries`]; event counts and snapshots are not stored there.
pub fn read_timeseries(path: &Path, scale: u64) -> Result<Vec<Trajectory>, IoError> {
    let mut out: Vec<Trajectory> = Vec::new();
    for row in csv_rows(path, &TIMESERIES_COLUMNS)? {
        let replica = row[0] as u64;
        if out.last().is_none_or(|t| t.replica != replica) {
            out.push(Trajectory {
                replica,
                scale,
                times: Vec::new(),
                n: Vec::new(),
                e: Vec::new(),
                omega: Vec::new(),
                r: Vec::new(),
                events: EventCounts::default(),
                snapshots: Vec::new(),
            });
        }
        let t = out.last_mut().expect("just pushed");
        t.times.push(row[1]);
        t.n.push(row[2]);
        t.e.push(row[3]);
        t.omega.push(row[4]);
        t.r.push(row[5]);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaEvents {
    pub replica: u64,
    pub events: EventCounts,
}

pub fn write_events(path: &Path, trajs: &[Trajectory]) -> Result<(), IoError> {
    let list: Vec<ReplicaEvents> =
        trajs.iter().map(|t| ReplicaEvents { replica: t.replica, events: t.events.clone() }).collect();
    write_json(path, &list)
}

pub const HISTOGRAM_COLUMNS: [&str; 3] = ["bin_left", "bin_right", "mass"];

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    write_row(path, &mut w, HISTOGRAM_COLUMNS.map(String::from))?;
    for (e, m) in h.edges.windows(2).zip(&h.mass) {
        write_row(path, &mut w, [e[0], e[1], *m].map(fmt_float))?;
    }
    finish(path, w)
}

/// Reads a histogram; mass outside the window is not part of the file.
pub fn read_histogram(path: &Path) -> Result<Histogram, IoError> {
    let rows = csv_rows(path, &HISTOGRAM_COLUMNS)?;
    if rows.is_empty() {
        return Err(format_err(path, "no bins"));
    }
    let mut edges: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    edges.push(rows[rows.len() - 1][1]);
    if rows.windows(2).any(|w| w[0][1] != w[1][0]) {
        return Err(format_err(path, "bins are not contiguous"));
    }
    Ok(Histogram { edges, mass: rows.iter().map(|r| r[2]).collect(), outside: 0.0 })
}

pub fn snapshot_file(t: f64) -> String {
    format!("snapshot_{}.csv", time_label(t))
}

pub fn pde_density_file(t: f64) -> String {
    format!("pde_density_{}.csv", time_label(t))
}

pub fn write_ensemble_summary(path: &Path, s: &EnsembleSummary) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    for name in ["N", "E", "Omega", "R"] {
        for stat in ["mean", "var", "min", "max"] {
            header.push(format!("{name}_{stat}"));
        }
    }
    write_row(path, &mut w, header)?;
    let series: [&SeriesStats; 4] = [&s.n, &s.e, &s.omega, &s.r];
    for i in 0..s.times.len() {
        let mut row = vec![fmt_float(s.times[i])];
        for st in series {
            row.extend([st.mean[i], st.variance[i], st.min[i], st.max[i]].map(fmt_float));
        }
        write_row(path, &mut w, row)?;
    }
    finish(path, w)
}

pub const PDE_TIMESERIES_COLUMNS: [&str; 5] = ["t", "Nstar", "Estar", "Omegastar", "Rstar"];

/// Everything about a PDE solve that the CSV files do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeMeta {
    pub model: AllometricParams,
    pub weight: WeightFunction,
    pub grid: Grid,
    pub dt: f64,
    pub counters: PdeCounters,
    pub right_outflow_fraction: f64,
    pub snapshots: Vec<SnapshotMeta>,
}

/// Resource value and boundary-layer point masses at a density snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub time: f64,
    pub r: f64,
    pub file: String,
    pub layer: Vec<Parcel>,
}

/// Writes `pde_timeseries.csv`, one `pde_density_<t>.csv` per snapshot and
/// `pde_meta.json`; returns the file names in that order.
pub fn write_pde_output(dir: &Path, traj: &DensityTrajectory) -> Result<Vec<String>, IoError> {
    let mut files = Vec::new();
    let path = dir.join("pde_timeseries.csv");
    let mut w = csv_writer(&path)?;
    write_row(&path, &mut w, PDE_TIMESERIES_COLUMNS.map(String::from))?;
    for i in 0..traj.times.len() {
        write_row(&path, &mut w, [traj.times[i], traj.n[i], traj.e[i], traj.omega[i], traj.r[i]].map(fmt_float))?;
    }
    finish(&path, w)?;
    files.push("pde_timeseries.csv".to_string());

    let mut snapshots = Vec::new();
    for frame in &traj.snapshots {
        let name = pde_density_file(frame.time);
        let path = dir.join(&name);
        let mut w = csv_writer(&path)?;
        write_row(&path, &mut w, ["x", "u"].map(String::from))?;
        for (i, u) in frame.u.iter().enumerate() {
            write_row(&path, &mut w, [traj.grid.x(i), *u].map(fmt_float))?;
        }
        finish(&path, w)?;
        files.push(name.clone());
        snapshots.push(SnapshotMeta { time: frame.time, r: frame.r, file: name, layer: frame.layer.clone() });
    }

    let meta = PdeMeta {
        model: *traj.model.rates(),
        weight: traj.weight,
        grid: traj.grid,
        dt: traj.dt,
        counters: traj.counters.clone(),
        right_outflow_fraction: traj.right_outflow_fraction(),
        snapshots,
    };
    write_json(&dir.join("pde_meta.json"), &meta)?;
    files.push("pde_meta.json".to_string());
    Ok(files)
}

/// Rebuilds the parts of a [`DensityTrajectory`] that a comparison needs:
/// the observables, the grid and the snapshot densities.
pub fn read_pde_output(dir: &Path) -> Result<DensityTrajectory, IoError> {
    let meta_path = dir.join("pde_meta.json");
    let meta: PdeMeta = read_json(&meta_path)?;
    let model = ModelParams::new(meta.model).map_err(|e| format_err(&meta_path, e))?;
    let rows = csv_rows(&dir.join("pde_timeseries.csv"), &PDE_TIMESERIES_COLUMNS)?;
    let column = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
    let mut snapshots = Vec::new();
    for s in &meta.snapshots {
        let path = dir.join(&s.file);
        let density = csv_rows(&path, &["x", "u"])?;
        if density.len() != meta.grid.len() {
            return Err(format_err(&path, format!("{} nodes, grid has {}", density.len(), meta.grid.len())));
        }
        snapshots.push(DensityFrame {
            time: s.time,
            r: s.r,
            u: density.iter().map(|r| r[1]).collect(),
            layer: s.layer.clone(),
        });
    }
    Ok(DensityTrajectory {
        model,
        weight: meta.weight,
        grid: meta.grid,
        dt: meta.dt,
        times: column(0),
        n: column(1),
        e: column(2),
        omega: column(3),
        r: column(4),
        biomass_drift: Vec::new(),
        birth_flux: Vec::new(),
        jump: Vec::new(),
        snapshots,
        frames: Vec::new(),
        counters: meta.counters,
    })
}

/// Relative paths of the files under `dir`, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), IoError> {
        for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
