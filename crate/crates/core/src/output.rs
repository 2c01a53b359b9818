//! Run directories: `diagnostics.csv`, snapshots, the run manifest, and the
//! invariant-measure tables.
//!
//! All quantities are in code units: lengths in units of the box side's
//! coordinate, times in units of the configured clock. Header cells read
//! `name[unit]` with `-` for dimensionless counts and flags.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::Config;
use crate::diagnostics::StepRecord;
use crate::error::Result;
use crate::integrator::{Ensemble, Trajectory};
use crate::invariant::{DampedEnsemble, EmpiricalMeasure, Observable};
use crate::snapshot;

pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const MANIFEST: &str = "run_manifest";
pub const SNAPSHOT_INDEX: &str = "snapshots.csv";
pub const AVERAGES: &str = "averages.csv";

/// Columns of `diagnostics.csv`.
pub const DIAG_COLUMNS: &[&str] = &[
    "t[time]",
    "path[-]",
    "h_norm[code]",
    "v_norm[code]",
    "da_norm[code]",
    "l4_norm[code]",
    "F[code/time]",
    "D[code/time]",
    "energy_residual[code]",
    "hit_R[-]",
    "grad_sq[code]",
    "l4_pow4[code]",
    "u_grad_sq[code]",
    "tamed_energy[code]",
    "noise_sq[code/time]",
];

/// Strip the `[unit]` suffix of a header cell.
pub fn column_name(cell: &str) -> &str {
    cell.split('[').next().unwrap_or(cell).trim()
}

fn diag_row(path: u64, r: &StepRecord) -> Vec<String> {
    vec![
        format!("{:?}", r.t),
        path.to_string(),
        format!("{:?}", r.h_sq.sqrt()),
        format!("{:?}", r.v_sq.sqrt()),
        format!("{:?}", r.da_sq.sqrt()),
        format!("{:?}", r.l4_pow4.powf(0.25)),
        format!("{:?}", r.f_value),
        format!("{:?}", r.d_value),
        format!("{:?}", r.residual),
        u8::from(r.hit).to_string(),
        format!("{:?}", r.grad_sq),
        format!("{:?}", r.l4_pow4),
        r.u_grad_sq.map_or_else(String::new, |x| format!("{x:?}")),
        format!("{:?}", r.tamed_energy),
        format!("{:?}", r.noise_sq),
    ]
}

/// Streaming writer for `diagnostics.csv`.
pub struct DiagnosticsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(DIAG_COLUMNS).map_err(csv_err)?;
        Ok(DiagnosticsWriter { inner })
    }

    pub fn row(&mut self, path: u64, r: &StepRecord) -> Result<()> {
        self.inner.write_record(diag_row(path, r)).map_err(csv_err)
    }

    pub fn trajectory(&mut self, traj: &Trajectory) -> Result<()> {
        for r in &traj.records {
            self.row(traj.path, r)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Metadata recorded next to the configuration.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub config: Config,
    pub command: String,
    pub started: u64,
    pub finished: Option<u64>,
}

impl Manifest {
    pub fn start(config: &Config, command: &str) -> Self {
        Manifest {
            config: config.clone(),
            command: command.to_string(),
            started: unix_now(),
            finished: None,
        }
    }

    /// Config lines followed by `#` metadata, so the manifest itself parses
    /// as a config and replays the run.
    pub fn render(&self) -> String {
        let mut s = self.config.print();
        s.push_str(&format!("# command = {}\n", self.command));
        s.push_str(&format!("# version = {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("# base_seed = {}\n", self.config.seed));
        s.push_str(&format!("# generator = {}\n", crate::rng::GENERATOR));
        s.push_str(&format!("# threads = {}\n", rayon::current_num_threads()));
        s.push_str(&format!("# started_unix = {}\n", self.started));
        if let Some(f) = self.finished {
            s.push_str(&format!("# finished_unix = {f}\n"));
        }
        s
    }

    pub fn write(&mut self, dir: &Path, finished: bool) -> Result<()> {
        if finished {
            self.finished = Some(unix_now());
        }
        std::fs::write(dir.join(MANIFEST), self.render())?;
        Ok(())
    }
}

pub fn snapshot_name(path: u64, index: usize) -> String {
    format!("snap_p{path:05}_{index:04}.tnse")
}

/// Write every trajectory's snapshots and the `snapshots.csv` index.
pub fn write_snapshots(dir: &Path, ens: &Ensemble) -> Result<Vec<PathBuf>> {
    let mut index = csv::Writer::from_path(dir.join(SNAPSHOT_INDEX)).map_err(csv_err)?;
    index.write_record(["path[-]", "t[time]", "file[-]"]).map_err(csv_err)?;
    let mut out = Vec::new();
    for traj in &ens.trajectories {
        for (i, (t, u)) in traj.snapshots.iter().enumerate() {
            let name = snapshot_name(traj.path, i);
            let p = dir.join(&name);
            snapshot::write(&p, u)?;
            index
                .write_record([traj.path.to_string(), format!("{t:?}"), name])
                .map_err(csv_err)?;
            out.push(p);
        }
    }
    index.flush()?;
    Ok(out)
}

/// Write the whole ensemble's diagnostics, rows ordered by path then time.
pub fn write_diagnostics(dir: &Path, ens: &Ensemble) -> Result<()> {
    let mut w = DiagnosticsWriter::create(&dir.join(DIAGNOSTICS))?;
    for traj in &ens.trajectories {
        w.trajectory(traj)?;
    }
    w.finish()
}

/// `measure_<obs>.csv` with one row per histogram bin.
pub fn write_measure(dir: &Path, m: &EmpiricalMeasure) -> Result<PathBuf> {
    let p = dir.join(format!("measure_{}.csv", m.observable));
    let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
    w.write_record(["bin_left[code]", "bin_right[code]", "count[-]"]).map_err(csv_err)?;
    for (i, c) in m.counts.iter().enumerate() {
        w.write_record([format!("{:?}", m.edges[i]), format!("{:?}", m.edges[i + 1]), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(p)
}

/// One row of `averages.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageRow {
    pub observable: String,
    pub burn_in: f64,
    pub average: f64,
    pub se: f64,
    pub samples: usize,
}

pub fn write_averages(dir: &Path, rows: &[AverageRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(AVERAGES)).map_err(csv_err)?;
    w.write_record(["observable[-]", "burn_in[time]", "time_average[code]", "se[code]", "samples[-]"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.observable.clone(),
            format!("{:?}", r.burn_in),
            format!("{:?}", r.average),
            format!("{:?}", r.se),
            r.samples.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `measure_<obs>.csv`, `averages.csv` and `spectrum_average.csv` for
/// a damped ensemble.
pub fn write_invariant(dir: &Path, ens: &DampedEnsemble, observables: &[Observable]) -> Result<Vec<AverageRow>> {
    let mut rows = Vec::new();
    for &o in observables {
        let m = ens.measure(o)?;
        write_measure(dir, &m)?;
        let (_, se) = ens.path_average(o, ens.burn_in)?;
        rows.push(AverageRow {
            observable: o.name().to_string(),
            burn_in: ens.burn_in,
            average: m.average,
            se,
            samples: m.samples.len(),
        });
    }
    write_averages(dir, &rows)?;
    let mut w = csv::Writer::from_path(dir.join("spectrum_average.csv")).map_err(csv_err)?;
    w.write_record(["wavenumber[1/length]", "energy[code]"]).map_err(csv_err)?;
    for (k, e) in ens.spectrum() {
        w.write_record([format!("{k:?}"), format!("{e:?}")]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(rows)
}
