//! Plot-ready tables derived from a run directory.
//!
//! [`emit_plots`] reads `diagnostics.csv` (required) and, when present,
//! `run_manifest`, `snapshots.csv` and `convergence_*.csv`, and writes into
//! `<run_dir>/plots/`:
//!
//! * `norms_series.csv`: per-path norm time series;
//! * `norms_mean.csv`: ensemble mean and standard error per time, with the
//!   exact mean energy of linear runs as an overlay column;
//! * `spectrum.csv`: shell energy spectra of every snapshot;
//! * `hist_<column>.csv`: Freedman–Diaconis histograms of logged norms;
//! * `convergence.csv`: error tables with observed orders between rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::{Config, ForcingChoice, NoiseChoice};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::integrator::mean_se;
use crate::invariant::{bin, fd_edges};
use crate::output::{column_name, csv_err, DIAGNOSTICS, MANIFEST, SNAPSHOT_INDEX};
use crate::snapshot;

const SERIES: &[&str] = &["h_norm", "v_norm", "da_norm", "l4_norm", "F", "D"];
const HISTOGRAMS: &[&str] = &["h_norm", "v_norm"];

/// A numeric CSV keyed by header names with units stripped.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let columns = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(|h| column_name(h).to_string())
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            rows.push(
                rec.iter()
                    .map(|c| if c.is_empty() { f64::NAN } else { c.parse().unwrap_or(f64::NAN) })
                    .collect(),
            );
        }
        Ok(Table { columns, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidArgument(format!("column `{name}` not found")))
    }
}

/// Whether [`linear_mean_energy`] applies to `cfg`.
pub fn has_linear_overlay(cfg: &Config) -> bool {
    !cfg.advection && !cfg.tamed && cfg.forcing_norm == 0.0 && cfg.noise_kind == NoiseChoice::Constant
}

/// Exact `E|u(t)|²_H` for a linear run from `u0`, or `None` when the
/// configuration has a nonlinear term, a nonzero `f₀` or banded noise.
///
/// Each retained mode evolves independently as
/// `dû = (κ − α − ν|k|²) û dt + Σ_j i c_j k_{d_j} û dW_j`, so
/// `E|û(t)|² = |û(0)|² exp((2(κ − α − ν|k|²) + Σ_j c_j² k_{d_j}²) t)`.
pub fn linear_mean_energy(cfg: &Config, u0: &SpectralField, t: f64) -> Option<f64> {
    if !has_linear_overlay(cfg) {
        return None;
    }
    let kappa = match cfg.forcing_kind {
        ForcingChoice::State => cfg.forcing_kappa,
        ForcingChoice::Fixed => 0.0,
    };
    let c_sq = cfg.noise_strength / cfg.noise_j as f64;
    let mut per_axis = [0.0; 3];
    for j in 0..cfg.noise_j {
        per_axis[j % 3] += c_sq;
    }
    let sup = u0.support();
    let vol = u0.grid().volume();
    let mut e = 0.0;
    for p in 0..sup.len() {
        let k = sup.k(p);
        let ito: f64 = (0..3).map(|a| per_axis[a] * k[a] * k[a]).sum();
        let rate = 2.0 * (kappa - cfg.alpha - cfg.nu * sup.k_squared(p)) + ito;
        let a: f64 = (0..3).map(|c| u0.coeffs()[c][p].norm_sqr()).sum();
        e += vol * a * (rate * t).exp();
    }
    Some(e)
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:?}")
    }
}

fn writer(path: &Path, header: &[String]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

/// Initial snapshot of the lowest path, if the run recorded one.
fn initial_snapshot(run_dir: &Path) -> Result<Option<SpectralField>> {
    let index = run_dir.join(SNAPSHOT_INDEX);
    if !index.is_file() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(&index).map_err(csv_err)?;
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.get(1).and_then(|t| t.parse::<f64>().ok()) == Some(0.0) {
            let file = run_dir.join(rec.get(2).unwrap_or_default());
            return Ok(Some(snapshot::read(&file, None)?.field));
        }
    }
    Ok(None)
}

/// Write every derived table; returns the files written.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let diag = Table::read(&run_dir.join(DIAGNOSTICS))?;
    let manifest = run_dir.join(MANIFEST);
    let config = if manifest.is_file() {
        Some(Config::from_file(&manifest)?)
    } else {
        None
    };
    let out_dir = run_dir.join("plots");
    std::fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();

    let ct = diag.col("t")?;
    let cp = diag.col("path")?;
    let cols: Vec<usize> = SERIES.iter().map(|c| diag.col(c)).collect::<Result<_>>()?;

    // norm time series, one block per path
    let p = out_dir.join("norms_series.csv");
    let mut header = vec!["t[time]".to_string(), "path[-]".to_string()];
    header.extend(SERIES.iter().map(|c| format!("{c}[code]")));
    let mut w = writer(&p, &header)?;
    for row in &diag.rows {
        let mut rec = vec![fmt(row[ct]), format!("{}", row[cp] as u64)];
        rec.extend(cols.iter().map(|&c| fmt(row[c])));
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush()?;
    written.push(p);

    // ensemble mean ± SE per time, plus the linear overlay
    let ch = diag.col("h_norm")?;
    let mut by_time: BTreeMap<u64, Vec<&Vec<f64>>> = BTreeMap::new();
    for row in &diag.rows {
        by_time.entry(row[ct].to_bits()).or_default().push(row);
    }
    let mut keys: Vec<(f64, u64)> = by_time.keys().map(|&b| (f64::from_bits(b), b)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0));
    let u0 = match &config {
        Some(c) if has_linear_overlay(c) => initial_snapshot(run_dir)?,
        _ => None,
    };
    let p = out_dir.join("norms_mean.csv");
    let mut header = vec!["t[time]".to_string(), "paths[-]".to_string()];
    for c in SERIES.iter().chain(["h_sq"].iter()) {
        header.push(format!("{c}_mean[code]"));
        header.push(format!("{c}_se[code]"));
    }
    header.push("h_sq_linear_exact[code]".to_string());
    let mut w = writer(&p, &header)?;
    for (t, bits) in keys {
        let rows = &by_time[&bits];
        let mut rec = vec![fmt(t), rows.len().to_string()];
        for &c in &cols {
            let xs: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let (m, s) = mean_se(&xs);
            rec.push(fmt(m));
            rec.push(fmt(s));
        }
        let hs: Vec<f64> = rows.iter().map(|r| r[ch] * r[ch]).collect();
        let (m, s) = mean_se(&hs);
        rec.push(fmt(m));
        rec.push(fmt(s));
        let exact = match (&config, &u0) {
            (Some(c), Some(u)) => linear_mean_energy(c, u, t).unwrap_or(f64::NAN),
            _ => f64::NAN,
        };
        rec.push(fmt(exact));
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush()?;
    written.push(p);

    // spectra of the recorded snapshots
    let p = out_dir.join("spectrum.csv");
    let mut w = writer(
        &p,
        &["path[-]", "t[time]", "wavenumber[1/length]", "energy[code]"].map(String::from),
    )?;
    let index = run_dir.join(SNAPSHOT_INDEX);
    if index.is_file() {
        let mut r = csv::Reader::from_path(&index).map_err(csv_err)?;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let file = run_dir.join(rec.get(2).unwrap_or_default());
            let snap = snapshot::read(&file, None)?;
            for (k, e) in snap.field.energy_spectrum() {
                w.write_record([rec[0].to_string(), rec[1].to_string(), fmt(k), fmt(e)])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    written.push(p);

    // histograms of logged norms
    for name in HISTOGRAMS {
        let c = diag.col(name)?;
        let xs: Vec<f64> = diag.rows.iter().map(|r| r[c]).filter(|x| x.is_finite()).collect();
        let p = out_dir.join(format!("hist_{name}.csv"));
        let mut w = writer(&p, &["bin_left[code]", "bin_right[code]", "count[-]"].map(String::from))?;
        if !xs.is_empty() {
            let edges = fd_edges(&xs);
            let (counts, _) = bin(&xs, &edges);
            for (i, n) in counts.iter().enumerate() {
                w.write_record([fmt(edges[i]), fmt(edges[i + 1]), n.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        written.push(p);
    }

    // convergence tables
    let p = out_dir.join("convergence.csv");
    let mut w = writer(
        &p,
        &["table[-]", "dt[time]", "error[code]", "observed_order[-]"].map(String::from),
    )?;
    let mut tables: Vec<PathBuf> = std::fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("convergence_") && n.ends_with(".csv"))
        })
        .collect();
    tables.sort();
    for t in tables {
        let name = t
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .trim_start_matches("convergence_")
            .to_string();
        let tab = Table::read(&t)?;
        let (cd, ce) = (tab.col("dt")?, tab.col("error")?);
        let mut prev: Option<(f64, f64)> = None;
        for row in &tab.rows {
            let order = prev.map_or(f64::NAN, |(d0, e0)| (e0 / row[ce]).ln() / (d0 / row[cd]).ln());
            w.write_record([name.clone(), fmt(row[cd]), fmt(row[ce]), fmt(order)])
                .map_err(csv_err)?;
            prev = Some((row[cd], row[ce]));
        }
    }
    w.flush()?;
    written.push(p);
    Ok(written)
}

/// Write a `convergence_<name>.csv` table that [`emit_plots`] picks up.
pub fn write_convergence(dir: &Path, name: &str, rows: &[(f64, f64)]) -> Result<PathBuf> {
    let p = dir.join(format!("convergence_{name}.csv"));
    let mut w = writer(&p, &["dt[time]", "error[code]"].map(String::from))?;
    for (dt, e) in rows {
        w.write_record([fmt(*dt), fmt(*e)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(p)
}
