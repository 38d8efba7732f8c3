//! File formats: sweep-dataset CSVs, histogram CSVs, and the report
//! directory.
//!
//! All numeric text uses Rust's shortest round-trip float formatting, so
//! `write -> read -> write` is byte-identical; the report directory
//! contains no timestamps or absolute paths, so a rerun with the same
//! inputs and seed reproduces it byte for byte.
//!
//! * `rates.csv` — one row per (power, repeat):
//!   `power_mw,repeat,duration_s,singles_s,singles_i`
//! * `histograms.csv` — long-format nonzero bins:
//!   `power_mw,repeat,bin_center_ns,count`, histogram geometry in `#` header
//!   comments (`origin_s`, `bin_width_s`, `n_bins`)
//! * standalone histogram — `bin_center_ns,counts` with the same geometry
//!   comments, all bins written
//! * `rate_table.csv`, `fits.toml`, `report.toml` — reduced per-power
//!   rates, the quadratic fits, and the run summary

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coincidence::Histogram;
use crate::error::{Error, Result};
use crate::extract::GammaEstimate;
use crate::fitting::QuadFit;
use crate::montecarlo::{PowerGroup, PowerPointRecord, SweepDataset};
use crate::ratemodel::{IoConfig, SourceParams};
use crate::sweep::{AnalysisSettings, CharacterizationReport, ConfigResults, Provenance};

pub const RATES_FILE: &str = "rates.csv";
pub const HISTOGRAMS_FILE: &str = "histograms.csv";
pub const RATE_TABLE_FILE: &str = "rate_table.csv";
pub const FITS_FILE: &str = "fits.toml";
pub const REPORT_FILE: &str = "report.toml";

/// FNV-1a, used for the provenance hash of the input parameters.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn params_hash(params: &SourceParams) -> String {
    let text = toml::to_string(params).unwrap_or_default();
    format!("fnv1a:{:016x}", fnv1a64(text.as_bytes()))
}

fn data_err(path: &Path, row: Option<usize>, msg: impl Into<String>) -> Error {
    Error::Data {
        path: path.display().to_string(),
        row,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    row: usize,
    name: &str,
    text: &str,
) -> Result<T> {
    text.trim().parse().map_err(|_| {
        data_err(
            path,
            Some(row),
            format!("cannot parse {name} from {text:?}"),
        )
    })
}

/// Header comments of the form `# key = value`.
fn parse_header_comments(text: &str) -> HashMap<String, String> {
    let mut out = HashMap::new();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else {
            continue;
        };
        if let Some((k, v)) = rest.split_once('=') {
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    out
}

fn header_f64(path: &Path, headers: &HashMap<String, String>, key: &str) -> Result<f64> {
    let raw = headers
        .get(key)
        .ok_or_else(|| data_err(path, None, format!("missing `# {key} = ...` header")))?;
    raw.parse()
        .map_err(|_| data_err(path, None, format!("cannot parse header {key} = {raw:?}")))
}

// ---------------------------------------------------------------------------
// Sweep datasets
// ---------------------------------------------------------------------------

pub fn dataset_rates_csv(dataset: &SweepDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# io_config = {}", dataset.config().label());
    out.push_str("power_mw,repeat,duration_s,singles_s,singles_i\n");
    for group in dataset.groups() {
        for (ri, rec) in group.records.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                rec.p_laser_mw,
                ri + 1,
                rec.duration_s,
                rec.singles_s,
                rec.singles_i
            );
        }
    }
    out
}

pub fn dataset_histograms_csv(dataset: &SweepDataset) -> String {
    let mut out = String::new();
    let h0 = &dataset.groups()[0].records[0].histogram;
    let _ = writeln!(out, "# io_config = {}", dataset.config().label());
    let _ = writeln!(out, "# origin_s = {}", h0.origin_s());
    let _ = writeln!(out, "# bin_width_s = {}", h0.bin_width_s());
    let _ = writeln!(out, "# n_bins = {}", h0.len());
    out.push_str("power_mw,repeat,bin_center_ns,count\n");
    for group in dataset.groups() {
        for (ri, rec) in group.records.iter().enumerate() {
            for (i, &c) in rec.histogram.counts().iter().enumerate() {
                if c > 0 {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        rec.p_laser_mw,
                        ri + 1,
                        rec.histogram.bin_center_s(i) * 1e9,
                        c
                    );
                }
            }
        }
    }
    out
}

/// Write `rates.csv` and `histograms.csv` into `dir`.
pub fn write_dataset(dir: &Path, dataset: &SweepDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RATES_FILE), dataset_rates_csv(dataset))?;
    fs::write(dir.join(HISTOGRAMS_FILE), dataset_histograms_csv(dataset))?;
    Ok(())
}

fn parse_io_config(path: &Path, headers: &HashMap<String, String>) -> Result<IoConfig> {
    match headers.get("io_config").map(String::as_str) {
        Some("a") => Ok(IoConfig::A),
        Some("b") => Ok(IoConfig::B),
        Some(other) => Err(data_err(
            path,
            None,
            format!("io_config must be `a` or `b`, got {other:?}"),
        )),
        None => Err(data_err(path, None, "missing `# io_config = ...` header")),
    }
}

/// Read a sweep dataset from a directory holding `rates.csv` and
/// `histograms.csv`. Seeds are not part of the on-disk format; records are
/// read back with seed 0.
pub fn read_dataset(dir: &Path) -> Result<SweepDataset> {
    let rates_path = dir.join(RATES_FILE);
    let rates_text = fs::read_to_string(&rates_path)
        .map_err(|e| data_err(&rates_path, None, format!("cannot read: {e}")))?;
    let rate_headers = parse_header_comments(&rates_text);
    let config = parse_io_config(&rates_path, &rate_headers)?;

    struct Row {
        power: f64,
        repeat: u32,
        duration: f64,
        singles_s: u64,
        singles_i: u64,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in rates_text.lines().enumerate() {
        let row = lineno + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != "power_mw,repeat,duration_s,singles_s,singles_i" {
                return Err(data_err(
                    &rates_path,
                    Some(row),
                    format!("unexpected column header {line:?}"),
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(data_err(
                &rates_path,
                Some(row),
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        rows.push(Row {
            power: parse_field(&rates_path, row, "power_mw", fields[0])?,
            repeat: parse_field(&rates_path, row, "repeat", fields[1])?,
            duration: parse_field(&rates_path, row, "duration_s", fields[2])?,
            singles_s: parse_field(&rates_path, row, "singles_s", fields[3])?,
            singles_i: parse_field(&rates_path, row, "singles_i", fields[4])?,
        });
    }
    if rows.is_empty() {
        return Err(data_err(&rates_path, None, "no data rows"));
    }

    // Histograms: geometry from headers, nonzero bins from rows.
    let hist_path = dir.join(HISTOGRAMS_FILE);
    let hist_text = fs::read_to_string(&hist_path)
        .map_err(|e| data_err(&hist_path, None, format!("cannot read: {e}")))?;
    let hist_headers = parse_header_comments(&hist_text);
    if parse_io_config(&hist_path, &hist_headers)? != config {
        return Err(data_err(
            &hist_path,
            None,
            "io_config differs from rates.csv",
        ));
    }
    let origin_s = header_f64(&hist_path, &hist_headers, "origin_s")?;
    let bin_width_s = header_f64(&hist_path, &hist_headers, "bin_width_s")?;
    let n_bins = header_f64(&hist_path, &hist_headers, "n_bins")? as usize;

    let mut histograms: HashMap<(u64, u32), Histogram> = HashMap::new();
    let mut saw_header = false;
    for (lineno, line) in hist_text.lines().enumerate() {
        let row = lineno + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != "power_mw,repeat,bin_center_ns,count" {
                return Err(data_err(
                    &hist_path,
                    Some(row),
                    format!("unexpected column header {line:?}"),
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(data_err(
                &hist_path,
                Some(row),
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let power: f64 = parse_field(&hist_path, row, "power_mw", fields[0])?;
        let repeat: u32 = parse_field(&hist_path, row, "repeat", fields[1])?;
        let center_ns: f64 = parse_field(&hist_path, row, "bin_center_ns", fields[2])?;
        let count: u64 = parse_field(&hist_path, row, "count", fields[3])?;
        let center_s = center_ns * 1e-9;
        let idx_f = (center_s - origin_s) / bin_width_s - 0.5;
        let idx = idx_f.round();
        if (idx_f - idx).abs() > 0.25 || idx < 0.0 || idx >= n_bins as f64 {
            return Err(data_err(
                &hist_path,
                Some(row),
                format!("bin center {center_ns} ns does not lie on the bin grid"),
            ));
        }
        let hist = histograms
            .entry((power.to_bits(), repeat))
            .or_insert_with(|| {
                Histogram::new(origin_s, bin_width_s, n_bins).expect("validated geometry")
            });
        hist.add_to_bin(idx as usize, count);
    }

    // Assemble groups in file order, checking 1..R repeat indexing.
    let mut groups: Vec<PowerGroup> = Vec::new();
    for r in &rows {
        let need_new_group = groups
            .last()
            .map(|g: &PowerGroup| g.p_laser_mw != r.power)
            .unwrap_or(true);
        if need_new_group {
            groups.push(PowerGroup {
                p_laser_mw: r.power,
                records: Vec::new(),
            });
        }
        let group = groups.last_mut().expect("just pushed");
        let expected_repeat = group.records.len() as u32 + 1;
        if r.repeat != expected_repeat {
            return Err(data_err(
                &rates_path,
                None,
                format!(
                    "repeat index {} at power {} mW (expected {})",
                    r.repeat, r.power, expected_repeat
                ),
            ));
        }
        let histogram = histograms
            .remove(&(r.power.to_bits(), r.repeat))
            .map(Ok)
            .unwrap_or_else(|| Histogram::new(origin_s, bin_width_s, n_bins))?;
        group.records.push(PowerPointRecord {
            p_laser_mw: r.power,
            duration_s: r.duration,
            config,
            singles_s: r.singles_s,
            singles_i: r.singles_i,
            histogram,
            seed: 0,
        });
    }
    if !histograms.is_empty() {
        return Err(data_err(
            &hist_path,
            None,
            "histogram rows reference (power, repeat) pairs absent from rates.csv",
        ));
    }
    SweepDataset::new(config, groups)
        .map_err(|e| data_err(&rates_path, None, format!("inconsistent structure: {e}")))
}

// ---------------------------------------------------------------------------
// Standalone histograms
// ---------------------------------------------------------------------------

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# origin_s = {}", h.origin_s());
    let _ = writeln!(out, "# bin_width_s = {}", h.bin_width_s());
    let _ = writeln!(out, "# n_bins = {}", h.len());
    out.push_str("bin_center_ns,counts\n");
    for (i, &c) in h.counts().iter().enumerate() {
        let _ = writeln!(out, "{},{}", h.bin_center_s(i) * 1e9, c);
    }
    out
}

pub fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, histogram_csv(h))?;
    Ok(())
}

/// Read a standalone histogram CSV. Rows may be sparse; missing bins are
/// zero.
pub fn read_histogram_csv(path: &Path) -> Result<Histogram> {
    let text = fs::read_to_string(path)
        .map_err(|e| data_err(path, None, format!("cannot read: {e}")))?;
    let headers = parse_header_comments(&text);
    let origin_s = header_f64(path, &headers, "origin_s")?;
    let bin_width_s = header_f64(path, &headers, "bin_width_s")?;
    let n_bins = header_f64(path, &headers, "n_bins")? as usize;
    let mut h = Histogram::new(origin_s, bin_width_s, n_bins)?;
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != "bin_center_ns,counts" {
                return Err(data_err(
                    path,
                    Some(row),
                    format!("unexpected column header {line:?}"),
                ));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(data_err(
                path,
                Some(row),
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let center_ns: f64 = parse_field(path, row, "bin_center_ns", fields[0])?;
        let count: u64 = parse_field(path, row, "counts", fields[1])?;
        let idx_f = (center_ns * 1e-9 - origin_s) / bin_width_s - 0.5;
        let idx = idx_f.round();
        if (idx_f - idx).abs() > 0.25 || idx < 0.0 || idx >= n_bins as f64 {
            return Err(data_err(
                path,
                Some(row),
                format!("bin center {center_ns} ns does not lie on the bin grid"),
            ));
        }
        h.add_to_bin(idx as usize, count);
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Fit and report records
// ---------------------------------------------------------------------------

/// Serializable record of one quadratic fit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitRecord {
    pub a_hz_per_mw2: f64,
    pub b_hz_per_mw: f64,
    pub c_hz: f64,
    pub sigma_a_hz_per_mw2: f64,
    pub sigma_b_hz_per_mw: f64,
    pub sigma_c_hz: f64,
    /// Linear coefficient in units of its error; a diagnostic that should
    /// be consistent with zero for accidental-subtracted coincidences.
    pub b_zscore: f64,
    pub chi2: f64,
    pub dof: u64,
    pub covariance: Vec<Vec<f64>>,
    pub correlation: Vec<Vec<f64>>,
}

impl FitRecord {
    pub fn from_fit(fit: &QuadFit) -> Self {
        let rho = fit.correlation();
        FitRecord {
            a_hz_per_mw2: fit.a_hz_per_mw2,
            b_hz_per_mw: fit.b_hz_per_mw,
            c_hz: fit.c_hz,
            sigma_a_hz_per_mw2: fit.sigma_a(),
            sigma_b_hz_per_mw: fit.sigma_b(),
            sigma_c_hz: fit.sigma_c(),
            b_zscore: if fit.sigma_b() > 0.0 {
                fit.b_hz_per_mw / fit.sigma_b()
            } else {
                0.0
            },
            chi2: fit.chi2,
            dof: fit.dof as u64,
            covariance: fit.covariance.iter().map(|r| r.to_vec()).collect(),
            correlation: rho.iter().map(|r| r.to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitsFile {
    pub signal: FitRecord,
    pub idler: FitRecord,
    pub coincidence: FitRecord,
}

impl FitsFile {
    fn from_results(cr: &ConfigResults) -> Self {
        FitsFile {
            signal: FitRecord::from_fit(&cr.fits.signal),
            idler: FitRecord::from_fit(&cr.fits.idler),
            coincidence: FitRecord::from_fit(&cr.fits.coincidence),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SourceInfo {
    rep_rate_hz: f64,
    eta_coupling: f64,
    eta_coupling_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GammaSingleEntry {
    config: IoConfig,
    estimate: GammaEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CarSummaryEntry {
    config: IoConfig,
    window_ns: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_car: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_car_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_car_at_power_mw: Option<f64>,
    /// Powers whose accidental window was empty (CAR undefined there).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    undefined_at_powers_mw: Vec<f64>,
}

/// Top-level `report.toml` payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportSummary {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    provenance: Provenance,
    source: SourceInfo,
    analysis: AnalysisSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_dual: Option<GammaEstimate>,
    gamma_single: Vec<GammaSingleEntry>,
    car_summary: Vec<CarSummaryEntry>,
}

pub fn rate_table_csv(cr: &ConfigResults) -> String {
    let mut out = String::new();
    out.push_str(
        "power_mw,scr_s_hz,scr_s_err_hz,scr_i_hz,scr_i_err_hz,ccr_hz,ccr_err_hz,car,car_err\n",
    );
    for row in &cr.rows {
        let (car, car_err) = match &row.car {
            Some(est) => (est.car.to_string(), est.sigma_car.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.p_laser_mw,
            row.signal.rate_hz,
            row.signal.std_err_hz,
            row.idler.rate_hz,
            row.idler.std_err_hz,
            row.coincidence.rate_hz,
            row.coincidence.std_err_hz,
            car,
            car_err
        );
    }
    out
}

fn toml_string<T: Serialize>(value: &T, what: &str) -> Result<String> {
    toml::to_string(value)
        .map_err(|e| Error::Config(format!("cannot serialize {what}: {e}")))
}

pub fn fits_toml(cr: &ConfigResults) -> Result<String> {
    toml_string(&FitsFile::from_results(cr), "fit records")
}

pub fn report_toml(report: &CharacterizationReport) -> Result<String> {
    let summary = ReportSummary {
        warnings: report.warnings.clone(),
        provenance: report.provenance.clone(),
        source: SourceInfo {
            rep_rate_hz: report.rep_rate_hz,
            eta_coupling: report.eta_coupling,
            eta_coupling_sigma: report.eta_coupling_sigma,
        },
        analysis: report.analysis.clone(),
        gamma_dual: report.gamma_dual.clone(),
        gamma_single: report
            .gamma_single
            .iter()
            .map(|(config, estimate)| GammaSingleEntry {
                config: *config,
                estimate: estimate.clone(),
            })
            .collect(),
        car_summary: report
            .per_config
            .iter()
            .map(|cr| CarSummaryEntry {
                config: cr.config,
                window_ns: report.analysis.car_window_s * 1e9,
                max_car: cr.max_car.as_ref().map(|(_, est)| est.car),
                max_car_sigma: cr.max_car.as_ref().map(|(_, est)| est.sigma_car),
                max_car_at_power_mw: cr.max_car.as_ref().map(|(p, _)| *p),
                undefined_at_powers_mw: cr
                    .rows
                    .iter()
                    .filter(|r| r.car_undefined.is_some())
                    .map(|r| r.p_laser_mw)
                    .collect(),
            })
            .collect(),
    };
    toml_string(&summary, "report summary")
}

/// Directory of one configuration's outputs inside a report.
pub fn config_dir(outdir: &Path, config: IoConfig) -> PathBuf {
    outdir.join(format!("config_{}", config.label()))
}

/// Write the full report directory.
///
/// `write_datasets` controls whether the raw per-point data (`rates.csv`,
/// `histograms.csv`) is included; the analyze command skips it since it
/// would only duplicate its inputs.
pub fn write_report_dir(
    outdir: &Path,
    report: &CharacterizationReport,
    write_datasets: bool,
) -> Result<()> {
    fs::create_dir_all(outdir)?;
    fs::write(outdir.join(REPORT_FILE), report_toml(report)?)?;
    for cr in &report.per_config {
        let dir = config_dir(outdir, cr.config);
        fs::create_dir_all(&dir)?;
        if write_datasets {
            write_dataset(&dir, &cr.dataset)?;
        }
        fs::write(dir.join(RATE_TABLE_FILE), rate_table_csv(cr))?;
        fs::write(dir.join(FITS_FILE), fits_toml(cr)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{simulate_sweep, TaggerSpec};
    use crate::sweep::{self, AnalysisSettings, SweepPlan};

    fn params() -> SourceParams {
        SourceParams {
            gamma_eff_mhz_per_mw2: 14.7,
            eta_gc_a: 0.1,
            eta_gc_b: 0.1,
            eta_path_s: 0.398,
            eta_path_i: 0.398,
            leak_s_hz_per_mw: 2.5e4,
            leak_i_hz_per_mw: 2.5e4,
            dark_s_hz: 200.0,
            dark_i_hz: 200.0,
            rep_rate_hz: 50e6,
            jitter_fwhm_s: 1.2e-9,
        }
    }

    fn small_dataset() -> SweepDataset {
        let plan = SweepPlan {
            powers_mw: vec![0.3, 0.8, 1.5, 3.0],
            integration_times_s: vec![30.0; 4],
            repeats: 3,
            configs: vec![IoConfig::A],
        };
        simulate_sweep(&params(), &plan, IoConfig::A, 42, &TaggerSpec::default()).unwrap()
    }

    #[test]
    fn dataset_csv_round_trips_byte_identically() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        // Write -> read -> write must reproduce the files byte for byte.
        let rates1 = fs::read(dir.path().join(RATES_FILE)).unwrap();
        let hist1 = fs::read(dir.path().join(HISTOGRAMS_FILE)).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_dataset(dir2.path(), &back).unwrap();
        assert_eq!(rates1, fs::read(dir2.path().join(RATES_FILE)).unwrap());
        assert_eq!(hist1, fs::read(dir2.path().join(HISTOGRAMS_FILE)).unwrap());
        // Counts and structure survive the trip.
        assert_eq!(back.groups().len(), ds.groups().len());
        for (g1, g2) in ds.groups().iter().zip(back.groups()) {
            for (r1, r2) in g1.records.iter().zip(&g2.records) {
                assert_eq!(r1.singles_s, r2.singles_s);
                assert_eq!(r1.histogram, r2.histogram);
                assert_eq!(r1.duration_s, r2.duration_s);
            }
        }
    }

    #[test]
    fn malformed_rows_are_reported_with_row_numbers() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let path = dir.path().join(RATES_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("not,a,valid,row\n");
        fs::write(&path, text).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::Data { row: Some(r), .. }) => {
                // 1 comment + 1 header + 12 data rows, the bad row is 15th.
                assert_eq!(r, 15);
            }
            other => panic!("expected row-tagged data error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_repeat_counts_are_structural_errors() {
        let ds = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let path = dir.path().join(RATES_FILE);
        let text = fs::read_to_string(&path).unwrap();
        // Drop the last data row: the final group loses a repeat.
        let trimmed: Vec<&str> = text.trim_end().lines().collect();
        fs::write(&path, format!("{}\n", trimmed[..trimmed.len() - 1].join("\n"))).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Data { .. })));
    }

    #[test]
    fn standalone_histogram_round_trips() {
        let mut h = Histogram::new(-70e-9, 0.1e-9, 1400).unwrap();
        h.add_to_bin(700, 66);
        h.add_to_bin(500, 2);
        h.add_to_bin(900, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hist.csv");
        write_histogram_csv(&path, &h).unwrap();
        let back = read_histogram_csv(&path).unwrap();
        assert_eq!(h, back);
        // Byte-identical second write.
        let text1 = fs::read(&path).unwrap();
        let path2 = dir.path().join("hist2.csv");
        write_histogram_csv(&path2, &back).unwrap();
        assert_eq!(text1, fs::read(&path2).unwrap());
    }

    #[test]
    fn report_directory_layout_and_determinism() {
        let p = params();
        let plan = SweepPlan {
            powers_mw: vec![0.3, 0.7, 1.4, 3.0],
            integration_times_s: vec![30.0; 4],
            repeats: 3,
            configs: vec![IoConfig::A, IoConfig::B],
        };
        let analysis = AnalysisSettings::default();
        let report = sweep::run_pipeline(&p, &plan, &analysis, 1).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_report_dir(d1.path(), &report, true).unwrap();
        let report2 = sweep::run_pipeline(&p, &plan, &analysis, 1).unwrap();
        write_report_dir(d2.path(), &report2, true).unwrap();
        for rel in [
            REPORT_FILE.to_string(),
            format!("config_a/{RATES_FILE}"),
            format!("config_a/{HISTOGRAMS_FILE}"),
            format!("config_a/{RATE_TABLE_FILE}"),
            format!("config_a/{FITS_FILE}"),
            format!("config_b/{FITS_FILE}"),
        ] {
            let b1 = fs::read(d1.path().join(&rel)).unwrap();
            let b2 = fs::read(d2.path().join(&rel)).unwrap();
            assert_eq!(b1, b2, "{rel} differs between identical runs");
            assert!(!b1.is_empty());
        }
        // report.toml parses back into the summary structure and
        // re-serializes byte-identically.
        let text = fs::read_to_string(d1.path().join(REPORT_FILE)).unwrap();
        let parsed: super::ReportSummary = toml::from_str(&text).unwrap();
        assert!(parsed.gamma_dual.is_some());
        assert_eq!(parsed.gamma_single.len(), 2);
        assert_eq!(text, toml::to_string(&parsed).unwrap());

        // fits.toml round-trips through the typed record.
        let fits_text = fs::read_to_string(d1.path().join("config_a").join(FITS_FILE)).unwrap();
        let fits: FitsFile = toml::from_str(&fits_text).unwrap();
        let again = toml::to_string(&fits).unwrap();
        assert_eq!(fits_text, again);
    }

    #[test]
    fn params_hash_is_stable_and_sensitive() {
        let p = params();
        assert_eq!(params_hash(&p), params_hash(&p));
        let mut q = p.clone();
        q.dark_s_hz += 1.0;
        assert_ne!(params_hash(&p), params_hash(&q));
    }
}
