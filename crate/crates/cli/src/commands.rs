//! Implementations of the CLI subcommands.

use std::path::{Path, PathBuf};

use pairchar::config::{Mode, RunConfig};
use pairchar::error::{Error, Result};
use pairchar::montecarlo::SweepDataset;
use pairchar::sweep::Provenance;
use pairchar::{coincidence, dataio, sweep};

/// Simulate per the config and write the full report directory, including
/// the raw datasets and the resolved configuration for reproducibility.
pub fn simulate(config_path: &Path, seed: Option<u64>, output_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = Some(s);
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if cfg.mode != Mode::Simulate {
        return Err(Error::Config(
            "simulate was invoked but the config has mode = \"analyze\"".into(),
        ));
    }
    cfg.validate()?;
    let params = cfg.params.as_ref().expect("validated");
    let plan = cfg.plan.as_ref().expect("validated").resolve()?;
    let settings = cfg.analysis.to_settings();
    let master_seed = cfg.seed.expect("validated");

    let mut report = sweep::run_pipeline(params, &plan, &settings, master_seed)?;
    report.provenance.params_hash = Some(dataio::params_hash(params));

    dataio::write_report_dir(&cfg.output_dir, &report, true)?;
    // Echo the resolved run recipe next to the data. The output path is
    // normalized to the report directory itself so reruns into different
    // directories stay byte-identical.
    let mut echo = cfg.clone();
    echo.output_dir = ".".into();
    std::fs::write(
        cfg.output_dir.join("run_config.toml"),
        toml::to_string(&echo).map_err(|e| Error::Config(format!("cannot echo config: {e}")))?,
    )?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("report written to {}", cfg.output_dir.display());
    Ok(())
}

/// Analyze existing dataset directories per the config.
pub fn analyze(config_path: &Path, output_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if cfg.mode != Mode::Analyze {
        return Err(Error::Config(
            "analyze was invoked but the config has mode = \"simulate\"".into(),
        ));
    }
    cfg.validate()?;
    let inputs = cfg.inputs.as_ref().expect("validated");

    let mut datasets: Vec<SweepDataset> = Vec::new();
    let mut input_names = Vec::new();
    for dir in [&inputs.config_a_dir, &inputs.config_b_dir].into_iter().flatten() {
        datasets.push(dataio::read_dataset(dir)?);
        input_names.push(dir.display().to_string());
    }
    let settings = cfg.analysis.to_settings();
    let eta = inputs.eta_coupling;
    let eta_sigma = inputs
        .eta_coupling_sigma
        .unwrap_or(settings.eta_coupling_sigma_rel * eta);
    let provenance = Provenance {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: "analyze".to_string(),
        master_seed: None,
        params_hash: None,
        inputs: input_names,
    };
    let report = sweep::analyze_datasets(
        &datasets,
        &settings,
        inputs.rep_rate_hz,
        eta,
        eta_sigma,
        provenance,
    )?;

    dataio::write_report_dir(&cfg.output_dir, &report, false)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("report written to {}", cfg.output_dir.display());
    Ok(())
}

/// CAR of a single histogram, printed as a small record on stdout.
///
/// An empty accidental window still prints both raw counts (a ratio would
/// be fabricated) and then exits through the fit-failure path.
pub fn car(histogram_path: &Path, window_ns: f64, rep_period_ns: f64) -> Result<()> {
    let h = dataio::read_histogram_csv(histogram_path)?;
    match coincidence::compute_car(&h, rep_period_ns * 1e-9, window_ns * 1e-9) {
        Ok(est) => {
            println!("car = {}", est.car);
            println!("sigma_car = {}", est.sigma_car);
            println!("window_ns = {window_ns}");
            println!("rep_period_ns = {rep_period_ns}");
            println!("central_counts = {}", est.central_counts);
            println!("accidental_counts = {}", est.accidental_counts);
            Ok(())
        }
        Err(Error::UndefinedCar {
            central_counts,
            accidental_counts,
        }) => {
            println!("car = \"undefined\"");
            println!("window_ns = {window_ns}");
            println!("rep_period_ns = {rep_period_ns}");
            println!("central_counts = {central_counts}");
            println!("accidental_counts = {accidental_counts}");
            println!("note = \"accidental window is empty; raw counts reported instead of a ratio\"");
            Err(Error::UndefinedCar {
                central_counts,
                accidental_counts,
            })
        }
        Err(e) => Err(e),
    }
}
