use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sprint_core::detectors::{simulate_clicks, ClickHistogram};
use sprint_core::dynamics::{
    build_model_with_coupling, evolve_master, model_space, read_jump_times, trajectory_statistics, write_jump_log,
    Channel, MasterOptions,
};
use sprint_core::experiment::{
    compare_with_reference, effective_params, run_scenario, sample_coupling, simulate_ensemble, truncation_check,
    Coupling, ReferenceTable,
};
use sprint_core::fockops::{apply_annihilation, apply_extraction, PhotonNumberDistribution};
use sprint_core::reconstruct::reconstruct_with_uncertainty;
use sprint_core::rng::derive;
use sprint_core::validation::{run_validation, ValidationOptions};
use sprint_core::{analytic, Config, Error, Result};

use crate::staging::Staging;
use crate::{Common, Transform};

pub struct Outcome {
    pub summary: Value,
    pub passed: bool,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, passed: true }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::from_json(&fs::read_to_string(path).map_err(io_err(path))?)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.numerics.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn require_out(common: &Common, command: &str) -> Result<PathBuf> {
    common
        .out
        .clone()
        .ok_or_else(|| Error::Domain(format!("`{command}` needs --out DIR")))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn json_bytes(value: &Value) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value");
    text.push('\n');
    text.into_bytes()
}

/// Writes `files` into `dir` atomically and returns their names.
fn publish(common: &Common, dir: &Path, files: Vec<(&str, Vec<u8>)>) -> Result<Vec<String>> {
    let staging = Staging::new(dir, common.force)?;
    let mut names = Vec::new();
    for (name, bytes) in files {
        staging.write(name, &bytes)?;
        names.push(name.to_string());
    }
    staging.commit()?;
    Ok(names)
}

pub fn analytic(common: &Common) -> Result<Outcome> {
    let config = load_config(common)?;
    let summary = serde_json::to_value(analytic::report(&config.physical)?)?;
    if let Some(dir) = &common.out {
        publish(common, dir, vec![("analytic.json", json_bytes(&summary))])?;
    }
    Ok(Outcome::ok(summary))
}

pub fn fockops(
    common: &Common,
    input: Option<PathBuf>,
    poisson: Option<f64>,
    thermal: Option<f64>,
    fock: Option<usize>,
    transform: Transform,
    eta: f64,
) -> Result<Outcome> {
    let dist = match (input, poisson, thermal, fock) {
        (Some(path), ..) => PhotonNumberDistribution::read_csv(fs::File::open(&path).map_err(io_err(&path))?)?,
        (None, Some(mean), None, None) => PhotonNumberDistribution::poisson(mean)?,
        (None, None, Some(mean), None) => PhotonNumberDistribution::thermal(mean)?,
        (None, None, None, Some(n)) => PhotonNumberDistribution::fock(n),
        _ => {
            return Err(Error::Domain(
                "give exactly one of --input, --poisson, --thermal, --fock".into(),
            ))
        }
    };
    let mut summary = json!({ "input": dist.stats(), "transform": format!("{transform:?}").to_lowercase() });
    let output = match transform {
        Transform::Annihilate => {
            let a = apply_annihilation(&dist)?;
            summary["branch_weight"] = json!(a.branch_weight);
            a.dist
        }
        Transform::Extract => apply_extraction(&dist),
        Transform::Thin => {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::Domain(format!("--eta must lie in [0, 1], got {eta}")));
            }
            dist.thin(eta)
        }
        Transform::Stats => dist.clone(),
    };
    summary["output"] = serde_json::to_value(output.stats())?;
    summary["total_variation"] = json!(output.total_variation(&dist));
    if let Some(dir) = &common.out {
        let csv = csv_bytes(|b| output.write_csv(b))?;
        summary["files"] = json!(publish(common, dir, vec![("distribution.csv", csv)])?);
    }
    Ok(Outcome::ok(summary))
}

pub fn simulate(common: &Common, n_bar: Option<f64>) -> Result<Outcome> {
    let out = require_out(common, "simulate")?;
    let config = load_config(common)?;
    let numerics = &config.numerics;
    let scenario = &config.scenario;
    let params = effective_params(&config.physical, scenario);
    let pulse = match n_bar {
        Some(n) => config.pulse.with_n_bar(n),
        None => config.pulse.clone(),
    };
    pulse.validate()?;
    let seed = numerics.master_seed;
    let coupling = if !scenario.atom_present {
        Coupling::Fixed(0.0)
    } else if scenario.g_spread {
        Coupling::PerTrajectory(sample_coupling(params.g_mean, params.g_sd, numerics.n_traj, seed))
    } else {
        Coupling::Fixed(params.g_mean)
    };
    let records = simulate_ensemble(&params, &coupling, &pulse, numerics)?;
    let stats = trajectory_statistics(&records, (pulse.t_start, pulse.t_end), scenario.bin_width)?;
    let g_master = if scenario.atom_present { params.g_mean } else { 0.0 };
    let model = build_model_with_coupling(&params, g_master, &pulse, &model_space(&params, numerics))?;
    let series = evolve_master(&model, &MasterOptions::from(numerics))?;
    let truncation = if scenario.convergence_check {
        Some(truncation_check(&params, &pulse, numerics)?)
    } else {
        None
    };

    let mut trajectories = BTreeMap::new();
    let mut master = BTreeMap::new();
    for ch in Channel::ALL {
        let port = stats.port(ch);
        trajectories.insert(ch.to_string(), json!({ "mean": port.mean, "se": port.se, "g2": port.g2, "g2_se": port.g2_se }));
        master.insert(ch.to_string(), series.mean(ch));
    }
    let mut summary = json!({
        "master_seed": seed,
        "parameter_hash": config.parameter_hash(),
        "n_traj": numerics.n_traj,
        "n_bar": pulse.n_bar,
        "coupling": match &coupling { Coupling::Fixed(g) => json!(g), Coupling::PerTrajectory(_) => json!("per-trajectory") },
        "trajectories": trajectories,
        "trajectory_total": { "mean": stats.mean_total, "se": stats.se_total },
        "master_equation": master,
        "master_total": series.mean_total(),
        "trace_drift": series.trace_drift,
        "ordering": stats.ordering,
        "truncation": truncation,
    });
    let files = vec![
        ("flux.csv", csv_bytes(|b| series.write_csv(b))?),
        ("jumps.csv", csv_bytes(|b| write_jump_log(&records, b))?),
        ("summary.json", json_bytes(&summary)),
    ];
    summary["files"] = json!(publish(common, &out, files)?);
    Ok(Outcome::ok(summary))
}

pub fn clicks(common: &Common, jumps: &Path, trajectories: Option<usize>) -> Result<Outcome> {
    let out = require_out(common, "clicks")?;
    let config = load_config(common)?;
    let n_traj = trajectories.unwrap_or(config.numerics.n_traj);
    let seed = config.numerics.master_seed;
    let det = &config.detectors;
    let mut files = Vec::new();
    let mut ports = BTreeMap::new();
    for (tag, channel, name) in [(0u64, Channel::R, "clicks_R.csv"), (1, Channel::T, "clicks_T.csv")] {
        let times = read_jump_times(fs::File::open(jumps).map_err(io_err(jumps))?, n_traj, channel)?;
        let clicks = simulate_clicks(&times, det, derive(seed, tag));
        let hist = ClickHistogram::from_click_counts(clicks.iter().map(|c| c.len()), det.max_clicks());
        let photons: usize = times.iter().map(Vec::len).sum();
        ports.insert(
            channel.to_string(),
            json!({ "mean_clicks": hist.mean_clicks(), "photons": photons, "counts": hist.counts }),
        );
        files.push((name, csv_bytes(|b| hist.write_csv(b))?));
    }
    let mut summary = json!({ "master_seed": seed, "trajectories": n_traj, "detectors": det, "ports": ports });
    summary["files"] = json!(publish(common, &out, files)?);
    Ok(Outcome::ok(summary))
}

pub fn reconstruct(common: &Common, histogram: &Path, bootstrap: Option<usize>, k_max: Option<usize>) -> Result<Outcome> {
    let out = require_out(common, "reconstruct")?;
    let config = load_config(common)?;
    let hist = ClickHistogram::read_csv(fs::File::open(histogram).map_err(io_err(histogram))?)?;
    let rounds = bootstrap.unwrap_or(config.scenario.bootstrap);
    let seed = config.numerics.master_seed;
    let rec = reconstruct_with_uncertainty(&hist, &config.detectors, rounds, derive(seed, 0x7265_636f), k_max)?;
    let mut summary = json!({
        "master_seed": seed,
        "repetitions": hist.repetitions(),
        "mean_clicks": hist.mean_clicks(),
        "k_max": rec.k_max,
        "bootstrap_rounds": rec.bootstrap_rounds,
        "lambda": rec.selection.lambda,
        "lambda_warning": rec.selection.warning,
        "tolerance": rec.selection.tolerance,
        "chi2": rec.solution.chi2,
        "normalization_residual": rec.solution.normalization_residual,
        "mean_residual": rec.solution.mean_residual,
        "stationarity_residual": rec.solution.stationarity_residual,
        "mean_photons": rec.solution.x.mean(),
    });
    let files = vec![
        ("distribution.csv", csv_bytes(|b| rec.write_csv(b))?),
        ("report.json", json_bytes(&summary)),
    ];
    summary["files"] = json!(publish(common, &out, files)?);
    Ok(Outcome::ok(summary))
}

pub fn figures(common: &Common, reference: Option<PathBuf>, write_reference: Option<PathBuf>) -> Result<Outcome> {
    let out = require_out(common, "figures")?;
    let config = load_config(common)?;
    let artifacts = run_scenario(&config)?;
    let staging = Staging::new(&out, common.force)?;
    let files = artifacts.write(staging.path())?;
    staging.commit()?;

    let mut summary = json!({
        "master_seed": artifacts.master_seed,
        "parameter_hash": artifacts.parameter_hash,
        "files": files,
        "truncation": artifacts.truncation,
    });
    if let Some(path) = write_reference {
        let table = ReferenceTable::from_artifacts(&artifacts, 3.0);
        let text = serde_json::to_string_pretty(&table)? + "\n";
        fs::write(&path, text).map_err(io_err(&path))?;
        summary["reference_written"] = json!(path);
    }
    let mut passed = true;
    if let Some(path) = reference {
        let table: ReferenceTable = serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
        let report = compare_with_reference(&artifacts.quantities(), &table);
        passed = report.passed;
        for row in report.rows.iter().filter(|r| !r.pass) {
            eprintln!(
                "reference mismatch: {} expected {} ± {} got {:?}",
                row.name, row.expected, row.tolerance, row.actual
            );
        }
        summary["comparison"] = serde_json::to_value(&report)?;
    }
    Ok(Outcome { summary, passed })
}

pub fn validate(common: &Common, quick: bool) -> Result<Outcome> {
    let config = load_config(common)?;
    let options = if quick {
        ValidationOptions {
            n_traj: 200,
            click_samples: 100_000,
            master_seed: config.numerics.master_seed,
            ..ValidationOptions::default()
        }
    } else {
        ValidationOptions {
            n_traj: config.numerics.n_traj,
            master_seed: config.numerics.master_seed,
            ..ValidationOptions::default()
        }
    };
    let report = run_validation(&config.physical, &config.numerics, &options);
    for check in &report.checks {
        eprintln!(
            "{} {} ({:.1} s): {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.seconds,
            check.detail
        );
    }
    let mut summary = serde_json::to_value(&report)?;
    if let Some(dir) = &common.out {
        summary["files"] = json!(publish(common, dir, vec![("validation.json", json_bytes(&summary))])?);
    }
    Ok(Outcome {
        passed: report.passed,
        summary,
    })
}
