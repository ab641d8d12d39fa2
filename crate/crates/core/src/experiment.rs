//! Scenario harness: trajectories → detectors → reconstruction, producing the
//! figure datasets with their provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analytic;
use crate::detectors::{simulate_clicks, ClickHistogram};
use crate::dynamics::ode::StepControl;
use crate::dynamics::{
    build_model_with_coupling, evolve_master, model_space, run_ensemble, trajectory_statistics,
    Channel, JointBin, MasterOptions, TrajectoryRecord, TrajectoryStatistics,
};
use crate::error::{Error, Result};
use crate::fockops::{apply_extraction, PhotonNumberDistribution};
use crate::hilbert::AtomLevel;
use crate::multilevel::MultilevelSpec;
use crate::params::{Branching, Config, NumericsConfig, PhysicalParams, PulseSpec};
use crate::reconstruct::{reconstruct_with_uncertainty, Reconstruction};
use crate::rng::{derive, stream, Purpose};

/// Declarative description of a figure run. Imperfection toggles switch the
/// corresponding configured effect on (as configured) or off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub sweep: Vec<f64>,
    pub atom_present: bool,
    pub g_spread: bool,
    pub p_imp: bool,
    pub multilevel: bool,
    pub dark_branching: bool,
    pub detector_model: bool,
    pub reconstruction: bool,
    /// Discard trajectories whose atom ends in the dark level.
    pub postselect_redetect: bool,
    pub bootstrap: usize,
    /// Sweep points for which photon-number distributions are produced.
    pub distributions: Vec<f64>,
    /// Sweep point used for the time-resolved flux dataset.
    pub fig3_n_bar: f64,
    /// Time-histogram bin width, ns.
    pub bin_width: f64,
    pub convergence_check: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            sweep: vec![0.2, 0.5, 1.0, 2.5, 5.8, 11.3],
            atom_present: true,
            g_spread: true,
            p_imp: true,
            multilevel: true,
            dark_branching: true,
            detector_model: true,
            reconstruction: true,
            postselect_redetect: false,
            bootstrap: 100,
            distributions: vec![2.5, 5.8, 11.3],
            fig3_n_bar: 11.3,
            bin_width: 2.0,
            convergence_check: true,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::invariant("scenario.sweep", "[]", "sweep must not be empty"));
        }
        for &n in self.sweep.iter().chain(&self.distributions) {
            if !n.is_finite() || n < 0.0 {
                return Err(Error::invariant("scenario.sweep", n, "photon numbers must be >= 0"));
            }
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::invariant("scenario.bin_width", self.bin_width, "must be > 0"));
        }
        if self.reconstruction && self.bootstrap < 2 {
            return Err(Error::invariant("scenario.bootstrap", self.bootstrap, "need at least 2 rounds"));
        }
        Ok(())
    }

    fn in_sweep(&self, n: f64) -> Option<usize> {
        self.sweep.iter().position(|&s| (s - n).abs() < 1e-9)
    }
}

/// Physical parameters after applying the scenario toggles.
pub fn effective_params(physical: &PhysicalParams, scenario: &ScenarioSpec) -> PhysicalParams {
    let mut p = physical.clone();
    if !scenario.p_imp {
        p.p_imp = 0.0;
    }
    if !scenario.multilevel {
        p.multilevel = MultilevelSpec {
            enabled: false,
            ..p.multilevel
        };
    }
    if !scenario.dark_branching && p.branching.has_dark() {
        p.branching = Branching::IDEAL;
    }
    p
}

/// Gaussian couplings, redrawn below 1 MHz.
pub fn sample_coupling(g_mean: f64, g_sd: f64, count: usize, seed: u64) -> Vec<f64> {
    if g_sd <= 0.0 {
        return vec![g_mean; count];
    }
    let normal = Normal::new(g_mean, g_sd).expect("finite Gaussian parameters");
    let mut rng = stream(seed, Purpose::Coupling, 0);
    (0..count)
        .map(|_| {
            for _ in 0..100_000 {
                let g = normal.sample(&mut rng);
                if g >= 1.0 {
                    return g;
                }
            }
            1.0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Fixed(f64),
    PerTrajectory(Vec<f64>),
}

/// Runs `numerics.n_traj` trajectories with the given coupling assignment.
pub fn simulate_ensemble(
    params: &PhysicalParams,
    coupling: &Coupling,
    pulse: &PulseSpec,
    numerics: &NumericsConfig,
) -> Result<Vec<TrajectoryRecord>> {
    let space = model_space(params, numerics);
    let control = StepControl::new(numerics.tolerance, numerics.dt);
    match coupling {
        Coupling::Fixed(g) => {
            let model = Arc::new(build_model_with_coupling(params, *g, pulse, &space)?);
            run_ensemble(numerics.n_traj, numerics.master_seed, &control, |_| Ok(model.clone()))
        }
        Coupling::PerTrajectory(gs) => {
            if gs.len() < numerics.n_traj {
                return Err(Error::domain("fewer sampled couplings than trajectories"));
            }
            run_ensemble(numerics.n_traj, numerics.master_seed, &control, |i| {
                Ok(Arc::new(build_model_with_coupling(params, gs[i], pulse, &space)?))
            })
        }
    }
}

/// Photon-number distribution of one port from trajectory counts.
pub fn count_distribution(stats: &TrajectoryStatistics, channel: Channel) -> Result<PhotonNumberDistribution> {
    PhotonNumberDistribution::from_counts(&stats.port(channel).count_histogram)
}

/// Fraction of trajectories with at least one reflected photon.
pub fn extraction_probability(stats: &TrajectoryStatistics) -> f64 {
    let h = &stats.port(Channel::R).count_histogram;
    1.0 - h[0] as f64 / stats.n_traj as f64
}

/// `Thin_t[w ŝ Poisson(n̄) + (1 − w) Poisson(n̄)]`: the input with one photon
/// extracted with probability `w`, then the remaining photons transmitted
/// independently with probability `transmission`.
pub fn shifted_mixture(n_bar: f64, w: f64, transmission: f64) -> Result<PhotonNumberDistribution> {
    let input = PhotonNumberDistribution::poisson(n_bar)?;
    let extracted = apply_extraction(&input);
    Ok(extracted.mix(w, &input).thin(transmission))
}

#[derive(Debug, Clone, Serialize)]
pub struct PointResult {
    pub n_bar: f64,
    pub atom: TrajectoryStatistics,
    pub empty: TrajectoryStatistics,
    pub clicks_r: Option<ClickHistogram>,
    pub clicks_t: Option<ClickHistogram>,
}

impl PointResult {
    pub fn mean(&self, atom: bool, channel: Channel) -> (f64, f64) {
        let s = if atom { &self.atom } else { &self.empty };
        let p = s.port(channel);
        (p.mean, p.se)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionResult {
    pub n_bar: f64,
    pub p_in: Vec<f64>,
    pub p_sim: Vec<f64>,
    pub p_out: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub reconstruction: Option<Reconstruction>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationCheck {
    pub n_bar: f64,
    pub fock: (usize, usize),
    pub means: BTreeMap<String, (f64, f64)>,
    pub max_relative_change: f64,
}

pub const TRUNCATION_LIMIT: f64 = 0.01;

/// Master-equation means at the configured cutoffs and one above.
pub fn truncation_check(params: &PhysicalParams, pulse: &PulseSpec, numerics: &NumericsConfig) -> Result<TruncationCheck> {
    let run = |fock_a: usize, fock_b: usize, g: f64| -> Result<(f64, f64)> {
        let n = NumericsConfig {
            fock_a,
            fock_b,
            ..numerics.clone()
        };
        let model = build_model_with_coupling(params, g, pulse, &model_space(params, &n))?;
        let series = evolve_master(&model, &MasterOptions::from(&n))?;
        Ok((series.mean(Channel::R), series.mean(Channel::T)))
    };
    let (na, nb) = (numerics.fock_a, numerics.fock_b);
    let base = run(na, nb, params.g_mean)?;
    let more = run(na + 1, nb + 1, params.g_mean)?;
    let empty_base = run(na, nb, 0.0)?;
    let empty_more = run(na + 1, nb + 1, 0.0)?;
    let mut means = BTreeMap::new();
    means.insert("meanR_atom".to_string(), (base.0, more.0));
    means.insert("meanT_atom".to_string(), (base.1, more.1));
    means.insert("meanT_empty".to_string(), (empty_base.1, empty_more.1));
    let floor = 1e-3 * pulse.n_bar.max(1e-3);
    let max_relative_change = means
        .values()
        .map(|(a, b)| (a - b).abs() / b.abs().max(floor))
        .fold(0.0, f64::max);
    let check = TruncationCheck {
        n_bar: pulse.n_bar,
        fock: (na, nb),
        means,
        max_relative_change,
    };
    if max_relative_change > TRUNCATION_LIMIT {
        return Err(Error::Numerical(format!(
            "means changed by {:.2}% when raising the Fock cutoffs to ({}, {}); increase numerics.fock_a and numerics.fock_b",
            100.0 * max_relative_change,
            na + 1,
            nb + 1
        )));
    }
    Ok(check)
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig3a {
    pub n_bar: f64,
    pub t_ns: Vec<f64>,
    pub flux_r: Vec<f64>,
    pub flux_t: Vec<f64>,
    pub flux_t_empty: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub config: Value,
    pub parameter_hash: String,
    pub master_seed: u64,
    pub code_version: String,
    pub effective_params: PhysicalParams,
    pub points: Vec<PointResult>,
    pub distributions: Vec<DistributionResult>,
    pub fig3a: Fig3a,
    pub joint_total: Vec<JointBin>,
    pub truncation: Option<TruncationCheck>,
}

pub fn run_scenario(config: &Config) -> Result<RunArtifacts> {
    config.validate()?;
    let scenario = &config.scenario;
    let numerics = &config.numerics;
    let params = effective_params(&config.physical, scenario);
    let seed = numerics.master_seed;
    let coupling = if !scenario.atom_present {
        Coupling::Fixed(0.0)
    } else if scenario.g_spread {
        Coupling::PerTrajectory(sample_coupling(params.g_mean, params.g_sd, numerics.n_traj, seed))
    } else {
        Coupling::Fixed(params.g_mean)
    };
    let window = (config.pulse.t_start, config.pulse.t_end);

    let mut points = Vec::with_capacity(scenario.sweep.len());
    let mut distributions = Vec::new();
    for (j, &n_bar) in scenario.sweep.iter().enumerate() {
        let pulse = config.pulse.with_n_bar(n_bar);
        let mut atom_records = simulate_ensemble(&params, &coupling, &pulse, numerics)?;
        if scenario.postselect_redetect {
            atom_records.retain(|r| r.final_level != AtomLevel::Dark);
            if atom_records.is_empty() {
                return Err(Error::domain(format!(
                    "post-selection removed every trajectory at n_bar = {n_bar}"
                )));
            }
        }
        let empty_records = simulate_ensemble(&params, &Coupling::Fixed(0.0), &pulse, numerics)?;
        let atom = trajectory_statistics(&atom_records, window, scenario.bin_width)?;
        let empty = trajectory_statistics(&empty_records, window, scenario.bin_width)?;

        let (clicks_r, clicks_t) = if scenario.detector_model {
            let det = &config.detectors;
            let hist = |channel: Channel, tag: u64| {
                let times: Vec<Vec<f64>> = atom_records.iter().map(|r| r.times(channel).collect()).collect();
                let clicks = simulate_clicks(&times, det, derive(seed, tag));
                ClickHistogram::from_click_counts(clicks.iter().map(|c| c.len()), det.max_clicks())
            };
            (
                Some(hist(Channel::R, 2 * j as u64)),
                Some(hist(Channel::T, 2 * j as u64 + 1)),
            )
        } else {
            (None, None)
        };

        if scenario.distributions.iter().any(|&d| (d - n_bar).abs() < 1e-9) {
            let p_in = PhotonNumberDistribution::poisson(n_bar)?;
            let p_sim = count_distribution(&atom, Channel::T)?;
            let (p_out, lower, upper, reconstruction) = match (&clicks_t, scenario.reconstruction) {
                (Some(hist), true) => {
                    let rec = reconstruct_with_uncertainty(
                        hist,
                        &config.detectors,
                        scenario.bootstrap,
                        derive(seed, 10_000 + j as u64),
                        None,
                    )?;
                    (rec.probs().to_vec(), rec.lower.clone(), rec.upper.clone(), Some(rec))
                }
                _ => (
                    p_sim.probs().to_vec(),
                    p_sim.probs().to_vec(),
                    p_sim.probs().to_vec(),
                    None,
                ),
            };
            distributions.push(DistributionResult {
                n_bar,
                p_in: p_in.probs().to_vec(),
                p_sim: p_sim.probs().to_vec(),
                p_out,
                lower,
                upper,
                reconstruction,
            });
        }
        points.push(PointResult {
            n_bar,
            atom,
            empty,
            clicks_r,
            clicks_t,
        });
    }

    let fig3_index = scenario.in_sweep(scenario.fig3_n_bar).unwrap_or_else(|| {
        (0..scenario.sweep.len())
            .min_by(|&a, &b| {
                (scenario.sweep[a] - scenario.fig3_n_bar)
                    .abs()
                    .total_cmp(&(scenario.sweep[b] - scenario.fig3_n_bar).abs())
            })
            .expect("sweep is non-empty")
    });
    let fig3a = {
        let p = &points[fig3_index];
        let rate = |s: &TrajectoryStatistics, c: Channel| -> Vec<f64> {
            let norm = s.n_traj as f64 * s.bin_width;
            s.port(c).time_histogram.iter().map(|&h| h as f64 / norm).collect()
        };
        Fig3a {
            n_bar: p.n_bar,
            t_ns: p.atom.bin_edges().iter().map(|t| t + 0.5 * scenario.bin_width).collect(),
            flux_r: rate(&p.atom, Channel::R),
            flux_t: rate(&p.atom, Channel::T),
            flux_t_empty: rate(&p.empty, Channel::T),
        }
    };
    let mut joint = BTreeMap::<(usize, usize), u64>::new();
    for p in &points {
        for b in &p.atom.joint {
            *joint.entry((b.r_bin, b.t_bin)).or_default() += b.count;
        }
    }

    let truncation = if scenario.convergence_check {
        let largest = scenario.sweep.iter().cloned().fold(0.0, f64::max);
        Some(truncation_check(&params, &config.pulse.with_n_bar(largest), numerics)?)
    } else {
        None
    };

    Ok(RunArtifacts {
        config: config.to_json_value(),
        parameter_hash: config.parameter_hash(),
        master_seed: seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        effective_params: params,
        points,
        distributions,
        fig3a,
        joint_total: joint
            .into_iter()
            .map(|((r_bin, t_bin), count)| JointBin { r_bin, t_bin, count })
            .collect(),
        truncation,
    })
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunArtifacts {
    /// CSV datasets keyed by their path relative to the output directory.
    pub fn datasets(&self) -> Result<BTreeMap<String, Vec<u8>>> {
        let mut files = BTreeMap::new();
        files.insert(
            "fig2a/fig2a.csv".to_string(),
            csv_bytes(
                &[
                    "n_bar",
                    "meanR_atom",
                    "meanT_atom",
                    "meanR_empty",
                    "meanT_empty",
                    "seR_atom",
                    "seT_atom",
                    "seR_empty",
                    "seT_empty",
                ],
                self.points.iter().map(|p| {
                    let (ra, sra) = p.mean(true, Channel::R);
                    let (ta, sta) = p.mean(true, Channel::T);
                    let (re, sre) = p.mean(false, Channel::R);
                    let (te, ste) = p.mean(false, Channel::T);
                    [p.n_bar, ra, ta, re, te, sra, sta, sre, ste].map(num).to_vec()
                }),
            )?,
        );
        files.insert(
            "fig2b/fig2b.csv".to_string(),
            csv_bytes(
                &["n_bar", "g2R", "se"],
                self.points.iter().map(|p| {
                    let port = p.atom.port(Channel::R);
                    vec![num(p.n_bar), opt(port.g2), opt(port.g2_se)]
                }),
            )?,
        );
        for d in &self.distributions {
            let len = d.p_in.len().max(d.p_out.len()).max(d.p_sim.len());
            let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
            files.insert(
                format!("fig2cde/fig2cde_{}.csv", d.n_bar),
                csv_bytes(
                    &["n", "p_in", "p_out", "lo", "hi", "p_sim"],
                    (0..len).map(|k| {
                        vec![
                            k.to_string(),
                            num(at(&d.p_in, k)),
                            num(at(&d.p_out, k)),
                            num(at(&d.lower, k)),
                            num(at(&d.upper, k)),
                            num(at(&d.p_sim, k)),
                        ]
                    }),
                )?,
            );
        }
        let f = &self.fig3a;
        files.insert(
            "fig3a/fig3a.csv".to_string(),
            csv_bytes(
                &["t_ns", "fluxR", "fluxT", "fluxSum", "fluxT_empty"],
                (0..f.t_ns.len()).map(|k| {
                    [f.t_ns[k], f.flux_r[k], f.flux_t[k], f.flux_r[k] + f.flux_t[k], f.flux_t_empty[k]]
                        .map(num)
                        .to_vec()
                }),
            )?,
        );
        let bin_width = self.points[0].atom.bin_width;
        let t0 = self.points[0].atom.window.0;
        let joint_rows = |bins: &[JointBin]| -> Vec<Vec<String>> {
            bins.iter()
                .map(|b| {
                    vec![
                        num(t0 + b.r_bin as f64 * bin_width),
                        num(t0 + b.t_bin as f64 * bin_width),
                        b.count.to_string(),
                    ]
                })
                .collect()
        };
        files.insert(
            "fig3b/fig3b.csv".to_string(),
            csv_bytes(&["tR_bin", "tT_bin", "weight"], joint_rows(&self.joint_total))?,
        );
        for p in &self.points {
            files.insert(
                format!("fig3b/fig3b_{}.csv", p.n_bar),
                csv_bytes(&["tR_bin", "tT_bin", "weight"], joint_rows(&p.atom.joint))?,
            );
            if let (Some(r), Some(t)) = (&p.clicks_r, &p.clicks_t) {
                let len = r.counts.len().max(t.counts.len());
                files.insert(
                    format!("clicks/clicks_{}.csv", p.n_bar),
                    csv_bytes(
                        &["n", "count_R", "count_T"],
                        (0..len).map(|k| {
                            vec![
                                k.to_string(),
                                r.counts.get(k).copied().unwrap_or(0).to_string(),
                                t.counts.get(k).copied().unwrap_or(0).to_string(),
                            ]
                        }),
                    )?,
                );
            }
        }
        Ok(files)
    }

    pub fn manifest(&self, files: &BTreeMap<String, Vec<u8>>) -> Value {
        let datasets: Vec<Value> = files
            .iter()
            .map(|(name, bytes)| {
                json!({
                    "file": name,
                    "seed": self.master_seed,
                    "parameter_hash": self.parameter_hash,
                    "sha256": sha256_hex(bytes),
                })
            })
            .collect();
        json!({
            "code_version": self.code_version,
            "master_seed": self.master_seed,
            "parameter_hash": self.parameter_hash,
            "config": self.config,
            "effective_params": self.effective_params,
            "truncation": self.truncation,
            "fig3b_combination": "unweighted sum over all sweep intensities; per-intensity files alongside",
            "datasets": datasets,
        })
    }

    /// Writes every dataset and `manifest.json` below `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        let files = self.datasets()?;
        for (name, bytes) in &files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest(&files))?;
        let path = dir.join("manifest.json");
        fs::write(&path, manifest + "\n").map_err(|e| Error::io(&path, e))?;
        let mut names: Vec<String> = files.into_keys().collect();
        names.push("manifest.json".into());
        Ok(names)
    }

    /// Named scalar results used by reference comparisons.
    pub fn quantities(&self) -> BTreeMap<String, f64> {
        let mut q = analytic_quantities(&self.effective_params);
        for p in &self.points {
            let n = p.n_bar;
            q.insert(format!("meanR_atom@{n}"), p.mean(true, Channel::R).0);
            q.insert(format!("meanT_atom@{n}"), p.mean(true, Channel::T).0);
            q.insert(format!("meanR_empty@{n}"), p.mean(false, Channel::R).0);
            q.insert(format!("meanT_empty@{n}"), p.mean(false, Channel::T).0);
            if let Some(g2) = p.atom.port(Channel::R).g2 {
                q.insert(format!("g2R@{n}"), g2);
            }
        }
        q
    }

    /// Mean and standard error pairs for the same names, where available.
    pub fn standard_errors(&self) -> BTreeMap<String, f64> {
        let mut q = BTreeMap::new();
        for p in &self.points {
            let n = p.n_bar;
            q.insert(format!("meanR_atom@{n}"), p.mean(true, Channel::R).1);
            q.insert(format!("meanT_atom@{n}"), p.mean(true, Channel::T).1);
            q.insert(format!("meanR_empty@{n}"), p.mean(false, Channel::R).1);
            q.insert(format!("meanT_empty@{n}"), p.mean(false, Channel::T).1);
            if let Some(se) = p.atom.port(Channel::R).g2_se {
                q.insert(format!("g2R@{n}"), se);
            }
        }
        q
    }
}

pub fn analytic_quantities(params: &PhysicalParams) -> BTreeMap<String, f64> {
    let c = analytic::sprint_coefficients(params);
    let mut q = BTreeMap::new();
    q.insert(
        "analytic.4C".into(),
        analytic::cooperativity4c(params.g_mean, params.gamma, params.kappa_i, params.kappa_ex),
    );
    q.insert("analytic.t0".into(), c.t0);
    q.insert("analytic.t".into(), c.t);
    q.insert("analytic.r".into(), c.r);
    q.insert("analytic.R".into(), c.reflectance);
    q.insert("analytic.T".into(), c.transmittance);
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub name: String,
    pub value: f64,
    /// Absolute tolerance; 0 demands bit equality.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub entries: Vec<ReferenceEntry>,
}

impl ReferenceTable {
    /// Reference from a run: Monte Carlo quantities get `sigmas` standard
    /// errors of tolerance, analytic ones none.
    pub fn from_artifacts(artifacts: &RunArtifacts, sigmas: f64) -> Self {
        let se = artifacts.standard_errors();
        ReferenceTable {
            entries: artifacts
                .quantities()
                .into_iter()
                .map(|(name, value)| {
                    let tolerance = se.get(&name).map_or(0.0, |s| sigmas * s);
                    ReferenceEntry { name, value, tolerance }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub passed: bool,
}

pub fn compare_with_reference(quantities: &BTreeMap<String, f64>, table: &ReferenceTable) -> ComparisonReport {
    let rows: Vec<ComparisonRow> = table
        .entries
        .iter()
        .map(|e| {
            let actual = quantities.get(&e.name).copied();
            let pass = match actual {
                Some(a) if e.tolerance == 0.0 => a.to_bits() == e.value.to_bits(),
                Some(a) => (a - e.value).abs() <= e.tolerance,
                None => false,
            };
            ComparisonRow {
                name: e.name.clone(),
                expected: e.value,
                actual,
                tolerance: e.tolerance,
                pass,
            }
        })
        .collect();
    let passed = rows.iter().all(|r| r.pass);
    ComparisonReport { rows, passed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_samples() {
        assert_eq!(sample_coupling(24.0, 0.0, 5, 1), vec![24.0; 5]);
        let g = sample_coupling(24.0, 9.0, 10_000, 2015);
        assert!(g.iter().all(|&x| x >= 1.0));
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        let sd = (g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (g.len() - 1) as f64).sqrt();
        // truncation at 1 MHz removes ~0.5% of the mass, shifting the mean up by ~0.06
        assert!((mean - 24.0).abs() < 0.3, "mean {mean}");
        assert!((sd - 9.0).abs() < 0.3, "sd {sd}");
        assert_eq!(g, sample_coupling(24.0, 9.0, 10_000, 2015));
    }

    #[test]
    fn toggles_switch_imperfections_off() {
        let mut physical = PhysicalParams::default();
        physical.multilevel.enabled = true;
        let off = ScenarioSpec {
            p_imp: false,
            multilevel: false,
            dark_branching: false,
            ..ScenarioSpec::default()
        };
        let p = effective_params(&physical, &off);
        assert_eq!(p.p_imp, 0.0);
        assert!(!p.multilevel.enabled);
        assert_eq!(p.branching, Branching::IDEAL);
        let same = effective_params(&physical, &ScenarioSpec::default());
        assert_eq!(same, physical);
    }

    #[test]
    fn scenario_validation() {
        assert!(ScenarioSpec::default().validate().is_ok());
        let empty = ScenarioSpec {
            sweep: vec![],
            ..ScenarioSpec::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn mixture_limits() {
        let pure = shifted_mixture(5.0, 0.0, 1.0).unwrap();
        assert!(pure.total_variation(&PhotonNumberDistribution::poisson(5.0).unwrap()) < 1e-12);
        let shifted = shifted_mixture(5.0, 1.0, 1.0).unwrap();
        assert_close!(shifted.mean(), 4.0 + (-5.0f64).exp(), 1e-9);
    }

    #[test]
    fn reference_comparison() {
        let mut q = BTreeMap::new();
        q.insert("a".to_string(), 1.0);
        q.insert("b".to_string(), 2.0);
        let table = ReferenceTable {
            entries: vec![
                ReferenceEntry { name: "a".into(), value: 1.0, tolerance: 0.0 },
                ReferenceEntry { name: "b".into(), value: 2.1, tolerance: 0.2 },
            ],
        };
        assert!(compare_with_reference(&q, &table).passed);
        let missing = ReferenceTable {
            entries: vec![ReferenceEntry { name: "c".into(), value: 0.0, tolerance: 1.0 }],
        };
        assert!(!compare_with_reference(&q, &missing).passed);
        let off = ReferenceTable {
            entries: vec![ReferenceEntry { name: "b".into(), value: 2.5, tolerance: 0.2 }],
        };
        assert!(!compare_with_reference(&q, &off).passed);
    }
}
