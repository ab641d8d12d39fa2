//! Cross-checks between independent solvers, run by `sprint validate`:
//! trajectories against the master equation, the click formula against a
//! brute-force detector simulation, and the dynamics against the
//! steady-state formulas.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic;
use crate::detectors::{click_probability, forward_matrix, DetectorConfig};
use crate::dynamics::ode::StepControl;
use crate::dynamics::{
    build_model, build_model_with_coupling, evolve_master, model_space, run_ensemble, trajectory_statistics,
    Channel, MasterOptions,
};
use crate::error::Result;
use crate::fockops::{apply_annihilation, apply_extraction, PhotonNumberDistribution};
use crate::params::{NumericsConfig, PhysicalParams, PulseSpec};
use crate::reconstruct::maxent_solve;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub n_traj: usize,
    pub click_samples: u64,
    pub master_seed: u64,
    /// Input photon numbers for the trajectory ↔ master-equation comparison.
    pub n_bars: Vec<f64>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            n_traj: 2000,
            click_samples: 1_000_000,
            master_seed: 2015,
            n_bars: vec![0.2, 1.0, 5.0],
        }
    }
}

/// Brute-force click counts: each of `k` photons survives with probability
/// η, lands on a uniformly random detector and clicks it if that detector is
/// live. Returns the histogram of distinct clicking detectors.
pub fn click_oracle(k: usize, cfg: &DetectorConfig, samples: u64, seed: u64) -> Vec<u64> {
    let mut rng = stream(seed, Purpose::Synthetic, k as u64);
    let mut hist = vec![0u64; cfg.n + 1];
    let mut hit = vec![false; cfg.n];
    for _ in 0..samples {
        hit.fill(false);
        for _ in 0..k {
            if rng.random::<f64>() < cfg.eta {
                let d = rng.random_range(0..cfg.n);
                if d >= cfg.n_dead {
                    hit[d] = true;
                }
            }
        }
        hist[hit.iter().filter(|&&h| h).count()] += 1;
    }
    hist
}

/// Largest |z| between the formula and the oracle over one column.
pub fn click_column_z(k: usize, cfg: &DetectorConfig, samples: u64, seed: u64) -> Result<f64> {
    let hist = click_oracle(k, cfg, samples, seed);
    let mut worst: f64 = 0.0;
    for (n, &count) in hist.iter().enumerate().take(cfg.max_clicks() + 1) {
        let p = click_probability(n, k, cfg)?;
        let f = count as f64 / samples as f64;
        // binomial standard error from the formula, with a one-count floor
        let sigma = (p * (1.0 - p) / samples as f64).sqrt().max(1.0 / samples as f64);
        worst = worst.max((f - p).abs() / sigma);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelComparison {
    pub channel: Channel,
    pub trajectory_mean: f64,
    pub trajectory_se: f64,
    pub master_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleComparison {
    pub n_bar: f64,
    pub channels: Vec<ChannelComparison>,
    pub total_mean: f64,
    pub total_se: f64,
    pub total_z: f64,
}

impl EnsembleComparison {
    pub fn worst_z(&self) -> f64 {
        self.channels.iter().map(|c| c.z.abs()).fold(self.total_z.abs(), f64::max)
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff.abs() < 1e-9 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Trajectory means of every channel against the master equation for the
/// same model and pulse, plus photon bookkeeping against `n_bar`.
pub fn compare_ensemble(params: &PhysicalParams, pulse: &PulseSpec, numerics: &NumericsConfig) -> Result<EnsembleComparison> {
    let space = model_space(params, numerics);
    let model = std::sync::Arc::new(build_model_with_coupling(params, params.g_mean, pulse, &space)?);
    let control = StepControl::new(numerics.tolerance, numerics.dt);
    let records = run_ensemble(numerics.n_traj, numerics.master_seed, &control, |_| Ok(model.clone()))?;
    let stats = trajectory_statistics(&records, (pulse.t_start, pulse.t_end), 2.0)?;
    let master = evolve_master(&model, &MasterOptions::from(numerics))?;
    let channels = Channel::ALL
        .iter()
        .map(|&ch| {
            let port = stats.port(ch);
            let master_mean = master.mean(ch);
            ChannelComparison {
                channel: ch,
                trajectory_mean: port.mean,
                trajectory_se: port.se,
                master_mean,
                z: z_score(port.mean - master_mean, port.se),
            }
        })
        .collect();
    Ok(EnsembleComparison {
        n_bar: pulse.n_bar,
        channels,
        total_mean: stats.mean_total,
        total_se: stats.se_total,
        total_z: z_score(stats.mean_total - pulse.n_bar, stats.se_total),
    })
}

/// `⟨L†L⟩/|ε|²` averaged over the central half of a square pulse.
pub fn steady_flux_ratio(series: &crate::dynamics::FluxSeries, pulse: &PulseSpec, channel: Channel) -> f64 {
    let (a, b) = (pulse.t_start, pulse.t_end);
    let (lo, hi) = (a + 0.25 * (b - a), b - 0.25 * (b - a));
    let (mut flux, mut drive) = (0.0, 0.0);
    for (t, f) in series.times.iter().zip(&series.flux) {
        if *t >= lo && *t <= hi {
            flux += f[channel.index()];
            drive += pulse.envelope(*t).powi(2);
        }
    }
    flux / drive
}

/// Empty-cavity steady transmission `⟨T†T⟩/|ε|²` under a long weak square pulse.
pub fn empty_cavity_transmission(params: &PhysicalParams, numerics: &NumericsConfig) -> Result<f64> {
    let pulse = PulseSpec::square(2000.0, 0.05);
    let model = build_model_with_coupling(params, 0.0, &pulse, &model_space(params, numerics))?;
    let series = evolve_master(&model, &MasterOptions::from(numerics))?;
    Ok(steady_flux_ratio(&series, &pulse, Channel::T))
}

/// Reflected fraction `mean_R / n_bar` of a 2 µs square pulse with the atom
/// starting in α. Each reflection flips the atom, so the fraction falls
/// linearly with `n_bar` below the steady-state R.
pub fn weak_drive_reflection(params: &PhysicalParams, numerics: &NumericsConfig, n_bar: f64) -> Result<f64> {
    let pulse = PulseSpec::square(2000.0, n_bar);
    let model = build_model(params, &pulse, &model_space(params, numerics))?;
    let series = evolve_master(&model, &MasterOptions::from(numerics))?;
    Ok(series.mean(Channel::R) / pulse.n_bar)
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_validation(params: &PhysicalParams, numerics: &NumericsConfig, options: &ValidationOptions) -> ValidationReport {
    let ideal = PhysicalParams {
        g_mean: params.g_mean,
        gamma: params.gamma,
        kappa_i: params.kappa_i,
        kappa_ex: params.kappa_ex,
        ..PhysicalParams::ideal()
    };
    let small = NumericsConfig {
        fock_a: 2,
        fock_b: 2,
        ..numerics.clone()
    };
    let mut checks = Vec::new();

    checks.push(timed("analytic: optimal coupling gives r = -t0", || {
        let k = analytic::optimal_kappa_ex(ideal.g_mean, ideal.gamma, ideal.kappa_i);
        let c = analytic::sprint_coefficients_for(ideal.g_mean, ideal.gamma, ideal.kappa_i, k);
        let t0 = analytic::empty_cavity_t0(k, ideal.kappa_i)?;
        let diff = (c.r + t0).abs();
        Ok((diff < 1e-12, format!("|r + t0| = {diff:e} at kappa_ex = {k:.4}")))
    }));

    checks.push(timed("dynamics: empty-cavity transmission equals t0^2", || {
        let t0 = analytic::empty_cavity_t0(ideal.kappa_ex, ideal.kappa_i)?;
        let got = empty_cavity_transmission(&ideal, &small)?;
        Ok(((got - t0 * t0).abs() < 1e-3, format!("{got:.5} vs {:.5}", t0 * t0)))
    }));

    checks.push(timed("dynamics: weak-drive reflection equals analytic R", || {
        let r = analytic::sprint_coefficients(&ideal).reflectance;
        let got = weak_drive_reflection(&ideal, &small, 0.01)?;
        Ok(((got - r).abs() < 0.02 * r, format!("{got:.4} vs {r:.4} at n_bar = 0.01")))
    }));

    for &n_bar in &options.n_bars {
        let name = format!("trajectories vs master equation at n_bar = {n_bar}");
        checks.push(timed(&name, || {
            let numerics = NumericsConfig {
                n_traj: options.n_traj,
                master_seed: options.master_seed,
                ..numerics.clone()
            };
            let cmp = compare_ensemble(&ideal, &PulseSpec::default().with_n_bar(n_bar), &numerics)?;
            let worst = cmp.worst_z();
            Ok((
                worst <= 3.0,
                format!(
                    "max |z| = {worst:.2}; R {:.4} ± {:.4} vs {:.4}; total {:.4} ± {:.4}",
                    cmp.channels[Channel::R.index()].trajectory_mean,
                    cmp.channels[Channel::R.index()].trajectory_se,
                    cmp.channels[Channel::R.index()].master_mean,
                    cmp.total_mean,
                    cmp.total_se
                ),
            ))
        }));
    }

    checks.push(timed("detectors: click formula vs brute-force oracle, k <= 12", || {
        let cfg = DetectorConfig::default();
        let zs: Vec<f64> = (0..=12usize)
            .into_par_iter()
            .map(|k| click_column_z(k, &cfg, options.click_samples, options.master_seed))
            .collect::<Result<_>>()?;
        let worst = zs.iter().cloned().fold(0.0, f64::max);
        let exact = click_probability(1, 1, &cfg)?;
        let ok = worst <= 3.0 && (exact - cfg.eta).abs() < 1e-15;
        Ok((ok, format!("max |z| = {worst:.2}; P(1|1) = {exact}")))
    }));

    checks.push(timed("fockops: annihilation and extraction identities", || {
        let thermal = PhotonNumberDistribution::thermal(3.0)?;
        let doubled = apply_annihilation(&thermal)?.dist.mean();
        let poisson = PhotonNumberDistribution::poisson(5.0)?;
        let kept = apply_annihilation(&poisson)?.dist.total_variation(&poisson);
        let shifted = apply_extraction(&poisson).mean();
        let exact = 4.0 + (-5.0f64).exp();
        let ok = (doubled - 6.0).abs() < 1e-6 && kept < 1e-9 && (shifted - exact).abs() < 1e-9;
        Ok((ok, format!("thermal {doubled:.8}; Poisson TV {kept:e}; extracted mean {shifted:.10}")))
    }));

    checks.push(timed("reconstruct: noiseless recovery", || {
        let cfg = DetectorConfig::default();
        let a = forward_matrix(&cfg, 20);
        let truth = PhotonNumberDistribution::poisson(5.0)?;
        let x: Vec<f64> = (0..=20).map(|k| truth.p(k)).collect();
        let s: f64 = x.iter().sum();
        let p: Vec<f64> = (0..a.nrows()).map(|n| (0..=20).map(|k| a[(n, k)] * x[k] / s).sum()).collect();
        let sol = maxent_solve(&p, &a, 1e-6)?;
        let tv = sol.x.total_variation(&truth);
        Ok((tv < 0.02, format!("TV = {tv:.5}")))
    }));

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { checks, passed }
}
