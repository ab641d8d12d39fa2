//! Cascade of balanced single-photon detectors on each port: the analytic
//! click-count distribution and an event-level simulator with dead time.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Detectors per port.
    #[serde(rename = "N")]
    pub n: usize,
    /// Total detection efficiency.
    pub eta: f64,
    /// Dead time after a click, ns.
    pub dead_time: f64,
    /// Detectors dead at the start of the pulse.
    #[serde(rename = "N_d")]
    pub n_dead: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            n: 5,
            eta: 1.0 / 3.0,
            dead_time: 60.0,
            n_dead: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invariant("detectors.N", self.n, "need at least one detector"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invariant("detectors.eta", self.eta, "must lie in [0, 1]"));
        }
        if !self.dead_time.is_finite() || self.dead_time < 0.0 {
            return Err(Error::invariant("detectors.dead_time", self.dead_time, "must be >= 0"));
        }
        if self.n_dead > self.n {
            return Err(Error::invariant("detectors.N_d", self.n_dead, "must not exceed N"));
        }
        Ok(())
    }

    /// Largest possible click count, `N − N_d`.
    pub fn max_clicks(&self) -> usize {
        self.n - self.n_dead
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// P(n clicks | k photons) for a pulse shorter than the dead time, with
/// `N_d` detectors already dead.
pub fn click_probability(n: usize, k: usize, cfg: &DetectorConfig) -> Result<f64> {
    let live = cfg.max_clicks();
    if n > live {
        return Err(Error::domain(format!(
            "click count {n} exceeds the {live} live detectors"
        )));
    }
    if k == 0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let big_n = cfg.n as f64;
    let prefactor = factorial(live) / factorial(live - n);
    let mut sum = 0.0;
    for i in 0..=n {
        let miss = 1.0 - cfg.eta * (1.0 - (i + cfg.n_dead) as f64 / big_n);
        let sign = if (n - i) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * miss.powi(k as i32) / (factorial(i) * factorial(n - i));
    }
    Ok((prefactor * sum).max(0.0))
}

/// `A[n][k] = P(n|k)` for `k = 0..=k_max`.
pub fn forward_matrix(cfg: &DetectorConfig, k_max: usize) -> DMatrix<f64> {
    let rows = cfg.max_clicks() + 1;
    DMatrix::from_fn(rows, k_max + 1, |n, k| {
        click_probability(n, k, cfg).expect("n within the live range")
    })
}

/// A registered click.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub t: f64,
    pub detector: usize,
}

/// Event-level detection of one port for one trajectory. Each photon
/// survives with probability η, is routed to a uniformly random detector and
/// registers only if that detector is live and has not clicked within the
/// preceding dead time.
pub fn detect<R: Rng>(photon_times: &[f64], cfg: &DetectorConfig, rng: &mut R) -> Vec<Click> {
    let mut order: Vec<f64> = photon_times.to_vec();
    order.sort_by(f64::total_cmp);
    let mut last: Vec<Option<f64>> = vec![None; cfg.n];
    let mut clicks = Vec::new();
    for t in order {
        let survives = rng.random::<f64>() < cfg.eta;
        let detector = rng.random_range(0..cfg.n);
        if !survives || detector < cfg.n_dead {
            continue;
        }
        if let Some(prev) = last[detector] {
            if t - prev < cfg.dead_time {
                continue;
            }
        }
        last[detector] = Some(t);
        clicks.push(Click { t, detector });
    }
    clicks
}

/// Detection of many trajectories, each on its own deterministic stream.
pub fn simulate_clicks(photon_times: &[Vec<f64>], cfg: &DetectorConfig, seed: u64) -> Vec<Vec<Click>> {
    photon_times
        .iter()
        .enumerate()
        .map(|(i, times)| {
            let mut rng = stream(seed, Purpose::Clicks, i as u64);
            detect(times, cfg, &mut rng)
        })
        .collect()
}

/// Number of repetitions with `n` clicks on one port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickHistogram {
    pub counts: Vec<u64>,
}

impl ClickHistogram {
    pub fn from_click_counts(clicks: impl IntoIterator<Item = usize>, max_clicks: usize) -> Self {
        let mut counts = vec![0u64; max_clicks + 1];
        for c in clicks {
            let slot = c.min(max_clicks);
            counts[slot] += 1;
        }
        ClickHistogram { counts }
    }

    /// Total repetitions M.
    pub fn repetitions(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let m = self.repetitions() as f64;
        self.counts.iter().map(|&c| c as f64 / m).collect()
    }

    pub fn mean_clicks(&self) -> f64 {
        self.probabilities()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "count"])?;
        for (n, c) in self.counts.iter().enumerate() {
            w.write_record([n.to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            n: usize,
            count: u64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            rows.push(row);
        }
        let max = rows
            .iter()
            .map(|r| r.n)
            .max()
            .ok_or_else(|| Error::domain("click histogram CSV has no rows"))?;
        let mut counts = vec![0u64; max + 1];
        for r in rows {
            counts[r.n] += r.count;
        }
        let hist = ClickHistogram { counts };
        if hist.repetitions() == 0 {
            return Err(Error::domain("click histogram is empty"));
        }
        Ok(hist)
    }
}
