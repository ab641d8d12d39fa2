//! Ensemble statistics of trajectory records.

use serde::Serialize;

use super::{Channel, TrajectoryRecord};
use crate::error::{Error, Result};

/// Counting statistics of one channel over the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortStatistics {
    pub channel: Channel,
    /// `count_histogram[m]` = number of trajectories with `m` jumps.
    pub count_histogram: Vec<u64>,
    pub mean: f64,
    /// Standard error of `mean`.
    pub se: f64,
    /// Pulse-integrated ⟨m(m−1)⟩/⟨m⟩², `None` when the port never fired.
    pub g2: Option<f64>,
    /// Delta-method standard error of `g2`.
    pub g2_se: Option<f64>,
    /// Jump counts per time bin.
    pub time_histogram: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointBin {
    pub r_bin: usize,
    pub t_bin: usize,
    pub count: u64,
}

/// Ordering of the transmitted jump relative to the reflected one among
/// trajectories with exactly one of each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ordering {
    pub pairs: u64,
    pub t_before_r: u64,
    pub t_after_r: u64,
}

impl Ordering {
    /// `mass(t_T < t_R) / mass(t_T > t_R)`; `None` without any T-after-R pair.
    pub fn ratio(&self) -> Option<f64> {
        (self.t_after_r > 0).then(|| self.t_before_r as f64 / self.t_after_r as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStatistics {
    pub n_traj: usize,
    pub window: (f64, f64),
    pub bin_width: f64,
    pub ports: Vec<PortStatistics>,
    /// Sparse joint (t_R, t_T) histogram over exactly-one-R-one-T records.
    pub joint: Vec<JointBin>,
    pub ordering: Ordering,
    /// Mean number of jumps of any kind per trajectory.
    pub mean_total: f64,
    pub se_total: f64,
}

impl TrajectoryStatistics {
    pub fn port(&self, channel: Channel) -> &PortStatistics {
        &self.ports[channel.index()]
    }

    pub fn n_bins(&self) -> usize {
        self.ports.first().map_or(0, |p| p.time_histogram.len())
    }

    /// Left edges of the time bins.
    pub fn bin_edges(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|k| self.window.0 + k as f64 * self.bin_width)
            .collect()
    }
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// g2 = F/M² with F = ⟨m(m−1)⟩, M = ⟨m⟩, and its delta-method error.
pub fn integrated_g2(counts: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = counts.len() as f64;
    let m = counts.iter().sum::<f64>() / n;
    if m <= 0.0 {
        return (None, None);
    }
    let f_vals: Vec<f64> = counts.iter().map(|c| c * (c - 1.0)).collect();
    let f = f_vals.iter().sum::<f64>() / n;
    let g2 = f / (m * m);
    if counts.len() < 2 {
        return (Some(g2), None);
    }
    let var_m = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1.0);
    let var_f = f_vals.iter().map(|v| (v - f).powi(2)).sum::<f64>() / (n - 1.0);
    let cov = counts
        .iter()
        .zip(&f_vals)
        .map(|(c, v)| (c - m) * (v - f))
        .sum::<f64>()
        / (n - 1.0);
    let var = (var_f / m.powi(4) + 4.0 * f * f * var_m / m.powi(6) - 4.0 * f * cov / m.powi(5)) / n;
    (Some(g2), Some(var.max(0.0).sqrt()))
}

pub fn trajectory_statistics(
    records: &[TrajectoryRecord],
    window: (f64, f64),
    bin_width: f64,
) -> Result<TrajectoryStatistics> {
    if records.is_empty() {
        return Err(Error::domain("trajectory statistics need at least one record"));
    }
    if !(bin_width > 0.0) {
        return Err(Error::domain("bin width must be > 0"));
    }
    let n_bins = (((window.1 - window.0) / bin_width).ceil() as usize).max(1);
    let bin = |t: f64| (((t - window.0) / bin_width).floor().max(0.0) as usize).min(n_bins - 1);

    let ports = Channel::ALL
        .iter()
        .map(|&channel| {
            let counts: Vec<usize> = records.iter().map(|r| r.count(channel)).collect();
            let max = counts.iter().copied().max().unwrap_or(0);
            let mut count_histogram = vec![0u64; max + 1];
            for &c in &counts {
                count_histogram[c] += 1;
            }
            let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let (mean, se) = mean_se(&as_f);
            let (g2, g2_se) = integrated_g2(&as_f);
            let mut time_histogram = vec![0u64; n_bins];
            for r in records {
                for t in r.times(channel) {
                    time_histogram[bin(t)] += 1;
                }
            }
            PortStatistics {
                channel,
                count_histogram,
                mean,
                se,
                g2,
                g2_se,
                time_histogram,
            }
        })
        .collect();

    let mut joint = std::collections::BTreeMap::<(usize, usize), u64>::new();
    let mut ordering = Ordering {
        pairs: 0,
        t_before_r: 0,
        t_after_r: 0,
    };
    for r in records {
        if r.count(Channel::R) != 1 || r.count(Channel::T) != 1 {
            continue;
        }
        let t_r = r.times(Channel::R).next().unwrap();
        let t_t = r.times(Channel::T).next().unwrap();
        *joint.entry((bin(t_r), bin(t_t))).or_default() += 1;
        ordering.pairs += 1;
        if t_t < t_r {
            ordering.t_before_r += 1;
        } else if t_t > t_r {
            ordering.t_after_r += 1;
        }
    }

    let totals: Vec<f64> = records.iter().map(|r| r.events.len() as f64).collect();
    let (mean_total, se_total) = mean_se(&totals);
    Ok(TrajectoryStatistics {
        n_traj: records.len(),
        window,
        bin_width,
        ports,
        joint: joint
            .into_iter()
            .map(|((r_bin, t_bin), count)| JointBin { r_bin, t_bin, count })
            .collect(),
        ordering,
        mean_total,
        se_total,
    })
}
