//! Monte Carlo wavefunction trajectories.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::master::{piecewise_envelope, pieces};
use super::ode::{Dopri, StepControl};
use super::{Channel, ModelOperators};
use crate::error::{Error, Result};
use crate::hilbert::{level_populations, AtomLevel, CompositeState, C64, I, ONE, ZERO};
use crate::params::NumericsConfig;
use crate::rng::{stream, Purpose};

/// Bisection depth for locating a jump inside an accepted step (h/128).
const BISECTIONS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    /// Coupling used for this trajectory, MHz.
    pub g: f64,
    pub events: Vec<JumpEvent>,
    /// Most populated atomic level at the end of the window.
    pub final_level: AtomLevel,
    /// Squared norm of the unnormalised state at the end of the window.
    pub final_norm: f64,
}

impl TrajectoryRecord {
    pub fn count(&self, channel: Channel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }

    pub fn times(&self, channel: Channel) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().filter(move |e| e.channel == channel).map(|e| e.t)
    }
}

fn apply_heff(model: &ModelOperators, eps: f64, psi: &[C64], out: &mut [C64]) {
    let eff = model.effective();
    out.fill(ZERO);
    eff.k0.apply_add(-I, psi, out);
    if eps != 0.0 {
        eff.k1.apply_add(-I * eps, psi, out);
        let c = -I * eff.k2 * eps * eps;
        for (o, p) in out.iter_mut().zip(psi) {
            *o += c * p;
        }
    }
}

fn norm_sqr(psi: &[C64]) -> f64 {
    psi.iter().map(|a| a.norm_sqr()).sum()
}

#[derive(Serialize, Deserialize)]
struct JumpRow {
    trajectory_id: usize,
    t_ns: f64,
    channel: Channel,
}

/// Jump log CSV with columns trajectory_id, t_ns, channel.
pub fn write_jump_log(records: &[TrajectoryRecord], writer: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["trajectory_id", "t_ns", "channel"])?;
    for r in records {
        for e in &r.events {
            w.write_record([r.index.to_string(), e.t.to_string(), e.channel.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads a jump log back into per-trajectory photon times of `channel`.
/// Trajectories without events are absent from a log, so the caller states
/// how many there were.
pub fn read_jump_times(reader: impl std::io::Read, n_traj: usize, channel: Channel) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::new(); n_traj];
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: JumpRow = row?;
        if row.trajectory_id >= n_traj {
            return Err(Error::domain(format!(
                "jump log names trajectory {} but only {n_traj} trajectories were declared",
                row.trajectory_id
            )));
        }
        if row.channel == channel {
            out[row.trajectory_id].push(row.t_ns);
        }
    }
    Ok(out)
}

/// Runs trajectory `index` of the ensemble keyed by `master_seed`.
pub fn run_trajectory(
    model: &ModelOperators,
    control: &StepControl,
    master_seed: u64,
    index: usize,
) -> Result<TrajectoryRecord> {
    let mut rng = stream(master_seed, Purpose::Trajectory, index as u64);
    let dim = model.dim();
    let mut psi = model.space.basis_state(AtomLevel::Alpha, 0, 0)?.amps;
    let mut previous = vec![ZERO; dim];
    let mut probe = vec![ZERO; dim];
    let mut jumped = vec![ZERO; dim];
    let mut ode = Dopri::new(dim, control);
    let envelope = model.envelope.clone();
    let mut threshold: f64 = rng.random();
    let mut events = Vec::new();

    for piece in pieces(model) {
        ode.reset();
        let mut rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            apply_heff(model, piecewise_envelope(&envelope, t, piece), y, dy)
        };
        let mut t = piece.0;
        while t < piece.1 {
            let t_prev = t;
            previous.copy_from_slice(&psi);
            ode.advance(&mut rhs, &mut t, &mut psi, piece.1, control)?;
            if norm_sqr(&psi) >= threshold {
                continue;
            }
            let (mut lo, mut hi) = (0.0, t - t_prev);
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                ode.fixed_step(&mut rhs, t_prev, &previous, mid, &mut probe);
                if norm_sqr(&probe) < threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            ode.fixed_step(&mut rhs, t_prev, &previous, hi, &mut probe);
            let t_jump = t_prev + hi;
            let eps = piecewise_envelope(&envelope, t_jump, piece);

            let weights: Vec<f64> = model
                .jumps
                .iter()
                .map(|j| {
                    jumped.fill(ZERO);
                    j.op.apply_add(ONE, &probe, &mut jumped);
                    if j.scalar != 0.0 {
                        for (o, p) in jumped.iter_mut().zip(&probe) {
                            *o += p * (j.scalar * eps);
                        }
                    }
                    norm_sqr(&jumped)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Numerical(format!(
                    "no jump channel available at t = {t_jump:.3} ns"
                )));
            }
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                if pick < *w {
                    chosen = k;
                    break;
                }
                pick -= w;
            }
            let j = &model.jumps[chosen];
            psi.fill(ZERO);
            j.op.apply_add(ONE, &probe, &mut psi);
            if j.scalar != 0.0 {
                for (o, p) in psi.iter_mut().zip(&probe) {
                    *o += p * (j.scalar * eps);
                }
            }
            let norm = norm_sqr(&psi).sqrt();
            for a in psi.iter_mut() {
                *a /= norm;
            }
            events.push(JumpEvent {
                t: t_jump,
                channel: j.channel,
            });
            threshold = rng.random();
            t = t_jump;
            ode.reset();
        }
    }

    let final_norm = norm_sqr(&psi);
    let state = CompositeState { amps: psi };
    let pops = level_populations(&model.space, &state);
    let best = pops
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(TrajectoryRecord {
        index,
        g: model.g,
        events,
        final_level: model.space.levels().levels()[best],
        final_norm,
    })
}

/// Runs `n` trajectories in parallel, building each trajectory's model with
/// `model_for(index)`. Output order is the index order.
pub fn run_ensemble<F>(n: usize, master_seed: u64, control: &StepControl, model_for: F) -> Result<Vec<TrajectoryRecord>>
where
    F: Fn(usize) -> Result<Arc<ModelOperators>> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| run_trajectory(model_for(i)?.as_ref(), control, master_seed, i))
        .collect()
}

/// `numerics.n_traj` trajectories of a single model.
pub fn run_trajectories(model: &ModelOperators, numerics: &NumericsConfig) -> Result<Vec<TrajectoryRecord>> {
    let control = StepControl::new(numerics.tolerance, numerics.dt);
    (0..numerics.n_traj)
        .into_par_iter()
        .map(|i| run_trajectory(model, &control, numerics.master_seed, i))
        .collect()
}
