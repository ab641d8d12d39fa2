//! Lindblad master-equation integration with per-channel output fluxes.

use serde::Serialize;

use super::ode::{Dopri, StepControl};
use super::{Channel, Envelope, ModelOperators};
use crate::error::{Error, Result};
use crate::hilbert::{AtomLevel, C64, I, ONE, ZERO};
use crate::params::NumericsConfig;

/// Trace drift beyond which a run is rejected.
pub const TRACE_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterOptions {
    /// Sampling interval of the flux series and maximum step, ns.
    pub dt: f64,
    pub tolerance: f64,
    pub initial: AtomLevel,
}

impl From<&NumericsConfig> for MasterOptions {
    fn from(n: &NumericsConfig) -> Self {
        MasterOptions {
            dt: n.dt,
            tolerance: n.tolerance,
            initial: AtomLevel::Alpha,
        }
    }
}

/// Per-channel photon flux ⟨L†L⟩(t) in photons/ns on a uniform grid and the
/// running integrals. Channels absent from the model carry zeros.
#[derive(Debug, Clone, Serialize)]
pub struct FluxSeries {
    pub times: Vec<f64>,
    pub flux: Vec<[f64; 7]>,
    pub cumulative: Vec<[f64; 7]>,
    /// Largest |Tr ρ − 1| seen on the grid.
    pub trace_drift: f64,
    /// Atomic level populations at the end of the window.
    pub final_populations: Vec<f64>,
}

impl FluxSeries {
    /// Mean number of photons emitted into `channel` over the window.
    pub fn mean(&self, channel: Channel) -> f64 {
        self.cumulative.last().map_or(0.0, |c| c[channel.index()])
    }

    pub fn mean_loss(&self) -> f64 {
        self.mean(Channel::LossA) + self.mean(Channel::LossB)
    }

    pub fn mean_spontaneous(&self) -> f64 {
        Channel::ALL
            .iter()
            .filter(|c| c.is_spontaneous())
            .map(|&c| self.mean(c))
            .sum()
    }

    pub fn mean_total(&self) -> f64 {
        Channel::ALL.iter().map(|&c| self.mean(c)).sum()
    }

    pub fn flux_of(&self, channel: Channel) -> Vec<f64> {
        self.flux.iter().map(|f| f[channel.index()]).collect()
    }

    /// CSV with columns t_ns, flux_T, flux_R, flux_loss, flux_spont.
    pub fn write_csv(&self, writer: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_ns", "flux_T", "flux_R", "flux_loss", "flux_spont"])?;
        for (t, f) in self.times.iter().zip(&self.flux) {
            let loss = f[Channel::LossA.index()] + f[Channel::LossB.index()];
            let spont: f64 = Channel::ALL
                .iter()
                .filter(|c| c.is_spontaneous())
                .map(|c| f[c.index()])
                .sum();
            w.write_record([t, &f[Channel::T.index()], &f[Channel::R.index()], &loss, &spont].map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Envelope evaluated strictly inside the current smooth piece, so stages
/// that land on a square-pulse edge see the limit from the integration side.
pub(crate) fn piecewise_envelope(envelope: &Envelope, t: f64, piece: (f64, f64)) -> f64 {
    let guard = 1e-9 * (1.0 + piece.1.abs());
    envelope(t.clamp(piece.0 + guard, (piece.1 - guard).max(piece.0 + guard)))
}

/// Smooth pieces of the window split at the pulse breakpoints.
pub(crate) fn pieces(model: &ModelOperators) -> Vec<(f64, f64)> {
    let (t0, t1) = model.window;
    let mut edges = vec![t0];
    edges.extend(model.breakpoints.iter().copied().filter(|&b| b > t0 && b < t1));
    edges.push(t1);
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

struct Lindblad<'a> {
    model: &'a ModelOperators,
    dim: usize,
    x: Vec<C64>,
    y: Vec<C64>,
    ydag: Vec<C64>,
}

impl<'a> Lindblad<'a> {
    fn new(model: &'a ModelOperators) -> Self {
        let dim = model.dim();
        Lindblad {
            model,
            dim,
            x: vec![ZERO; dim * dim],
            y: vec![ZERO; dim * dim],
            ydag: vec![ZERO; dim * dim],
        }
    }

    fn fluxes(&self, eps: f64, rho: &[C64]) -> [f64; 7] {
        let eff = self.model.effective();
        let trace: f64 = (0..self.dim).map(|i| rho[i * self.dim + i].re).sum();
        let mut out = [0.0; 7];
        for (k, jump) in self.model.jumps.iter().enumerate() {
            let s = jump.scalar;
            let mut f = eff.jdj[k].trace_with(rho).re;
            if s != 0.0 {
                f += s * s * eps * eps * trace + s * eps * eff.jpjd[k].trace_with(rho).re;
            }
            out[jump.channel.index()] += f;
        }
        out
    }

    fn rhs(&mut self, eps: f64, state: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let n = d * d;
        let (rho, drho) = (&state[..n], &mut out[..n]);
        let eff = self.model.effective();

        self.x.fill(ZERO);
        eff.k0.mul_dense_add(ONE, rho, &mut self.x);
        if eps != 0.0 {
            eff.k1.mul_dense_add(ONE * eps, rho, &mut self.x);
            let c = eff.k2 * eps * eps;
            for (x, r) in self.x.iter_mut().zip(rho) {
                *x += c * r;
            }
        }
        for i in 0..d {
            for j in 0..d {
                drho[i * d + j] = -I * self.x[i * d + j] + I * self.x[j * d + i].conj();
            }
        }
        for jump in &self.model.jumps {
            self.y.fill(ZERO);
            jump.op.mul_dense_add(ONE, rho, &mut self.y);
            for i in 0..d {
                for j in 0..d {
                    self.ydag[i * d + j] = self.y[j * d + i].conj();
                }
            }
            jump.op.mul_dense_add(ONE, &self.ydag, drho);
            let s = jump.scalar;
            if s != 0.0 && eps != 0.0 {
                let se = s * eps;
                let s2e2 = se * se;
                for k in 0..n {
                    drho[k] += (self.y[k] + self.ydag[k]) * se + rho[k] * s2e2;
                }
            }
        }
        let fluxes = self.fluxes(eps, rho);
        for (slot, f) in out[n..].iter_mut().zip(fluxes) {
            *slot = C64::new(f, 0.0);
        }
    }
}

/// Integrates the master equation over the pulse window starting from
/// `|initial, 0, 0⟩`.
pub fn evolve_master(model: &ModelOperators, options: &MasterOptions) -> Result<FluxSeries> {
    let d = model.dim();
    let n = d * d;
    let start = model.space.basis_state(options.initial, 0, 0)?;
    let i0 = start
        .amps
        .iter()
        .position(|a| *a == ONE)
        .expect("basis state has a unit entry");
    let mut state = vec![ZERO; n + 7];
    state[i0 * d + i0] = ONE;

    let control = StepControl::new(options.tolerance, options.dt);
    let mut ode = Dopri::new(n + 7, &control);
    let mut lindblad = Lindblad::new(model);
    let envelope = model.envelope.clone();

    let (t0, t1) = model.window;
    let steps = ((t1 - t0) / options.dt).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| if k == steps { t1 } else { t0 + k as f64 * options.dt })
        .collect();

    let mut series = FluxSeries {
        times: Vec::with_capacity(grid.len()),
        flux: Vec::with_capacity(grid.len()),
        cumulative: Vec::with_capacity(grid.len()),
        trace_drift: 0.0,
        final_populations: Vec::new(),
    };
    let record = |series: &mut FluxSeries, lindblad: &Lindblad, t: f64, eps: f64, state: &[C64]| -> Result<()> {
        let rho = &state[..n];
        let trace: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
        let drift = (trace - 1.0).abs();
        series.trace_drift = series.trace_drift.max(drift);
        if !(drift <= TRACE_LIMIT) {
            return Err(Error::Numerical(format!(
                "trace drifted by {drift:.3e} at t = {t:.2} ns; use a smaller numerics.dt or numerics.tolerance"
            )));
        }
        let mut cumulative = [0.0; 7];
        for (c, v) in cumulative.iter_mut().zip(&state[n..]) {
            *c = v.re;
        }
        series.times.push(t);
        series.flux.push(lindblad.fluxes(eps, rho).map(|f| f.max(0.0)));
        series.cumulative.push(cumulative);
        Ok(())
    };

    let pieces = pieces(model);
    let mut piece_idx = 0;
    let mut t = t0;
    record(&mut series, &lindblad, t, piecewise_envelope(&envelope, t, pieces[0]), &state)?;
    for &target in &grid[1..] {
        while t < target {
            while pieces[piece_idx].1 <= t && piece_idx + 1 < pieces.len() {
                piece_idx += 1;
                ode.reset();
            }
            let piece = pieces[piece_idx];
            let stop = target.min(piece.1);
            let mut rhs = |time: f64, y: &[C64], dy: &mut [C64]| {
                let eps = piecewise_envelope(&envelope, time, piece);
                lindblad.rhs(eps, y, dy);
            };
            ode.integrate(&mut rhs, &mut t, &mut state, stop, &control)?;
        }
        let piece = pieces[piece_idx.min(pieces.len() - 1)];
        record(&mut series, &lindblad, t, piecewise_envelope(&envelope, t, piece), &state)?;
    }

    let atom_dim = model.space.atom_dim();
    let mut pops = vec![0.0; atom_dim];
    for i in 0..d {
        let (atom, _, _) = model.space.unflatten(i);
        pops[atom] += state[i * d + i].re;
    }
    series.final_populations = pops;
    Ok(series)
}
