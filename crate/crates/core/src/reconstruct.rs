//! Maximum-entropy inversion of click statistics into photon-number
//! distributions.
//!
//! Φ[x] = ‖Ax − P‖² + λ² Σ x ln x is minimised under Σx = 1 and
//! Σ_n n (Ax)_n = Σ_n n P_n, starting from the Gibbs distribution that meets
//! both constraints.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{DiscreteCDF, Poisson};

use crate::detectors::{forward_matrix, ClickHistogram, DetectorConfig};
use crate::error::{Error, Result};
use crate::fockops::PhotonNumberDistribution;
use crate::rng::{stream, Purpose};

pub const LAMBDA_MIN: f64 = 1e-6;
pub const LAMBDA_MAX: f64 = 1e2;
pub const LAMBDA_BISECTIONS: usize = 40;
const MAX_ITERATIONS: usize = 500;
/// Constraint and stationarity residual accepted once Newton stalls.
const KKT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxEntSolution {
    #[serde(skip)]
    pub x: PhotonNumberDistribution,
    pub lambda: f64,
    /// ‖Ax − P‖².
    pub chi2: f64,
    pub normalization_residual: f64,
    pub mean_residual: f64,
    /// max_k x_k |∂Φ/∂x_k − μ − ν c_k| with fitted multipliers.
    pub stationarity_residual: f64,
    pub iterations: usize,
}

impl MaxEntSolution {
    /// Φ evaluated at the solution.
    pub fn objective(&self, a: &DMatrix<f64>, p_meas: &[f64]) -> f64 {
        objective(a, p_meas, self.x.probs(), self.lambda)
    }
}

/// Φ[x] with 0·ln 0 = 0.
pub fn objective(a: &DMatrix<f64>, p_meas: &[f64], x: &[f64], lambda: f64) -> f64 {
    let ax = a * DVector::from_column_slice(x);
    let chi2: f64 = ax.iter().zip(p_meas).map(|(q, p)| (q - p).powi(2)).sum();
    let neg_entropy: f64 = x.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum();
    chi2 + lambda * lambda * neg_entropy
}

/// Expected clicks per photon number, c_k = Σ_n n A_nk.
pub fn click_means(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.ncols())
        .map(|k| a.column(k).iter().enumerate().map(|(n, v)| n as f64 * v).sum())
        .collect()
}

fn check_inputs(p_meas: &[f64], a: &DMatrix<f64>, lambda: f64) -> Result<()> {
    if p_meas.len() != a.nrows() {
        return Err(Error::domain(format!(
            "measured distribution has {} entries, forward matrix has {} rows",
            p_meas.len(),
            a.nrows()
        )));
    }
    if p_meas.iter().any(|p| !(*p >= 0.0)) || (p_meas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::domain("measured click distribution must be a probability vector"));
    }
    for k in 0..a.ncols() {
        let s: f64 = a.column(k).iter().sum();
        if (s - 1.0).abs() > 1e-8 || a.column(k).iter().any(|v| *v < 0.0) {
            return Err(Error::domain(format!("forward matrix column {k} is not stochastic")));
        }
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Rescales x by exp(α + β c_k) so that Σx = 1 and Σ c_k x_k = m. The tilt
/// keeps every component positive; the mean is increasing in β.
fn tilt(x: &DVector<f64>, c: &[f64], m: f64) -> DVector<f64> {
    let logs: Vec<f64> = x.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let at = |beta: f64| -> (DVector<f64>, f64, f64) {
        let top = logs.iter().zip(c).map(|(l, ck)| l + beta * ck).fold(f64::NEG_INFINITY, f64::max);
        let w = DVector::from_iterator(c.len(), logs.iter().zip(c).map(|(l, ck)| (l + beta * ck - top).exp()));
        let w = &w / w.sum();
        let mean: f64 = w.iter().zip(c).map(|(wk, ck)| wk * ck).sum();
        let var: f64 = w.iter().zip(c).map(|(wk, ck)| wk * (ck - mean).powi(2)).sum();
        (w, mean, var)
    };
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut beta = 0.0;
    for _ in 0..200 {
        let (_, mean, var) = at(beta);
        if (mean - m).abs() <= 1e-15 * (1.0 + m) {
            break;
        }
        if mean < m {
            lo = beta;
        } else {
            hi = beta;
        }
        // safeguarded Newton on β
        let mut next = beta - (mean - m) / var.max(1e-300);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0 + lo.abs(),
                _ => hi - 1.0 - hi.abs(),
            };
        }
        beta = next;
    }
    at(beta).0.map(|v| v.max(f64::MIN_POSITIVE))
}

/// Equality-constrained Newton on Φ in the variables x, scaled by √x so the
/// entropy curvature λ²/x_k becomes λ² and small λ stays well conditioned.
/// The constraint residual enters the right-hand side, so rounding drift is
/// corrected on every step.
fn newton_primal(
    p_meas: &[f64],
    a: &DMatrix<f64>,
    lambda: f64,
    start: Option<&[f64]>,
) -> Result<MaxEntSolution> {
    check_inputs(p_meas, a, lambda)?;
    let cols = a.ncols();
    let c = click_means(a);
    let m: f64 = p_meas.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let c_max = c.iter().cloned().fold(0.0, f64::max);
    if m > c_max + 1e-12 {
        return Err(Error::domain(format!(
            "measured mean of {m:.6} clicks exceeds the reachable maximum {c_max:.6}; raise K_max"
        )));
    }
    if m >= c_max - 1e-12 && c_max > 0.0 {
        return Err(Error::domain(format!(
            "measured mean of {m:.6} clicks sits on the boundary of the reachable range; raise K_max"
        )));
    }
    if m <= 1e-12 && c.iter().skip(1).all(|&ck| ck > 0.0) {
        let mut probs = vec![0.0; cols];
        probs[0] = 1.0;
        return Ok(finish(PhotonNumberDistribution::new(probs)?, p_meas, a, lambda, 0));
    }

    let l2 = lambda * lambda;
    let p = DVector::from_column_slice(p_meas);
    let cv = DVector::from_column_slice(&c);
    let phi = |x: &DVector<f64>| objective(a, p_meas, x.as_slice(), lambda);
    let gibbs = tilt(&DVector::from_element(cols, 1.0), &c, m);
    let mut x = match start {
        // keep every component strictly positive so none is frozen at zero
        Some(w) if w.len() == cols => tilt(&(DVector::from_column_slice(w) * (1.0 - 1e-3) + &gibbs * 1e-3), &c, m),
        _ => gibbs.clone(),
    };
    let mut f = phi(&x);
    let mut iterations = 0;
    let mut converged = false;
    let mut polish = 0;
    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        let resid = a * &x - &p;
        let grad = (a.transpose() * &resid) * 2.0 + x.map(|v| l2 * (v.ln() + 1.0));
        let s = x.map(f64::sqrt);
        let as_ = DMatrix::from_fn(a.nrows(), cols, |n, k| a[(n, k)] * s[k]);
        let gram = as_.transpose() * &as_ * 2.0;
        let ridge = (1e-13 * gram.diagonal().amax()).max(f64::MIN_POSITIVE);
        let (mu, nu) = multipliers(x.as_slice(), grad.as_slice(), &c, |v| v);
        let feas = [1.0 - x.sum(), m - cv.dot(&x)];
        let rows_c = if c.iter().all(|&ck| ck == c[0]) { 1 } else { 2 };
        // scaled KKT system [H (CS)ᵀ; CS 0] [u; ν] = [−S g; d − Cx]. The curved
        // variant adds the curvature of x = e^y along the Lagrangian gradient,
        // which tempers components heading to zero.
        let direction = |curved: bool| -> Result<(DVector<f64>, f64)> {
            let dim = cols + rows_c;
            let mut kkt = DMatrix::zeros(dim, dim);
            kkt.view_mut((0, 0), (cols, cols)).copy_from(&gram);
            let mut rhs = DVector::zeros(dim);
            for k in 0..cols {
                let bend = if curved { (grad[k] - mu - nu * c[k]).max(0.0) } else { 0.0 };
                kkt[(k, k)] += l2 + ridge + bend;
                rhs[k] = -s[k] * grad[k];
                let row = [s[k], s[k] * c[k]];
                for (j, v) in row.iter().take(rows_c).enumerate() {
                    kkt[(cols + j, k)] = *v;
                    kkt[(k, cols + j)] = *v;
                }
            }
            for j in 0..rows_c {
                rhs[cols + j] = feas[j];
            }
            let sol = kkt
                .full_piv_lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("singular system in the entropy solver".into()))?;
            let dx = sol.rows(0, cols).component_mul(&s);
            let decrement = -grad.dot(&dx);
            Ok((dx, decrement))
        };
        let (dx, decrement) = direction(false)?;
        let feasible = feas[0].abs() < 1e-14 && feas[1].abs() < 1e-13 * (1.0 + m);
        if feasible && decrement.abs() <= 1e-22 * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        // shrinking components step multiplicatively so they may fall by
        // many decades at once; growing ones step additively. Both agree with
        // the Newton step to first order and keep x positive.
        let advance = |dx: &DVector<f64>, t: f64| -> DVector<f64> {
            let moved = x.zip_map(dx, |xk, dk| {
                if dk >= 0.0 {
                    xk + t * dk
                } else {
                    xk * (t * dk / xk).max(-700.0).exp()
                }
            });
            tilt(&moved, &c, m)
        };
        // below the resolution of f the line search is blind; take full steps
        if decrement.abs() <= 1e-11 * (1.0 + f.abs()) && polish < 8 {
            polish += 1;
            x = advance(&dx, 1.0);
            f = phi(&x);
            continue;
        }
        let search = |dx: &DVector<f64>, decrement: f64| -> Option<(DVector<f64>, f64, f64)> {
            let mut t: f64 = 1.0;
            for _ in 0..60 {
                let trial = advance(dx, t);
                let ft = phi(&trial);
                if ft.is_finite() && ft <= f - 1e-4 * t * decrement.max(0.0) {
                    return Some((trial, ft, t));
                }
                t *= 0.5;
            }
            None
        };
        let plain = search(&dx, decrement);
        let best = match plain {
            Some(step) if step.2 >= 0.25 => Some(step),
            _ => {
                let (dx_c, decrement_c) = direction(true)?;
                [plain, search(&dx_c, decrement_c)]
                    .into_iter()
                    .flatten()
                    .min_by(|p, q| p.1.total_cmp(&q.1))
            }
        };
        match best {
            Some((trial, ft, _)) if ft < f => {
                x = trial;
                f = ft;
            }
            _ => break,
        }
    }
    let total = x.sum();
    let probs: Vec<f64> = x.iter().map(|v| (v / total).max(0.0)).collect();
    let sol = finish(PhotonNumberDistribution::from_weights(&probs)?, p_meas, a, lambda, iterations);
    let kkt = sol.mean_residual < KKT_TOLERANCE && sol.stationarity_residual < KKT_TOLERANCE * (1.0 + lambda * lambda);
    if !(converged || kkt) {
        return Err(Error::Numerical(format!(
            "entropy solver did not converge for lambda = {lambda:e}"
        )));
    }
    Ok(sol)
}

/// Weighted least-squares multipliers for g_k ≈ μ + ν c_k.
fn multipliers(x: &[f64], grad: &[f64], c: &[f64], weight: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..grad.len() {
        let w = weight(x[k]);
        s00 += w;
        s01 += w * c[k];
        s11 += w * c[k] * c[k];
        t0 += w * grad[k];
        t1 += w * c[k] * grad[k];
    }
    let det = s00 * s11 - s01 * s01;
    if det.abs() > 1e-300 {
        ((t0 * s11 - t1 * s01) / det, (s00 * t1 - s01 * t0) / det)
    } else if s00 > 0.0 {
        (t0 / s00, 0.0)
    } else {
        (0.0, 0.0)
    }
}

fn finish(
    x: PhotonNumberDistribution,
    p_meas: &[f64],
    a: &DMatrix<f64>,
    lambda: f64,
    iterations: usize,
) -> MaxEntSolution {
    let xv = DVector::from_column_slice(x.probs());
    let ax = a * &xv;
    let resid: Vec<f64> = ax.iter().zip(p_meas).map(|(q, p)| q - p).collect();
    let chi2 = resid.iter().map(|r| r * r).sum();
    let c = click_means(a);
    let m: f64 = p_meas.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let mean_x: f64 = c.iter().zip(x.probs()).map(|(ck, xk)| ck * xk).sum();
    let at_r = a.transpose() * DVector::from_column_slice(&resid);
    let l2 = lambda * lambda;
    let grad: Vec<f64> = x
        .probs()
        .iter()
        .enumerate()
        .map(|(k, &xk)| 2.0 * at_r[k] + l2 * (xk.max(1e-12).ln() + 1.0))
        .collect();
    let (mu, nu) = multipliers(x.probs(), &grad, &c, |v| v * v);
    let stationarity = grad
        .iter()
        .enumerate()
        .map(|(k, g)| (x.probs()[k] * (g - mu - nu * c[k])).abs())
        .fold(0.0, f64::max);
    MaxEntSolution {
        normalization_residual: (x.probs().iter().sum::<f64>() - 1.0).abs(),
        mean_residual: (mean_x - m).abs(),
        stationarity_residual: stationarity,
        chi2,
        lambda,
        iterations,
        x,
    }
}

/// Minimises Φ for a fixed λ.
pub fn maxent_solve(p_meas: &[f64], a: &DMatrix<f64>, lambda: f64) -> Result<MaxEntSolution> {
    match newton_primal(p_meas, a, lambda, None) {
        Err(Error::Numerical(_)) if lambda < LAMBDA_MAX => {
            let high = newton_primal(p_meas, a, LAMBDA_MAX, None)?;
            continuation(p_meas, a, &high, lambda)
        }
        other => other,
    }
}

/// Walks from a solved λ to `lambda` at most one decade per warm-started solve.
fn continuation(p_meas: &[f64], a: &DMatrix<f64>, from: &MaxEntSolution, lambda: f64) -> Result<MaxEntSolution> {
    let (l0, l1) = (from.lambda.ln(), lambda.ln());
    let steps = ((l1 - l0).abs() / std::f64::consts::LN_10).ceil().max(1.0) as usize;
    let mut x = from.x.probs().to_vec();
    for i in 1..steps {
        let l = (l0 + (l1 - l0) * i as f64 / steps as f64).exp();
        x = newton_primal(p_meas, a, l, Some(&x))?.x.probs().to_vec();
    }
    newton_primal(p_meas, a, lambda, Some(&x))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// Shot-noise bound Σ P(1 − P)/M.
    pub tolerance: f64,
    /// True when even the smallest λ misses the bound.
    pub warning: bool,
}

/// Largest λ in [1e-6, 1e2] whose solution fits the data within shot noise,
/// found by bisection on log λ.
pub fn select_lambda(p_meas: &[f64], a: &DMatrix<f64>, samples: u64) -> Result<(LambdaSelection, MaxEntSolution)> {
    if samples < 1 {
        return Err(Error::domain("sample count M must be >= 1"));
    }
    let tolerance = p_meas.iter().map(|p| p * (1.0 - p)).sum::<f64>() / samples as f64;
    let high = newton_primal(p_meas, a, LAMBDA_MAX, None)?;
    if high.chi2 <= tolerance {
        return Ok((
            LambdaSelection {
                lambda: LAMBDA_MAX,
                tolerance,
                warning: false,
            },
            high,
        ));
    }
    let mut best = continuation(p_meas, a, &high, LAMBDA_MIN)?;
    if best.chi2 > tolerance {
        return Ok((
            LambdaSelection {
                lambda: LAMBDA_MIN,
                tolerance,
                warning: true,
            },
            best,
        ));
    }
    let mut above = high;
    let (mut lo, mut hi) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
    for _ in 0..LAMBDA_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let trial = continuation(p_meas, a, &above, mid.exp())?;
        if trial.chi2 <= tolerance {
            lo = mid;
            best = trial;
        } else {
            hi = mid;
            above = trial;
        }
    }
    Ok((
        LambdaSelection {
            lambda: best.lambda,
            tolerance,
            warning: false,
        },
        best,
    ))
}

/// Smallest K whose Poisson tail beyond K, at the photon mean implied by the
/// measured click mean, is below 1e-6; never below N − N_d.
pub fn default_k_max(mean_clicks: f64, cfg: &DetectorConfig) -> Result<usize> {
    if cfg.eta <= 0.0 {
        return Err(Error::domain("K_max is undefined for zero detection efficiency"));
    }
    let floor = cfg.max_clicks();
    let mu = mean_clicks / cfg.eta;
    if mu <= 0.0 {
        return Ok(floor);
    }
    let pois = Poisson::new(mu).map_err(|e| Error::domain(e.to_string()))?;
    let mut k = 0u64;
    while pois.sf(k) >= 1e-6 {
        k += 1;
    }
    Ok((k as usize).max(floor))
}

/// Point solution with a shot-noise band from multinomial bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    pub solution: MaxEntSolution,
    pub selection: LambdaSelection,
    pub k_max: usize,
    pub bootstrap_rounds: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Reconstruction {
    pub fn probs(&self) -> &[f64] {
        self.solution.x.probs()
    }

    /// Fraction of bins whose band contains `truth`.
    pub fn coverage(&self, truth: &PhotonNumberDistribution, slack: f64) -> f64 {
        let n = self.lower.len();
        let inside = (0..n)
            .filter(|&k| {
                let p = truth.p(k);
                p >= self.lower[k] - slack && p <= self.upper[k] + slack
            })
            .count();
        inside as f64 / n as f64
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "p", "lo", "hi"])?;
        for (k, p) in self.probs().iter().enumerate() {
            w.write_record([
                k.to_string(),
                format!("{p:.12e}"),
                format!("{:.12e}", self.lower[k]),
                format!("{:.12e}", self.upper[k]),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Draws a multinomial sample of `m` events from `probs`.
pub fn multinomial<R: Rng>(m: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut remaining = m;
    let mut mass = 1.0;
    let mut out = vec![0u64; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        out[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

pub fn reconstruct_with_uncertainty(
    hist: &ClickHistogram,
    cfg: &DetectorConfig,
    rounds: usize,
    seed: u64,
    k_max: Option<usize>,
) -> Result<Reconstruction> {
    if rounds < 2 {
        return Err(Error::domain(format!("bootstrap needs at least 2 rounds, got {rounds}")));
    }
    let m = hist.repetitions();
    if m == 0 {
        return Err(Error::domain("click histogram is empty"));
    }
    let rows = cfg.max_clicks() + 1;
    if hist.counts.len() > rows && hist.counts[rows..].iter().any(|&c| c > 0) {
        return Err(Error::domain(format!(
            "histogram has counts above the {} live detectors",
            rows - 1
        )));
    }
    let mut counts = hist.counts.clone();
    counts.resize(rows, 0);
    let hist = ClickHistogram { counts };
    let k_max = match k_max {
        Some(k) => k,
        None => default_k_max(hist.mean_clicks(), cfg)?,
    };
    let a = forward_matrix(cfg, k_max);
    let p = hist.probabilities();
    let (selection, solution) = select_lambda(&p, &a, m)?;

    let samples: Vec<Vec<f64>> = (0..rounds)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, Purpose::Bootstrap, b as u64);
            let resampled = multinomial(m, &p, &mut rng);
            let pb: Vec<f64> = resampled.iter().map(|&c| c as f64 / m as f64).collect();
            select_lambda(&pb, &a, m).map(|(_, sol)| sol.x.probs().to_vec())
        })
        .collect::<Result<_>>()?;

    let mut lower = Vec::with_capacity(k_max + 1);
    let mut upper = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut column: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        column.sort_by(f64::total_cmp);
        lower.push(percentile(&column, 0.16));
        upper.push(percentile(&column, 0.84));
    }
    Ok(Reconstruction {
        solution,
        selection,
        k_max,
        bootstrap_rounds: rounds,
        lower,
        upper,
    })
}

/// Unregularised least-squares inverse. Non-physical: entries may be negative.
pub fn pseudo_inverse_baseline(p_meas: &[f64], a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let pinv = a
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((pinv * DVector::from_column_slice(p_meas)).iter().copied().collect())
}
