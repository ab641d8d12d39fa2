//! Closed-form steady-state quantities of the loss-limited SPRINT model.
//!
//! All inputs are in MHz; every result is a dimensionless ratio, so the 2π of
//! the angular convention cancels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::PhysicalParams;

/// Weak-drive amplitude coefficients for an atom prepared in α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyStateCoefficients {
    /// Empty-cavity (or atom-in-β) transmission amplitude.
    pub t0: f64,
    /// Reflection amplitude with the atom in α.
    pub r: f64,
    /// Transmission amplitude with the atom in α, `t0 + r`.
    pub t: f64,
    /// `R = r²`, the SPRINT efficiency.
    pub reflectance: f64,
    pub transmittance: f64,
    pub loss: f64,
}

/// `t0 = −(κ_ex − κ_i)/(κ_ex + κ_i)`.
pub fn empty_cavity_t0(kappa_ex: f64, kappa_i: f64) -> Result<f64> {
    let total = kappa_ex + kappa_i;
    if total <= 0.0 {
        return Err(Error::domain("empty_cavity_t0: kappa_ex + kappa_i must be > 0"));
    }
    Ok(-(kappa_ex - kappa_i) / total)
}

/// Linear loss of the empty cavity, `1 − t0²`.
pub fn empty_cavity_loss(kappa_ex: f64, kappa_i: f64) -> Result<f64> {
    Ok(1.0 - empty_cavity_t0(kappa_ex, kappa_i)?.powi(2))
}

/// `4C = 2g² / ((κ_i + κ_ex) γ)`.
pub fn cooperativity4c(g: f64, gamma: f64, kappa_i: f64, kappa_ex: f64) -> f64 {
    2.0 * g * g / ((kappa_i + kappa_ex) * gamma)
}

/// Cavity-enhanced emission rate into one waveguide direction, `Γ = 2Cγ = g²/κ`, in MHz.
pub fn directional_rate(g: f64, kappa_i: f64, kappa_ex: f64) -> f64 {
    g * g / (kappa_i + kappa_ex)
}

pub fn sprint_coefficients_for(g: f64, gamma: f64, kappa_i: f64, kappa_ex: f64) -> SteadyStateCoefficients {
    let total = kappa_i + kappa_ex;
    let t0 = -(kappa_ex - kappa_i) / total;
    let c4 = cooperativity4c(g, gamma, kappa_i, kappa_ex);
    let r = kappa_ex / total * c4 / (c4 + 1.0);
    let t = t0 + r;
    let reflectance = r * r;
    let transmittance = t * t;
    SteadyStateCoefficients {
        t0,
        r,
        t,
        reflectance,
        transmittance,
        loss: 1.0 - reflectance - transmittance,
    }
}

/// Coefficients at the mean coupling of `params`.
pub fn sprint_coefficients(params: &PhysicalParams) -> SteadyStateCoefficients {
    sprint_coefficients_for(params.g_mean, params.gamma, params.kappa_i, params.kappa_ex)
}

/// `κ_ex = κ_i √(1 + 2g²/(κ_i γ))`, the coupling that maximises `r²`.
pub fn optimal_kappa_ex(g: f64, gamma: f64, kappa_i: f64) -> f64 {
    kappa_i * (1.0 + 2.0 * g * g / (kappa_i * gamma)).sqrt()
}

/// Reflection amplitude at the optimal coupling, `(s − 1)/(s + 1)` with
/// `s = √(1 + 2g²/(κ_i γ))`. Equals `−t0` there.
pub fn optimal_reflection(g: f64, gamma: f64, kappa_i: f64) -> f64 {
    let s = (1.0 + 2.0 * g * g / (kappa_i * gamma)).sqrt();
    (s - 1.0) / (s + 1.0)
}

/// Overlap with the undesired circular polarization for a WGM resonator of
/// the given refractive index: `½ − n√(n² − 1)/(2n² − 1)`.
pub fn polarization_impurity_estimate(refractive_index: f64) -> Result<f64> {
    let n = refractive_index;
    if !(n > 1.0) {
        return Err(Error::domain(format!(
            "refractive index must exceed 1, got {n}"
        )));
    }
    Ok(0.5 - n * (n * n - 1.0).sqrt() / (2.0 * n * n - 1.0))
}

/// Purity `n/(2n − 1)` of the reflected and transmitted states for an
/// `n`-photon input.
pub fn reflected_purity(n_photons: u64) -> Result<f64> {
    if n_photons == 0 {
        return Err(Error::domain("purity is undefined for zero input photons"));
    }
    let n = n_photons as f64;
    Ok(n / (2.0 * n - 1.0))
}

/// Everything the `analytic` subcommand prints.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticReport {
    #[serde(rename = "4C")]
    pub four_c: f64,
    #[serde(rename = "Gamma_MHz")]
    pub gamma_directional: f64,
    pub t0: f64,
    pub r: f64,
    pub t: f64,
    #[serde(rename = "R")]
    pub reflectance: f64,
    #[serde(rename = "T")]
    pub transmittance: f64,
    pub loss: f64,
    pub empty_cavity_loss: f64,
    /// Extraction efficiency of an ideal extractor behind the empty-cavity loss, `t0²`.
    pub ideal_extractor_efficiency: f64,
    pub optimal_kappa_ex: f64,
    pub r_at_optimal_kappa_ex: f64,
    pub polarization_impurity_silica: f64,
    pub polarization_impurity_silicon_nitride: f64,
    pub purity: Vec<(u64, f64)>,
}

pub fn report(params: &PhysicalParams) -> Result<AnalyticReport> {
    let g = params.g_mean;
    let c = sprint_coefficients(params);
    let loss0 = empty_cavity_loss(params.kappa_ex, params.kappa_i)?;
    Ok(AnalyticReport {
        four_c: cooperativity4c(g, params.gamma, params.kappa_i, params.kappa_ex),
        gamma_directional: directional_rate(g, params.kappa_i, params.kappa_ex),
        t0: c.t0,
        r: c.r,
        t: c.t,
        reflectance: c.reflectance,
        transmittance: c.transmittance,
        loss: c.loss,
        empty_cavity_loss: loss0,
        ideal_extractor_efficiency: 1.0 - loss0,
        optimal_kappa_ex: optimal_kappa_ex(g, params.gamma, params.kappa_i),
        r_at_optimal_kappa_ex: optimal_reflection(g, params.gamma, params.kappa_i),
        polarization_impurity_silica: polarization_impurity_estimate(1.45)?,
        polarization_impurity_silicon_nitride: polarization_impurity_estimate(2.0)?,
        purity: [1u64, 2, 5, 11]
            .into_iter()
            .map(|n| (n, reflected_purity(n).expect("n > 0")))
            .collect(),
    })
}
