//! Second excited level (the F'=1 analog of e0) and the interference it
//! causes in the extraction efficiency.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    build_model, evolve_master, spontaneous_jumps, Channel, MasterOptions, ModelOperators,
};
use crate::error::{Error, Result};
use crate::hilbert::{annihilation_op, sigma, AtomLevel, AtomLevelSet, CompositeSpace, Mode, ONE};
use crate::params::{angular_per_ns, PhysicalParams, PulseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultilevelSpec {
    pub enabled: bool,
    /// Splitting of e1 above e0, MHz.
    pub delta_e1: f64,
    /// Relative coupling of the α–e1 leg (mode a).
    pub c1_plus: f64,
    /// Relative coupling of the β–e1 leg (mode b).
    pub c1_minus: f64,
}

impl Default for MultilevelSpec {
    fn default() -> Self {
        MultilevelSpec {
            enabled: true,
            delta_e1: 72.2,
            // ratio of F'=1 to F'=0 dipole elements, scripts/derive_f1_couplings.py
            c1_plus: 5f64.sqrt() / 2.0,
            c1_minus: -(5f64.sqrt()) / 2.0,
        }
    }
}

/// Largest admissible |c1|.
pub const C1_BOUND: f64 = 2.0;

impl MultilevelSpec {
    pub fn disabled() -> Self {
        MultilevelSpec {
            enabled: false,
            ..MultilevelSpec::default()
        }
    }

    pub fn enabled() -> Self {
        MultilevelSpec::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (key, value) in [
            ("multilevel.delta_e1", self.delta_e1),
            ("multilevel.c1_plus", self.c1_plus),
            ("multilevel.c1_minus", self.c1_minus),
        ] {
            if !value.is_finite() {
                return Err(Error::invariant(key, value, "must be finite"));
            }
        }
        for (key, value) in [("multilevel.c1_plus", self.c1_plus), ("multilevel.c1_minus", self.c1_minus)] {
            if value.abs() > C1_BOUND {
                return Err(Error::invariant(key, value, "|c1| must not exceed 2"));
            }
        }
        if self.enabled && self.c1_plus * self.c1_minus >= 0.0 {
            return Err(Error::invariant(
                "multilevel",
                format!("c1_plus·c1_minus = {}", self.c1_plus * self.c1_minus),
                "an enabled F'=1 level needs couplings of opposite sign",
            ));
        }
        Ok(())
    }
}

/// Adds e1: its energy `Δ_a + δ_e1`, couplings scaled by `c1_±` and its
/// spontaneous decay with the configured branching. The coupling-sign rule
/// is not checked here.
pub fn extend_model(model: ModelOperators, params: &PhysicalParams, spec: &MultilevelSpec) -> Result<ModelOperators> {
    let space = model.space.clone();
    if !space.levels().contains(AtomLevel::E1) {
        return Err(Error::domain("extend_model: the space has no e1 level"));
    }
    let w = angular_per_ns;
    let g = w(model.g);
    let main = g * (1.0 - params.p_imp).sqrt();
    let imp = g * params.p_imp.sqrt();
    let ad = annihilation_op(&space, Mode::A).adjoint();
    let bd = annihilation_op(&space, Mode::B).adjoint();
    let lower_alpha = sigma(&space, AtomLevel::Alpha, AtomLevel::E1)?;
    let lower_beta = sigma(&space, AtomLevel::Beta, AtomLevel::E1)?;
    let coupling = ad
        .mul(&lower_alpha)
        .scale(ONE * (main * spec.c1_plus))
        .add(&bd.mul(&lower_beta).scale(ONE * (main * spec.c1_minus)))
        .add(&ad.mul(&lower_beta).scale(ONE * (imp * spec.c1_minus)))
        .add(&bd.mul(&lower_alpha).scale(ONE * (imp * spec.c1_plus)));
    let energy = sigma(&space, AtomLevel::E1, AtomLevel::E1)?.scale(ONE * w(params.delta_a + spec.delta_e1));
    let h_extra = energy.add(&coupling).add(&coupling.adjoint());
    let jumps = spontaneous_jumps(params, &space, AtomLevel::E1)?;
    Ok(model.with_extra_terms(&h_extra, jumps))
}

/// Weak-drive settings for efficiency scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub n_bar: f64,
    /// Square pulse duration, ns.
    pub duration: f64,
    pub fock: usize,
    pub dt: f64,
    pub tolerance: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            n_bar: 0.01,
            duration: 1000.0,
            fock: 2,
            dt: 0.5,
            tolerance: 1e-7,
        }
    }
}

/// Reflected photons per input photon for a weak square pulse, computed
/// with the master equation from `|α, 0, 0⟩`.
pub fn weak_drive_efficiency(params: &PhysicalParams, options: &ScanOptions) -> Result<f64> {
    let pulse = PulseSpec::square(options.duration, options.n_bar);
    let space = CompositeSpace::new(
        AtomLevelSet::new(params.multilevel.enabled, params.branching.has_dark()),
        options.fock,
        options.fock,
    );
    let model = build_model(params, &pulse, &space)?;
    let series = evolve_master(
        &model,
        &MasterOptions {
            dt: options.dt,
            tolerance: options.tolerance,
            initial: AtomLevel::Alpha,
        },
    )?;
    Ok(series.mean(Channel::R) / options.n_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    #[serde(rename = "detuning_MHz")]
    pub detuning: f64,
    pub efficiency: f64,
    pub degradation: f64,
}

/// Probe and cavity detuned together by `δ` from e0 towards e1 (the atom
/// sees `Δ_a − δ`). Degradation is the three-level efficiency at zero
/// detuning minus the efficiency at `δ`, in absolute units.
pub fn detuning_scan(
    params: &PhysicalParams,
    spec: &MultilevelSpec,
    grid: &[f64],
    options: &ScanOptions,
) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::domain("detuning grid is empty"));
    }
    let mut base = params.clone();
    base.multilevel = MultilevelSpec {
        enabled: false,
        ..spec.clone()
    };
    let reference = weak_drive_efficiency(&base, options)?;
    grid.par_iter()
        .map(|&delta| {
            let mut p = params.clone();
            p.multilevel = spec.clone();
            p.delta_a = params.delta_a - delta;
            let efficiency = weak_drive_efficiency(&p, options)?;
            Ok(ScanPoint {
                detuning: delta,
                efficiency,
                degradation: reference - efficiency,
            })
        })
        .collect()
}

pub fn write_scan_csv(points: &[ScanPoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Branching;

    fn fact(n: i64) -> Option<f64> {
        (n >= 0).then(|| (1..=n).map(|k| k as f64).product())
    }

    // angular momenta passed doubled so half-integers stay integral
    fn delta(a: i64, b: i64, c: i64) -> f64 {
        fact((a + b - c) / 2).unwrap() * fact((a - b + c) / 2).unwrap() * fact((-a + b + c) / 2).unwrap()
            / fact((a + b + c) / 2 + 1).unwrap()
    }

    fn three_j(j1: i64, j2: i64, j3: i64, m1: i64, m2: i64, m3: i64) -> f64 {
        if m1 + m2 + m3 != 0 {
            return 0.0;
        }
        let pre = delta(j1, j2, j3)
            * [(j1 + m1), (j1 - m1), (j2 + m2), (j2 - m2), (j3 + m3), (j3 - m3)]
                .iter()
                .map(|&x| fact(x / 2).unwrap())
                .product::<f64>();
        let mut sum = 0.0;
        for k in 0..=20 {
            let terms = [
                k,
                (j3 - j2 + m1) / 2 + k,
                (j3 - j1 - m2) / 2 + k,
                (j1 + j2 - j3) / 2 - k,
                (j1 - m1) / 2 - k,
                (j2 + m2) / 2 - k,
            ];
            if terms.iter().any(|&t| t < 0) {
                continue;
            }
            let denom: f64 = terms.iter().map(|&t| fact(t).unwrap()).product();
            sum += if k % 2 == 0 { 1.0 } else { -1.0 } / denom;
        }
        let phase = if ((j1 - j2 - m3) / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        phase * pre.sqrt() * sum
    }

    fn six_j(j1: i64, j2: i64, j3: i64, j4: i64, j5: i64, j6: i64) -> f64 {
        let pre = delta(j1, j2, j3) * delta(j1, j5, j6) * delta(j4, j2, j6) * delta(j4, j5, j3);
        let mut sum = 0.0;
        for t in 0..=30 {
            let lower = [
                t - (j1 + j2 + j3) / 2,
                t - (j1 + j5 + j6) / 2,
                t - (j4 + j2 + j6) / 2,
                t - (j4 + j5 + j3) / 2,
                (j1 + j2 + j4 + j5) / 2 - t,
                (j2 + j3 + j5 + j6) / 2 - t,
                (j3 + j1 + j6 + j4) / 2 - t,
            ];
            if lower.iter().any(|&x| x < 0) {
                continue;
            }
            let denom: f64 = lower.iter().map(|&x| fact(x).unwrap()).product();
            sum += if t % 2 == 0 { 1.0 } else { -1.0 } * fact(t + 1).unwrap() / denom;
        }
        pre.sqrt() * sum
    }

    /// ⟨F m | d_q | F' m'⟩ on the D2 line of a nuclear spin 3/2 atom, doubled units.
    fn dipole(f: i64, m: i64, fp: i64, mp: i64) -> f64 {
        let (j, jp, i) = (1, 3, 3);
        let q = m - mp;
        let exponent = (2 * fp + j + i + m) / 2;
        let phase = if exponent.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        phase
            * (((fp + 1) * (f + 1) * (j + 1)) as f64).sqrt()
            * six_j(j, jp, 2, fp, f, i)
            * three_j(fp, 2, f, mp, q, -m)
    }

    #[test]
    fn wigner_symbols_match_known_values() {
        // (1 1 0; 0 0 0) = −1/√3, {1/2 1/2 1; 1/2 1/2 0} = 1/2
        assert_close!(three_j(2, 2, 0, 0, 0, 0), -1.0 / 3f64.sqrt(), 1e-14);
        assert_close!(six_j(1, 1, 2, 1, 1, 0), 0.5, 1e-14);
        // (1/2 1/2 1; 1/2 −1/2 0) = 1/√6
        assert_close!(three_j(1, 1, 2, 1, -1, 0), 1.0 / 6f64.sqrt(), 1e-14);
    }

    #[test]
    fn default_couplings_follow_from_angular_momentum() {
        let spec = MultilevelSpec::default();
        let plus = dipole(2, -2, 2, 0) / dipole(2, -2, 0, 0);
        let minus = dipole(2, 2, 2, 0) / dipole(2, 2, 0, 0);
        assert_close!(spec.c1_plus, plus, 1e-12);
        assert_close!(spec.c1_minus, minus, 1e-12);
        assert!(spec.c1_plus * spec.c1_minus < 0.0);
    }

    #[test]
    fn validation_rules() {
        assert!(MultilevelSpec::enabled().validate().is_ok());
        let mut same = MultilevelSpec::enabled();
        same.c1_minus = 0.5;
        assert!(same.validate().is_err());
        same.enabled = false;
        assert!(same.validate().is_ok());
        let mut big = MultilevelSpec::enabled();
        big.c1_plus = 2.5;
        assert!(big.validate().is_err());
    }

    fn ideal_with(spec: MultilevelSpec) -> PhysicalParams {
        PhysicalParams {
            multilevel: spec,
            ..PhysicalParams::ideal()
        }
    }

    fn quick() -> ScanOptions {
        ScanOptions {
            duration: 400.0,
            ..ScanOptions::default()
        }
    }

    #[test]
    fn zero_couplings_reduce_to_three_levels() {
        let spec = MultilevelSpec {
            enabled: true,
            c1_plus: 0.0,
            c1_minus: 0.0,
            ..MultilevelSpec::default()
        };
        let three = weak_drive_efficiency(&PhysicalParams::ideal(), &quick()).unwrap();
        let four = weak_drive_efficiency(&ideal_with(spec), &quick()).unwrap();
        assert_close!(four, three, 1e-7);
    }

    #[test]
    fn global_sign_flip_changes_nothing() {
        let spec = MultilevelSpec::enabled();
        let flipped = MultilevelSpec {
            c1_plus: -spec.c1_plus,
            c1_minus: -spec.c1_minus,
            ..spec.clone()
        };
        let a = weak_drive_efficiency(&ideal_with(spec), &quick()).unwrap();
        let b = weak_drive_efficiency(&ideal_with(flipped), &quick()).unwrap();
        assert_close!(a, b, 1e-9);
    }

    #[test]
    fn extend_requires_e1() {
        let params = PhysicalParams::ideal();
        let space = CompositeSpace::new(AtomLevelSet::new(false, false), 2, 2);
        let model = build_model(&params, &PulseSpec::default(), &space).unwrap();
        assert!(extend_model(model, &params, &MultilevelSpec::enabled()).is_err());
    }

    #[test]
    fn disabled_scan_has_no_degradation_on_resonance() {
        let mut params = PhysicalParams::ideal();
        params.branching = Branching::IDEAL;
        let points = detuning_scan(&params, &MultilevelSpec::disabled(), &[0.0], &quick()).unwrap();
        assert_eq!(points[0].degradation, 0.0);
        assert!(detuning_scan(&params, &MultilevelSpec::disabled(), &[], &quick()).is_err());
    }
}
