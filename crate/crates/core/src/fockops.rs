//! Single-mode photon-number distributions and the two photon-removal maps:
//! heralded annihilation â and deterministic extraction ŝ.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Tail mass allowed beyond the cutoff when building a distribution.
pub const TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "parameter")]
pub enum DistributionKind {
    Poisson(f64),
    Thermal(f64),
    Fock(usize),
}

/// Probabilities p_0..p_K.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// ⟨n(n−1)⟩/⟨n⟩², absent for the vacuum.
    pub g2: Option<f64>,
}

impl PhotonNumberDistribution {
    /// Wrap probabilities that are non-negative and sum to 1 within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("distribution needs at least one entry"));
        }
        if let Some((n, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
            return Err(Error::domain(format!("p_{n} = {p} is negative or NaN")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(PhotonNumberDistribution { probs })
    }

    /// Normalise arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::domain("weights have no mass"));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::from_weights(&w)
    }

    pub fn vacuum() -> Self {
        PhotonNumberDistribution { probs: vec![1.0] }
    }

    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        PhotonNumberDistribution { probs }
    }

    pub fn poisson(mean: f64) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::domain(format!("Poisson mean must be >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(Self::vacuum());
        }
        let mut probs = Vec::new();
        let mut cumulative = 0.0;
        let mut n = 0usize;
        loop {
            let p = (n as f64 * mean.ln() - mean - ln_gamma(n as f64 + 1.0)).exp();
            probs.push(p);
            cumulative += p;
            if n as f64 > mean && 1.0 - cumulative < TAIL {
                break;
            }
            n += 1;
        }
        Self::from_weights(&probs)
    }

    pub fn thermal(mean: f64) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::domain(format!("thermal mean must be >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(Self::vacuum());
        }
        let x = mean / (1.0 + mean);
        // tail beyond K is x^(K+1)
        let cutoff = (TAIL.ln() / x.ln()).ceil() as usize;
        let probs: Vec<f64> = (0..=cutoff).map(|n| x.powi(n as i32) / (1.0 + mean)).collect();
        Self::from_weights(&probs)
    }

    pub fn make(kind: DistributionKind) -> Result<Self> {
        match kind {
            DistributionKind::Poisson(mean) => Self::poisson(mean),
            DistributionKind::Thermal(mean) => Self::thermal(mean),
            DistributionKind::Fock(n) => Ok(Self::fock(n)),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Highest represented photon number.
    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn p(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    fn factorial_moment2(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p)
            .sum()
    }

    pub fn stats(&self) -> Moments {
        let mean = self.mean();
        let second: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n * n) as f64 * p)
            .sum();
        let g2 = (mean > 0.0).then(|| self.factorial_moment2() / (mean * mean));
        Moments {
            mean,
            variance: second - mean * mean,
            g2,
        }
    }

    /// Pulse-integrated ⟨n(n−1)⟩/⟨n⟩².
    pub fn g2(&self) -> Result<f64> {
        self.stats()
            .g2
            .ok_or_else(|| Error::domain("g2 is undefined for a distribution with zero mean"))
    }

    /// Binomial thinning: each photon survives independently with probability `eta`.
    pub fn thin(&self, eta: f64) -> Self {
        if eta == 1.0 {
            return self.clone();
        }
        let k = self.cutoff();
        let mut out = vec![0.0; k + 1];
        for (n, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (m, slot) in out.iter_mut().enumerate().take(n + 1) {
                let ln_binom = ln_gamma(n as f64 + 1.0)
                    - ln_gamma(m as f64 + 1.0)
                    - ln_gamma((n - m) as f64 + 1.0);
                let w = if eta == 0.0 {
                    if m == 0 { 1.0 } else { 0.0 }
                } else if eta == 1.0 {
                    if m == n { 1.0 } else { 0.0 }
                } else {
                    (ln_binom + m as f64 * eta.ln() + (n - m) as f64 * (1.0 - eta).ln()).exp()
                };
                *slot += p * w;
            }
        }
        PhotonNumberDistribution::from_weights(&out).expect("thinning preserves mass")
    }

    /// `w·self + (1 − w)·other`.
    pub fn mix(&self, w: f64, other: &Self) -> Self {
        let len = self.probs.len().max(other.probs.len());
        let probs: Vec<f64> = (0..len)
            .map(|n| w * self.p(n) + (1.0 - w) * other.p(n))
            .collect();
        PhotonNumberDistribution::from_weights(&probs).expect("mixture has mass")
    }

    /// Half the L1 distance.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        0.5 * (0..len).map(|n| (self.p(n) - other.p(n)).abs()).sum::<f64>()
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            entries.push((row.n, row.p));
        }
        if entries.is_empty() {
            return Err(Error::domain("distribution CSV has no rows"));
        }
        let cutoff = entries.iter().map(|e| e.0).max().unwrap();
        let mut probs = vec![0.0; cutoff + 1];
        for (n, p) in entries {
            probs[n] += p;
        }
        Self::new(probs)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (n, &p) in self.probs.iter().enumerate() {
            w.serialize(CsvRow { n, p })?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    n: usize,
    p: f64,
}

/// Result of heralded annihilation: the post-selected state and the
/// unnormalised branch weight ‖â|ψ⟩‖² = ⟨n⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct Annihilated {
    pub dist: PhotonNumberDistribution,
    pub branch_weight: f64,
}

/// â = Σ √n |n−1⟩⟨n|, renormalised: p′_m ∝ (m+1) p_{m+1}.
pub fn apply_annihilation(dist: &PhotonNumberDistribution) -> Result<Annihilated> {
    let weight = dist.mean();
    if weight <= 0.0 {
        return Err(Error::domain("annihilation of the vacuum is impossible"));
    }
    let probs: Vec<f64> = (0..dist.cutoff().max(1))
        .map(|m| (m + 1) as f64 * dist.p(m + 1) / weight)
        .collect();
    Ok(Annihilated {
        dist: PhotonNumberDistribution::from_weights(&probs)?,
        branch_weight: weight,
    })
}

/// ŝ = |0⟩⟨0| + Σ |n−1⟩⟨n|: p′_0 = p_0 + p_1, p′_m = p_{m+1}.
pub fn apply_extraction(dist: &PhotonNumberDistribution) -> PhotonNumberDistribution {
    let k = dist.cutoff();
    if k == 0 {
        return dist.clone();
    }
    let mut probs = Vec::with_capacity(k);
    probs.push(dist.p(0) + dist.p(1));
    probs.extend((1..k).map(|m| dist.p(m + 1)));
    PhotonNumberDistribution { probs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    // direct sums over an explicitly built truncated support, independent of
    // the library's moment helpers
    fn brute_mean(p: &[f64]) -> f64 {
        let mut s = 0.0;
        for n in 0..p.len() {
            s += n as f64 * p[n];
        }
        s
    }

    #[test]
    fn constructors() {
        assert_eq!(PhotonNumberDistribution::poisson(0.0).unwrap().probs(), &[1.0]);
        let f = PhotonNumberDistribution::fock(3);
        assert_eq!(f.p(3), 1.0);
        let p5 = PhotonNumberDistribution::poisson(5.0).unwrap();
        close(p5.p(5), 0.17546736976785063, 1e-9);
        assert!(PhotonNumberDistribution::poisson(-1.0).is_err());
        assert!(PhotonNumberDistribution::thermal(-0.5).is_err());
        let th = PhotonNumberDistribution::thermal(2.0).unwrap();
        close(th.mean(), 2.0, 1e-6);
    }

    #[test]
    fn annihilation_examples() {
        let out = apply_annihilation(&PhotonNumberDistribution::fock(3)).unwrap();
        assert_eq!(out.dist.p(2), 1.0);
        assert_eq!(out.branch_weight, 3.0);
        assert!(apply_annihilation(&PhotonNumberDistribution::vacuum()).is_err());
    }

    #[test]
    fn annihilation_doubles_thermal_mean() {
        for mu in [0.3, 1.0, 2.5, 6.0] {
            let th = PhotonNumberDistribution::thermal(mu).unwrap();
            // oracle: (m+1) p_{m+1} reweighting summed by hand
            let p = th.probs();
            let mut num = 0.0;
            let mut den = 0.0;
            for m in 0..p.len() - 1 {
                num += m as f64 * (m + 1) as f64 * p[m + 1];
                den += (m + 1) as f64 * p[m + 1];
            }
            let out = apply_annihilation(&th).unwrap().dist;
            close(out.mean(), num / den, 1e-12);
            close(out.mean(), 2.0 * mu, 1e-6);
        }
    }

    #[test]
    fn annihilation_leaves_poisson_invariant() {
        for mu in [0.5, 2.5, 5.0, 11.3] {
            let p = PhotonNumberDistribution::poisson(mu).unwrap();
            let out = apply_annihilation(&p).unwrap().dist;
            assert!(out.total_variation(&p) < 1e-8, "mu = {mu}");
            close(out.g2().unwrap(), 1.0, 1e-6);
        }
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(apply_extraction(&PhotonNumberDistribution::fock(3)).p(2), 1.0);
        assert_eq!(
            apply_extraction(&PhotonNumberDistribution::vacuum()),
            PhotonNumberDistribution::vacuum()
        );
        let p5 = PhotonNumberDistribution::poisson(5.0).unwrap();
        let out = apply_extraction(&p5);
        close(brute_mean(out.probs()), 4.0 + (-5.0f64).exp(), 1e-9);
    }

    #[test]
    fn g2_values() {
        for mu in [0.2, 1.0, 5.8] {
            close(PhotonNumberDistribution::poisson(mu).unwrap().g2().unwrap(), 1.0, 1e-7);
            close(PhotonNumberDistribution::thermal(mu).unwrap().g2().unwrap(), 2.0, 1e-6);
        }
        assert_eq!(PhotonNumberDistribution::fock(1).g2().unwrap(), 0.0);
        assert!(PhotonNumberDistribution::vacuum().g2().is_err());
        let m = PhotonNumberDistribution::poisson(3.0).unwrap().stats();
        close(m.variance, 3.0, 1e-6);
    }

    #[test]
    fn thinning_poisson_is_poisson() {
        let p = PhotonNumberDistribution::poisson(6.0).unwrap();
        let thinned = p.thin(1.0 / 3.0);
        let expected = PhotonNumberDistribution::poisson(2.0).unwrap();
        assert!(thinned.total_variation(&expected) < 1e-8);
        assert_eq!(p.thin(1.0), p);
        assert_eq!(p.thin(0.0).p(0), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = PhotonNumberDistribution::poisson(2.5).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,p\n"));
        let back = PhotonNumberDistribution::read_csv(buf.as_slice()).unwrap();
        assert!(back.total_variation(&p) < 1e-15);
        assert!(PhotonNumberDistribution::read_csv("n,p\n0,0.5\n".as_bytes()).is_err());
    }

    fn arb_dist() -> impl Strategy<Value = PhotonNumberDistribution> {
        proptest::collection::vec(0.0f64..1.0, 1..25)
            .prop_filter("needs mass", |w| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|w| PhotonNumberDistribution::from_weights(&w).unwrap())
    }

    proptest! {
        #[test]
        fn transforms_preserve_normalisation(d in arb_dist()) {
            let s: f64 = apply_extraction(&d).probs().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            if d.mean() > 0.0 {
                let a = apply_annihilation(&d).unwrap();
                let s: f64 = a.dist.probs().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn extraction_shifts_vacuum_free_distributions(w in proptest::collection::vec(0.0f64..1.0, 2..25)) {
            let mut w = w;
            w[0] = 0.0;
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let d = PhotonNumberDistribution::from_weights(&w).unwrap();
            let out = apply_extraction(&d);
            for n in 1..d.probs().len() {
                prop_assert!((out.p(n - 1) - d.p(n)).abs() < 1e-6);
            }
        }

        #[test]
        fn annihilation_raises_super_poissonian_means(d in arb_dist()) {
            prop_assume!(d.mean() > 0.0);
            let g2 = d.g2().unwrap();
            prop_assume!(g2 > 1.0 + 1e-9);
            let out = apply_annihilation(&d).unwrap().dist;
            prop_assert!(out.mean() > d.mean());
        }
    }
}
