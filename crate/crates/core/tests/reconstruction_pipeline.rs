use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Poisson};
use sprint_core::detectors::{detect, ClickHistogram, DetectorConfig};
use sprint_core::fockops::PhotonNumberDistribution;
use sprint_core::reconstruct::{default_k_max, maxent_solve, reconstruct_with_uncertainty, select_lambda};
use sprint_core::detectors::forward_matrix;
use sprint_core::rng::{stream, Purpose};

/// Event-level clicks for `m` Poisson pulses; returns the detector index of
/// every click so labels can be permuted afterwards.
fn clicked_detectors(mean: f64, m: usize, cfg: &DetectorConfig, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = stream(seed, Purpose::Synthetic, 0);
    let pois = Poisson::new(mean).unwrap();
    (0..m)
        .map(|_| {
            let k = pois.sample(&mut rng) as usize;
            detect(&vec![0.0; k], cfg, &mut rng).iter().map(|c| c.detector).collect()
        })
        .collect()
}

fn histogram(events: &[Vec<usize>], labels: &[usize], cfg: &DetectorConfig) -> ClickHistogram {
    let counts = events.iter().map(|clicks| {
        let mut fired: Vec<usize> = clicks.iter().map(|&d| labels[d]).collect();
        fired.sort_unstable();
        fired.dedup();
        fired.len()
    });
    ClickHistogram::from_click_counts(counts.collect::<Vec<_>>(), cfg.max_clicks())
}

#[test]
fn event_level_poisson5_with_ten_thousand_pulses() {
    let cfg = DetectorConfig::default();
    let truth = PhotonNumberDistribution::poisson(5.0).unwrap();
    let identity: Vec<usize> = (0..cfg.n).collect();
    let hist = histogram(&clicked_detectors(5.0, 10_000, &cfg, 3), &identity, &cfg);
    let k = default_k_max(hist.mean_clicks(), &cfg).unwrap();
    let a = forward_matrix(&cfg, k);
    let (sel, sol) = select_lambda(&hist.probabilities(), &a, hist.repetitions()).unwrap();
    assert!(!sel.warning);
    assert!(sol.x.total_variation(&truth) < 0.05, "TV {}", sol.x.total_variation(&truth));
    assert!(sol.normalization_residual < 1e-9);
    assert!(sol.mean_residual < 1e-9);
    assert!(sol.stationarity_residual < 1e-6);
}

#[test]
fn relabelling_detectors_gives_identical_reconstruction() {
    let cfg = DetectorConfig::default();
    let events = clicked_detectors(3.0, 5_000, &cfg, 9);
    let identity: Vec<usize> = (0..cfg.n).collect();
    let base = reconstruct_with_uncertainty(&histogram(&events, &identity, &cfg), &cfg, 8, 4, None).unwrap();
    let mut rng = stream(9, Purpose::Synthetic, 1);
    for _ in 0..5 {
        let mut labels = identity.clone();
        labels.shuffle(&mut rng);
        let again = reconstruct_with_uncertainty(&histogram(&events, &labels, &cfg), &cfg, 8, 4, None).unwrap();
        assert_eq!(again.probs(), base.probs());
        assert_eq!(again.lower, base.lower);
        assert_eq!(again.upper, base.upper);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]
    #[test]
    fn solutions_meet_constraints(mean in 0.3f64..8.0, log_lambda in -6.0f64..2.0, seed in 0u64..1000) {
        let cfg = DetectorConfig::default();
        let identity: Vec<usize> = (0..cfg.n).collect();
        let hist = histogram(&clicked_detectors(mean, 2_000, &cfg, seed), &identity, &cfg);
        let k = default_k_max(hist.mean_clicks(), &cfg).unwrap();
        let a = forward_matrix(&cfg, k);
        let sol = maxent_solve(&hist.probabilities(), &a, 10f64.powf(log_lambda)).unwrap();
        prop_assert!(sol.x.probs().iter().all(|&p| p >= 0.0));
        prop_assert!(sol.normalization_residual < 1e-9);
        prop_assert!(sol.mean_residual < 1e-8, "mean residual {} chi2 {} it {}", sol.mean_residual, sol.chi2, sol.iterations);
        prop_assert!(sol.stationarity_residual < 1e-6, "stationarity {}", sol.stationarity_residual);
    }
}

#[test]
fn bootstrap_band_covers_poisson_truth() {
    let cfg = DetectorConfig::default();
    let truth = PhotonNumberDistribution::poisson(2.5).unwrap();
    let identity: Vec<usize> = (0..cfg.n).collect();
    let hist = histogram(&clicked_detectors(2.5, 20_000, &cfg, 11), &identity, &cfg);
    let rec = reconstruct_with_uncertainty(&hist, &cfg, 100, 11, None).unwrap();
    let coverage = rec.coverage(&truth, 0.0);
    assert!(coverage >= 0.8, "coverage {coverage} over {} bins\nlo {:?}\nhi {:?}", rec.k_max + 1, rec.lower, rec.upper);
}
