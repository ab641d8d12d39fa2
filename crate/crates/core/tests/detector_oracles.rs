use proptest::prelude::*;
use sprint_core::detectors::{click_probability, detect, forward_matrix, DetectorConfig};
use sprint_core::rng::{stream, Purpose};

fn cfg(n: usize, eta: f64, n_dead: usize) -> DetectorConfig {
    DetectorConfig {
        n,
        eta,
        dead_time: 60.0,
        n_dead,
    }
}

/// Exact P(n|k) by enumerating every routing of k photons: each is lost with
/// probability 1 − η or lands on detector d with probability η/N.
fn enumerate(n: usize, k: usize, c: &DetectorConfig) -> f64 {
    let outcomes = c.n + 1;
    let mut total = 0.0;
    for code in 0..outcomes.pow(k as u32) {
        let mut hit = vec![false; c.n];
        let mut weight = 1.0;
        let mut rest = code;
        for _ in 0..k {
            let o = rest % outcomes;
            rest /= outcomes;
            if o == c.n {
                weight *= 1.0 - c.eta;
            } else {
                weight *= c.eta / c.n as f64;
                if o >= c.n_dead {
                    hit[o] = true;
                }
            }
        }
        if hit.iter().filter(|&&h| h).count() == n {
            total += weight;
        }
    }
    total
}

#[test]
fn closed_form_matches_event_monte_carlo() {
    let samples = 200_000;
    for c in [DetectorConfig::default(), cfg(4, 0.7, 1)] {
        for k in [1usize, 3, 6, 10] {
            let mut rng = stream(11, Purpose::Synthetic, k as u64);
            let times = vec![0.0; k];
            let mut counts = vec![0u64; c.max_clicks() + 1];
            for _ in 0..samples {
                counts[detect(&times, &c, &mut rng).len()] += 1;
            }
            for (n, &count) in counts.iter().enumerate() {
                let p = click_probability(n, k, &c).unwrap();
                let f = count as f64 / samples as f64;
                let sigma = (p * (1.0 - p) / samples as f64).sqrt().max(1.0 / samples as f64);
                assert!((f - p).abs() < 5.0 * sigma, "N={} k={k} n={n}: {f} vs {p}", c.n);
            }
        }
    }
}

#[test]
fn default_table_first_rows() {
    let c = DetectorConfig::default();
    let a = forward_matrix(&c, 3);
    assert_eq!(a[(0, 0)], 1.0);
    assert!((a[(0, 1)] - 2.0 / 3.0).abs() < 1e-15);
    assert!((a[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
    // two photons on distinct detectors: (η)² · 4/5
    assert!((a[(2, 2)] - 4.0 / 45.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn closed_form_matches_enumeration(
        n_det in 1usize..5,
        dead in 0usize..3,
        eta in 0.0f64..=1.0,
        k in 0usize..6,
    ) {
        prop_assume!(dead <= n_det);
        let c = cfg(n_det, eta, dead);
        for n in 0..=c.max_clicks() {
            let exact = enumerate(n, k, &c);
            let p = click_probability(n, k, &c).unwrap();
            prop_assert!((p - exact).abs() < 1e-12, "n={n} k={k}: {p} vs {exact}");
        }
    }

    #[test]
    fn columns_sum_to_one_and_respect_bounds(
        n_det in 1usize..9,
        dead in 0usize..9,
        eta in 0.0f64..=1.0,
        k in 0usize..25,
    ) {
        prop_assume!(dead <= n_det);
        let c = cfg(n_det, eta, dead);
        let col: Vec<f64> = (0..=c.max_clicks()).map(|n| click_probability(n, k, &c).unwrap()).collect();
        prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (n, p) in col.iter().enumerate() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(p));
            if n > k {
                prop_assert!(*p < 1e-12);
            }
        }
    }
}
