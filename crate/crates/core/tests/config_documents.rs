use proptest::prelude::*;
use sprint_core::params::Branching;
use sprint_core::{Config, Error};

#[test]
fn empty_document_gives_defaults() {
    assert_eq!(Config::from_json("{}").unwrap(), Config::default());
    assert_eq!(Config::from_json("").unwrap(), Config::default());
}

#[test]
fn unknown_keys_name_their_path() {
    for (doc, key) in [
        (r#"{"g_men": 20}"#, "g_men"),
        (r#"{"numerics": {"ntraj": 5}}"#, "numerics"),
        (r#"{"detectors": {"eta": "high"}}"#, "detectors.eta"),
    ] {
        match Config::from_json(doc) {
            Err(Error::Config { key: k, message }) => {
                assert!(k.contains(key) || message.contains(key), "{doc}: {k} / {message}")
            }
            other => panic!("{doc}: expected a config error, got {other:?}"),
        }
    }
}

#[test]
fn invariant_violations_are_rejected() {
    for doc in [
        r#"{"gamma": -1}"#,
        r#"{"p_imp": 1.5}"#,
        r#"{"detectors": {"N": 3, "N_d": 4}}"#,
        r#"{"numerics": {"n_traj": 0}}"#,
    ] {
        assert!(Config::from_json(doc).is_err(), "{doc}");
    }
}

proptest! {
    #[test]
    fn documents_round_trip(
        g_mean in 1.0f64..60.0,
        g_sd in 0.0f64..15.0,
        gamma in 0.5f64..10.0,
        kappa_i in 0.1f64..20.0,
        kappa_ex in 1.0f64..80.0,
        p_imp in 0.0f64..0.2,
        zeeman in any::<bool>(),
        n_traj in 1usize..5000,
        seed in any::<u64>(),
        eta in 0.0f64..=1.0,
    ) {
        let mut c = Config::default();
        c.physical.g_mean = g_mean;
        c.physical.g_sd = g_sd;
        c.physical.gamma = gamma;
        c.physical.kappa_i = kappa_i;
        c.physical.kappa_ex = kappa_ex;
        c.physical.p_imp = p_imp;
        c.physical.branching = if zeeman { Branching::ZEEMAN } else { Branching::IDEAL };
        c.numerics.n_traj = n_traj;
        c.numerics.master_seed = seed;
        c.detectors.eta = eta;
        let back = Config::from_json(&c.to_json_string()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.parameter_hash(), c.parameter_hash());
    }
}
