//! Deterministic single-photon extraction from optical pulses by
//! single-photon Raman interaction in a fiber-coupled cavity.
//!
//! The crate covers the full pipeline: parameters and units ([`params`]),
//! the truncated atom ⊗ two-mode Hilbert space ([`hilbert`]), closed-form
//! steady states ([`analytic`]), photon-number transforms ([`fockops`]),
//! master-equation and quantum-trajectory dynamics ([`dynamics`]), the
//! detector cascade ([`detectors`]), maximum-entropy photon-number
//! reconstruction ([`reconstruct`]), the F'=1 extension ([`multilevel`]) and
//! the scenario harness that produces figure datasets ([`experiment`]).

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} = {a}, expected {b} ± {tol}", stringify!($a));
    }};
}

pub mod analytic;
pub mod detectors;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fockops;
pub mod hilbert;
pub mod multilevel;
pub mod params;
pub mod reconstruct;
pub mod rng;
pub mod validation;

pub use error::{Error, Result};
pub use params::{Config, NumericsConfig, PhysicalParams, PulseShape, PulseSpec};
