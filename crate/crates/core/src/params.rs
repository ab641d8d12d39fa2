//! Physical, pulse and numerical parameters, plus the JSON configuration
//! document that carries them.
//!
//! Rates are configured as ordinary frequencies in MHz and converted to
//! angular rates by [`to_angular`] before any time evolution. Times are in ns.
//! Dimensionless quantities (cooperativity, amplitude coefficients) are built
//! from the raw MHz ratios, where the 2π cancels.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use statrs::function::erf::erf;

use crate::detectors::DetectorConfig;
use crate::error::{Error, Result};
use crate::experiment::ScenarioSpec;
use crate::multilevel::MultilevelSpec;

/// Angular rate in rad/µs for a frequency given in MHz.
pub fn to_angular(rate_mhz: f64) -> f64 {
    2.0 * PI * rate_mhz
}

/// Angular rate in rad/ns, the unit used by the integrators.
pub fn angular_per_ns(rate_mhz: f64) -> f64 {
    to_angular(rate_mhz) * 1e-3
}

/// Spontaneous-emission branching from an excited level into the two
/// coupled ground states and the decoupled dark level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branching {
    pub b_alpha: f64,
    pub b_beta: f64,
    pub b_dark: f64,
}

impl Branching {
    /// Clean three-level decay with no dark level.
    pub const IDEAL: Branching = Branching {
        b_alpha: 0.5,
        b_beta: 0.5,
        b_dark: 0.0,
    };

    /// Equal decay into the three F=1 Zeeman states, m=0 acting as dark level.
    pub const ZEEMAN: Branching = Branching {
        b_alpha: 1.0 / 3.0,
        b_beta: 1.0 / 3.0,
        b_dark: 1.0 / 3.0,
    };

    pub fn has_dark(&self) -> bool {
        self.b_dark > 0.0
    }
}

impl Default for Branching {
    fn default() -> Self {
        Branching::ZEEMAN
    }
}

/// All cavity and atom rates. Frequencies in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    pub g_mean: f64,
    pub g_sd: f64,
    pub gamma: f64,
    pub kappa_i: f64,
    pub kappa_ex: f64,
    pub delta_c: f64,
    pub delta_a: f64,
    pub p_imp: f64,
    pub multilevel: MultilevelSpec,
    pub branching: Branching,
    pub rayleigh_h: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            g_mean: 24.0,
            g_sd: 9.0,
            gamma: 3.0,
            kappa_i: 6.6,
            kappa_ex: 40.0,
            delta_c: 0.0,
            delta_a: 0.0,
            p_imp: 0.04,
            multilevel: MultilevelSpec::default(),
            branching: Branching::default(),
            rayleigh_h: 0.0,
        }
    }
}

impl PhysicalParams {
    /// Clean three-level Λ model: no polarization impurity, no F'=1 level,
    /// no dark level. Loss rates are kept.
    pub fn ideal() -> Self {
        PhysicalParams {
            p_imp: 0.0,
            multilevel: MultilevelSpec::disabled(),
            branching: Branching::IDEAL,
            ..PhysicalParams::default()
        }
    }

    pub fn kappa_total(&self) -> f64 {
        self.kappa_i + self.kappa_ex
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("g_mean", self.g_mean),
            ("g_sd", self.g_sd),
            ("gamma", self.gamma),
            ("kappa_i", self.kappa_i),
            ("kappa_ex", self.kappa_ex),
            ("rayleigh_h", self.rayleigh_h),
        ];
        for (key, value) in rates {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invariant(key, value, "rates must be finite and >= 0"));
            }
        }
        if self.gamma <= 0.0 {
            return Err(Error::invariant("gamma", self.gamma, "gamma must be > 0"));
        }
        if self.kappa_total() <= 0.0 {
            return Err(Error::invariant(
                "kappa_i + kappa_ex",
                self.kappa_total(),
                "total cavity decay must be > 0",
            ));
        }
        for (key, value) in [("delta_c", self.delta_c), ("delta_a", self.delta_a)] {
            if !value.is_finite() {
                return Err(Error::invariant(key, value, "detuning must be finite"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_imp) {
            return Err(Error::invariant("p_imp", self.p_imp, "must lie in [0, 1]"));
        }
        let b = self.branching;
        for (key, value) in [
            ("branching.b_alpha", b.b_alpha),
            ("branching.b_beta", b.b_beta),
            ("branching.b_dark", b.b_dark),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invariant(key, value, "branching ratios must be >= 0"));
            }
        }
        let sum = b.b_alpha + b.b_beta + b.b_dark;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invariant(
                "branching",
                format!("({}, {}, {})", b.b_alpha, b.b_beta, b.b_dark),
                "ratios must sum to 1",
            ));
        }
        self.multilevel.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Gaussian,
    Square,
}

/// Coherent input pulse. `width` is the intensity FWHM for a Gaussian and the
/// duration for a square pulse; the pulse is centred in `[t_start, t_end]`.
/// The envelope is normalised so that the photon flux integrates to `n_bar`
/// over the window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSpec {
    pub shape: PulseShape,
    pub width: f64,
    pub n_bar: f64,
    pub t_start: f64,
    pub t_end: f64,
}

const SQUARE_PAD_NS: f64 = 50.0;

impl PulseSpec {
    /// Gaussian pulse on a window of ±3 FWHM.
    pub fn gaussian(fwhm: f64, n_bar: f64) -> Self {
        PulseSpec {
            shape: PulseShape::Gaussian,
            width: fwhm,
            n_bar,
            t_start: 0.0,
            t_end: 6.0 * fwhm,
        }
    }

    /// Square pulse with 50 ns of ring-down on either side.
    pub fn square(duration: f64, n_bar: f64) -> Self {
        PulseSpec {
            shape: PulseShape::Square,
            width: duration,
            n_bar,
            t_start: 0.0,
            t_end: duration + 2.0 * SQUARE_PAD_NS,
        }
    }

    pub fn with_n_bar(&self, n_bar: f64) -> Self {
        PulseSpec {
            n_bar,
            ..self.clone()
        }
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    fn sigma(&self) -> f64 {
        self.width / (2.0 * (2.0 * LN_2).sqrt())
    }

    /// Square-pulse edges clipped to the window, empty for Gaussians.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            PulseShape::Gaussian => Vec::new(),
            PulseShape::Square => {
                let (lo, hi) = self.square_support();
                [lo, hi]
                    .into_iter()
                    .filter(|&t| t > self.t_start && t < self.t_end)
                    .collect()
            }
        }
    }

    fn square_support(&self) -> (f64, f64) {
        let c = self.center();
        (
            (c - 0.5 * self.width).max(self.t_start),
            (c + 0.5 * self.width).min(self.t_end),
        )
    }

    /// Normalised intensity profile: integrates to 1 over the window.
    pub fn profile(&self, t: f64) -> f64 {
        self.profile_fn()(t)
    }

    /// [`PulseSpec::profile`] with the normalisation computed once.
    pub fn profile_fn(&self) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        let (t_start, t_end) = (self.t_start, self.t_end);
        let c = self.center();
        // (shape-independent) gaussian parameters; square uses lo/hi
        let s = self.sigma();
        let (lo, hi) = self.square_support();
        let gaussian = self.shape == PulseShape::Gaussian;
        let norm = if gaussian {
            let a = (t_start - c) / (s * 2f64.sqrt());
            let b = (t_end - c) / (s * 2f64.sqrt());
            1.0 / (0.5 * s * (2.0 * PI).sqrt() * (erf(b) - erf(a)))
        } else {
            1.0 / (hi - lo)
        };
        move |t: f64| {
            if t < t_start || t > t_end {
                0.0
            } else if gaussian {
                (-(t - c).powi(2) / (2.0 * s * s)).exp() * norm
            } else if t >= lo && t < hi {
                norm
            } else {
                0.0
            }
        }
    }

    /// Real, non-negative field amplitude ε(t) in ns^-1/2; |ε|² is the photon flux.
    pub fn envelope(&self, t: f64) -> f64 {
        (self.n_bar * self.profile(t)).sqrt()
    }

    /// [`PulseSpec::envelope`] as a reusable closure.
    pub fn envelope_fn(&self) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        let profile = self.profile_fn();
        let n_bar = self.n_bar;
        move |t| (n_bar * profile(t)).sqrt()
    }

    /// Composite-Simpson integral of |ε|² over the window, split at breakpoints.
    pub fn flux_integral(&self, panels: usize) -> f64 {
        let mut edges = vec![self.t_start];
        edges.extend(self.breakpoints());
        edges.push(self.t_end);
        let panels = panels.max(2) & !1;
        let mut total = 0.0;
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = (b - a) / panels as f64;
            // evaluate just inside the segment so square edges belong to it
            let envelope = self.envelope_fn();
            let f = |t: f64| {
                let t = t.clamp(a + 1e-12 * h, b - 1e-12 * h);
                envelope(t).powi(2)
            };
            let mut s = f(a) + f(b);
            for i in 1..panels {
                let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += weight * f(a + i as f64 * h);
            }
            total += s * h / 3.0;
        }
        total
    }

    pub fn validate(&self) -> Result<()> {
        if !self.width.is_finite() || self.width <= 0.0 {
            return Err(Error::invariant("pulse.width", self.width, "must be > 0"));
        }
        if !self.n_bar.is_finite() || self.n_bar < 0.0 {
            return Err(Error::invariant("pulse.n_bar", self.n_bar, "must be >= 0"));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_end <= self.t_start {
            return Err(Error::invariant(
                "pulse.t_end",
                self.t_end,
                "window must satisfy t_start < t_end",
            ));
        }
        if self.n_bar > 0.0 {
            let integral = self.flux_integral(4000);
            if ((integral - self.n_bar) / self.n_bar).abs() > 1e-6 {
                return Err(Error::invariant(
                    "pulse",
                    integral,
                    "flux integral over the window does not reproduce n_bar",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseDocument {
    #[serde(default = "default_shape")]
    shape: PulseShape,
    #[serde(default = "default_width")]
    width: f64,
    #[serde(default = "default_n_bar")]
    n_bar: f64,
    t_start: Option<f64>,
    t_end: Option<f64>,
}

fn default_shape() -> PulseShape {
    PulseShape::Gaussian
}
fn default_width() -> f64 {
    85.0
}
fn default_n_bar() -> f64 {
    1.0
}

impl Default for PulseSpec {
    fn default() -> Self {
        PulseSpec::gaussian(default_width(), default_n_bar())
    }
}

impl From<PulseDocument> for PulseSpec {
    fn from(doc: PulseDocument) -> Self {
        let base = match doc.shape {
            PulseShape::Gaussian => PulseSpec::gaussian(doc.width, doc.n_bar),
            PulseShape::Square => PulseSpec::square(doc.width, doc.n_bar),
        };
        let t_start = doc.t_start.unwrap_or(base.t_start);
        let t_end = doc
            .t_end
            .unwrap_or(t_start + (base.t_end - base.t_start));
        PulseSpec {
            t_start,
            t_end,
            ..base
        }
    }
}

/// Truncation, integrator and Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub fock_a: usize,
    pub fock_b: usize,
    /// Maximum integrator step and flux sampling interval, ns.
    pub dt: f64,
    /// Relative tolerance of the adaptive integrator.
    pub tolerance: f64,
    pub n_traj: usize,
    pub master_seed: u64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            fock_a: 4,
            fock_b: 4,
            dt: 0.5,
            tolerance: 1e-7,
            n_traj: 2000,
            master_seed: 2015,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fock_a < 2 {
            return Err(Error::invariant("numerics.fock_a", self.fock_a, "must be >= 2"));
        }
        if self.fock_b < 2 {
            return Err(Error::invariant("numerics.fock_b", self.fock_b, "must be >= 2"));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::invariant("numerics.dt", self.dt, "must be > 0"));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 || self.tolerance >= 1e-2 {
            return Err(Error::invariant(
                "numerics.tolerance",
                self.tolerance,
                "must lie in (0, 1e-2)",
            ));
        }
        if self.n_traj < 1 {
            return Err(Error::invariant("numerics.n_traj", self.n_traj, "must be >= 1"));
        }
        Ok(())
    }
}

/// Everything one configuration document describes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub physical: PhysicalParams,
    pub pulse: PulseSpec,
    pub numerics: NumericsConfig,
    pub detectors: DetectorConfig,
    pub scenario: ScenarioSpec,
}

const SUB_OBJECTS: [&str; 4] = ["pulse", "numerics", "detectors", "scenario"];

fn parse_section<T: serde::de::DeserializeOwned>(prefix: &str, value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        let key = match (prefix.is_empty(), path.as_str()) {
            (true, ".") => "<root>".to_string(),
            (true, _) => path,
            (false, ".") => prefix.to_string(),
            (false, _) => format!("{prefix}.{path}"),
        };
        Error::Config {
            key,
            message: err.into_inner().to_string(),
        }
    })
}

impl Config {
    /// Parse and validate a JSON configuration document. Absent keys take
    /// their defaults; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Config> {
        let text = if text.trim().is_empty() { "{}" } else { text };
        let root: Value = serde_json::from_str(text).map_err(|e| Error::Config {
            key: "<document>".into(),
            message: e.to_string(),
        })?;
        let Value::Object(mut map) = root else {
            return Err(Error::Config {
                key: "<document>".into(),
                message: "top level must be a JSON object".into(),
            });
        };
        let mut take = |name: &str| map.remove(name).unwrap_or(Value::Object(Map::new()));
        let pulse: PulseDocument = parse_section("pulse", take("pulse"))?;
        let numerics: NumericsConfig = parse_section("numerics", take("numerics"))?;
        let detectors: DetectorConfig = parse_section("detectors", take("detectors"))?;
        let scenario: ScenarioSpec = parse_section("scenario", take("scenario"))?;
        let physical: PhysicalParams = parse_section("", Value::Object(map))?;
        let config = Config {
            physical,
            pulse: pulse.into(),
            numerics,
            detectors,
            scenario,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        self.pulse.validate()?;
        self.numerics.validate()?;
        self.detectors.validate()?;
        self.scenario.validate()
    }

    /// Serialise back to a document that [`Config::from_json`] accepts.
    pub fn to_json_value(&self) -> Value {
        let mut map = match serde_json::to_value(&self.physical) {
            Ok(Value::Object(map)) => map,
            _ => unreachable!("PhysicalParams serialises to an object"),
        };
        let sections = [
            serde_json::to_value(&self.pulse),
            serde_json::to_value(&self.numerics),
            serde_json::to_value(&self.detectors),
            serde_json::to_value(&self.scenario),
        ];
        for (name, value) in SUB_OBJECTS.iter().zip(sections) {
            map.insert(name.to_string(), value.expect("plain data serialises"));
        }
        Value::Object(map)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("plain data serialises")
    }

    /// Hex SHA-256 of the canonical serialised document.
    pub fn parameter_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(&self.to_json_value()).expect("serialises");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parse a document into the three core parameter groups.
pub fn load_and_validate(document: &str) -> Result<(PhysicalParams, PulseSpec, NumericsConfig)> {
    let config = Config::from_json(document)?;
    Ok((config.physical, config.pulse, config.numerics))
}
