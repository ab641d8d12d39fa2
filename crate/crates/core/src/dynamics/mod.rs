//! Coherently driven atom–cavity model, its Lindblad master equation and the
//! Monte Carlo wavefunction unravelling.
//!
//! Internally time is in ns and rates in rad/ns. The input field ε(t) is in
//! ns^-1/2 so |ε|² is a photon flux. Every jump operator has the form
//! `L = s·ε(t)·1 + J` with a constant operator part `J`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation_op, number_op, sigma, AtomLevel, AtomLevelSet, CompositeSpace, Mode,
    SparseOperator, C64, I, ONE,
};
use crate::params::{angular_per_ns, NumericsConfig, PhysicalParams, PulseSpec};

pub mod master;
pub mod ode;
pub mod stats;
pub mod trajectory;

pub use master::{evolve_master, FluxSeries, MasterOptions};
pub use stats::{trajectory_statistics, JointBin, Ordering, PortStatistics, TrajectoryStatistics};
pub use trajectory::{
    read_jump_times, run_ensemble, run_trajectories, run_trajectory, write_jump_log, JumpEvent, TrajectoryRecord,
};

/// Output channels in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    T,
    R,
    LossA,
    LossB,
    SpontAlpha,
    SpontBeta,
    SpontDark,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::T,
        Channel::R,
        Channel::LossA,
        Channel::LossB,
        Channel::SpontAlpha,
        Channel::SpontBeta,
        Channel::SpontDark,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::T => "T",
            Channel::R => "R",
            Channel::LossA => "LossA",
            Channel::LossB => "LossB",
            Channel::SpontAlpha => "SpontAlpha",
            Channel::SpontBeta => "SpontBeta",
            Channel::SpontDark => "SpontDark",
        }
    }

    pub fn is_loss(self) -> bool {
        matches!(self, Channel::LossA | Channel::LossB)
    }

    pub fn is_spontaneous(self) -> bool {
        matches!(self, Channel::SpontAlpha | Channel::SpontBeta | Channel::SpontDark)
    }

    fn spont_to(level: AtomLevel) -> Channel {
        match level {
            AtomLevel::Alpha => Channel::SpontAlpha,
            AtomLevel::Beta => Channel::SpontBeta,
            _ => Channel::SpontDark,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown channel `{s}`")))
    }
}

/// `L = scalar·ε(t) + op`.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub channel: Channel,
    pub scalar: f64,
    pub op: SparseOperator,
}

pub type Envelope = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Hamiltonian `H(t) = H0 + ε(t)·Hd`, jump operators and the pulse.
#[derive(Clone)]
pub struct ModelOperators {
    pub space: CompositeSpace,
    pub h0: SparseOperator,
    pub drive: SparseOperator,
    pub jumps: Vec<JumpOperator>,
    pub envelope: Envelope,
    pub window: (f64, f64),
    pub breakpoints: Vec<f64>,
    /// Coupling the model was built with, MHz.
    pub g: f64,
    effective: EffectiveGenerator,
}

/// `H_eff(t) = K0 + ε K1 + ε² k2` with `k2` a multiple of the identity.
#[derive(Clone, Debug)]
pub(crate) struct EffectiveGenerator {
    pub k0: SparseOperator,
    pub k1: SparseOperator,
    pub k2: C64,
    /// `J†J` per jump, for flux evaluation.
    pub jdj: Vec<SparseOperator>,
    /// `J + J†` per jump.
    pub jpjd: Vec<SparseOperator>,
}

impl fmt::Debug for ModelOperators {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelOperators")
            .field("dim", &self.space.dim())
            .field("g", &self.g)
            .field("channels", &self.jumps.iter().map(|j| j.channel).collect::<Vec<_>>())
            .field("window", &self.window)
            .finish()
    }
}

impl ModelOperators {
    fn effective_generator(h0: &SparseOperator, drive: &SparseOperator, jumps: &[JumpOperator]) -> EffectiveGenerator {
        let dim = h0.dim();
        let half_i = C64::new(0.0, -0.5);
        let mut k0 = h0.clone();
        let mut k1 = drive.clone();
        let mut k2 = C64::new(0.0, 0.0);
        let mut jdj = Vec::with_capacity(jumps.len());
        let mut jpjd = Vec::with_capacity(jumps.len());
        for jump in jumps {
            let jd = jump.op.adjoint();
            let dd = jd.mul(&jump.op);
            let sum = jump.op.add(&jd);
            k0 = k0.add(&dd.scale(half_i));
            k1 = k1.add(&sum.scale(half_i * jump.scalar));
            k2 += half_i * jump.scalar * jump.scalar;
            jdj.push(dd);
            jpjd.push(sum);
        }
        debug_assert_eq!(k0.dim(), dim);
        EffectiveGenerator { k0, k1, k2, jdj, jpjd }
    }

    pub(crate) fn assemble(
        space: CompositeSpace,
        h0: SparseOperator,
        drive: SparseOperator,
        jumps: Vec<JumpOperator>,
        pulse: &PulseSpec,
        g: f64,
    ) -> Self {
        let effective = Self::effective_generator(&h0, &drive, &jumps);
        ModelOperators {
            space,
            h0,
            drive,
            jumps,
            envelope: Arc::new(pulse.envelope_fn()),
            window: (pulse.t_start, pulse.t_end),
            breakpoints: pulse.breakpoints(),
            g,
            effective,
        }
    }

    pub(crate) fn effective(&self) -> &EffectiveGenerator {
        &self.effective
    }

    /// Adds terms to the Hamiltonian and jump list and rebuilds the
    /// effective generator.
    pub(crate) fn with_extra_terms(mut self, h_extra: &SparseOperator, extra_jumps: Vec<JumpOperator>) -> Self {
        self.h0 = self.h0.add(h_extra);
        self.jumps.extend(extra_jumps);
        self.jumps.sort_by_key(|j| j.channel);
        self.effective = Self::effective_generator(&self.h0, &self.drive, &self.jumps);
        self
    }

    /// Hamiltonian at time `t`.
    pub fn hamiltonian(&self, t: f64) -> SparseOperator {
        self.h0.add(&self.drive.scale(ONE * (self.envelope)(t)))
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Same operators driven by a different pulse.
    pub fn with_pulse(&self, pulse: &PulseSpec) -> Self {
        ModelOperators {
            envelope: Arc::new(pulse.envelope_fn()),
            window: (pulse.t_start, pulse.t_end),
            breakpoints: pulse.breakpoints(),
            ..self.clone()
        }
    }
}

/// Space spanned by the levels `params` needs, with the configured cutoffs.
pub fn model_space(params: &PhysicalParams, numerics: &NumericsConfig) -> CompositeSpace {
    CompositeSpace::new(
        AtomLevelSet::new(params.multilevel.enabled, params.branching.has_dark()),
        numerics.fock_a,
        numerics.fock_b,
    )
}

/// Builds the model at the mean coupling `params.g_mean`.
pub fn build_model(params: &PhysicalParams, pulse: &PulseSpec, space: &CompositeSpace) -> Result<ModelOperators> {
    build_model_with_coupling(params, params.g_mean, pulse, space)
}

/// Builds the model for coupling `g` (MHz). The F'=1 level is added when
/// `params.multilevel.enabled`.
pub fn build_model_with_coupling(
    params: &PhysicalParams,
    g: f64,
    pulse: &PulseSpec,
    space: &CompositeSpace,
) -> Result<ModelOperators> {
    let levels = space.levels();
    for needed in [AtomLevel::Alpha, AtomLevel::Beta, AtomLevel::E0] {
        space.level_index(needed)?;
    }
    if params.branching.has_dark() && !levels.contains(AtomLevel::Dark) {
        return Err(Error::domain("branching has a dark fraction but the space has no dark level"));
    }
    if params.multilevel.enabled && !levels.contains(AtomLevel::E1) {
        return Err(Error::domain("multilevel is enabled but the space has no e1 level"));
    }
    let dim = space.dim();
    let w = angular_per_ns;
    let a = annihilation_op(space, Mode::A);
    let b = annihilation_op(space, Mode::B);
    let ad = a.adjoint();
    let bd = b.adjoint();

    let mut h0 = number_op(space, Mode::A)
        .add(&number_op(space, Mode::B))
        .scale(ONE * w(params.delta_c));
    h0 = h0.add(&sigma(space, AtomLevel::E0, AtomLevel::E0)?.scale(ONE * w(params.delta_a)));

    let gw = w(g);
    let main = gw * (1.0 - params.p_imp).sqrt();
    let imp = gw * params.p_imp.sqrt();
    let lower_alpha = sigma(space, AtomLevel::Alpha, AtomLevel::E0)?;
    let lower_beta = sigma(space, AtomLevel::Beta, AtomLevel::E0)?;
    let coupling = ad
        .mul(&lower_alpha)
        .scale(ONE * main)
        .add(&bd.mul(&lower_beta).scale(ONE * main))
        .add(&ad.mul(&lower_beta).scale(ONE * imp))
        .add(&bd.mul(&lower_alpha).scale(ONE * imp));
    h0 = h0.add(&coupling).add(&coupling.adjoint());

    if params.rayleigh_h != 0.0 {
        let back = ad.mul(&b).scale(ONE * w(params.rayleigh_h));
        h0 = h0.add(&back).add(&back.adjoint());
    }

    let root_ex = (2.0 * w(params.kappa_ex)).sqrt();
    let root_i = (2.0 * w(params.kappa_i)).sqrt();
    // (i/2)√(2κ_ex)(ε a† − ε a) for real ε
    let drive = ad.add(&a.scale(-ONE)).scale(I * 0.5 * root_ex);

    let mut jumps = vec![
        JumpOperator {
            channel: Channel::T,
            scalar: 1.0,
            op: a.scale(-ONE * root_ex),
        },
        JumpOperator {
            channel: Channel::R,
            scalar: 0.0,
            op: b.scale(ONE * root_ex),
        },
        JumpOperator {
            channel: Channel::LossA,
            scalar: 0.0,
            op: a.scale(ONE * root_i),
        },
        JumpOperator {
            channel: Channel::LossB,
            scalar: 0.0,
            op: b.scale(ONE * root_i),
        },
    ];
    jumps.extend(spontaneous_jumps(params, space, AtomLevel::E0)?);
    debug_assert!(h0.dim() == dim && h0.is_hermitian(1e-12));

    let model = ModelOperators::assemble(space.clone(), h0, drive, jumps, pulse, g);
    if params.multilevel.enabled {
        crate::multilevel::extend_model(model, params, &params.multilevel)
    } else {
        Ok(model)
    }
}

/// Decay of `excited` into each ground level present, `√(2γ b_x) σ_{x,excited}`.
pub(crate) fn spontaneous_jumps(
    params: &PhysicalParams,
    space: &CompositeSpace,
    excited: AtomLevel,
) -> Result<Vec<JumpOperator>> {
    let gamma = angular_per_ns(params.gamma);
    let b = params.branching;
    let mut out = Vec::new();
    for (level, fraction) in [
        (AtomLevel::Alpha, b.b_alpha),
        (AtomLevel::Beta, b.b_beta),
        (AtomLevel::Dark, b.b_dark),
    ] {
        if fraction > 0.0 {
            out.push(JumpOperator {
                channel: Channel::spont_to(level),
                scalar: 0.0,
                op: sigma(space, level, excited)?.scale(ONE * (2.0 * gamma * fraction).sqrt()),
            });
        }
    }
    Ok(out)
}
