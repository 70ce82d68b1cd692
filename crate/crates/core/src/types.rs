//! Joint-level torque algebra shared by every other module.
//!
//! A joint is driven by three torque sources: the flexor muscle group under
//! stimulation, the extensor group, and the exoskeleton motor. Only their sum
//! (the net torque) reaches the plant, which is what makes the joint
//! over-actuated.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fes::FesModel;

/// Torque vector at one joint, N·m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointTorque {
    pub flexor_fes: f64,
    pub extensor_fes: f64,
    pub exo: f64,
}

impl JointTorque {
    pub const ZERO: JointTorque = JointTorque::new(0.0, 0.0, 0.0);

    pub const fn new(flexor_fes: f64, extensor_fes: f64, exo: f64) -> Self {
        Self {
            flexor_fes,
            extensor_fes,
            exo,
        }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.flexor_fes, self.extensor_fes, self.exo]
    }

    /// Net joint torque, the only quantity the plant sees.
    pub fn net(&self) -> f64 {
        self.flexor_fes + self.extensor_fes + self.exo
    }

    /// Net torque produced by stimulation alone.
    pub fn fes(&self) -> f64 {
        self.flexor_fes + self.extensor_fes
    }

    pub fn is_finite(&self) -> bool {
        self.flexor_fes.is_finite() && self.extensor_fes.is_finite() && self.exo.is_finite()
    }
}

impl fmt::Display for JointTorque {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}]", self.flexor_fes, self.extensor_fes, self.exo)
    }
}

/// Selector routing FES effort to the flexor (`[1, 0]`) or extensor (`[0, 1]`).
pub type Sigma = [f64; 2];

pub const SIGMA_FLEXION: Sigma = [1.0, 0.0];
pub const SIGMA_EXTENSION: Sigma = [0.0, 1.0];

/// Heaviside routing of the net torque sign. At exactly zero net torque the
/// previous selector is kept so the allocator never drives both antagonists.
pub fn sigma_for(net: f64, prev: Sigma) -> Sigma {
    if net > 0.0 {
        SIGMA_FLEXION
    } else if net < 0.0 {
        SIGMA_EXTENSION
    } else {
        prev
    }
}

/// Net torque, cooperative gain, co-contraction and routing of a [`JointTorque`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub net: f64,
    /// FES share of the net torque (alpha).
    pub cooperative_gain: f64,
    /// Antagonist torque that cancels out, always >= 0.
    pub cocontraction: f64,
    pub sigma: Sigma,
}

impl Default for Decomposition {
    fn default() -> Self {
        Self {
            net: 0.0,
            cooperative_gain: 0.0,
            cocontraction: 0.0,
            sigma: SIGMA_FLEXION,
        }
    }
}

/// Splits `tau` into net torque, cooperative gain and co-contraction.
///
/// `prev` supplies alpha and sigma when the net torque is exactly zero, where
/// the ratio is undefined.
pub fn decompose(tau: JointTorque, prev: &Decomposition) -> Result<Decomposition> {
    if !tau.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite joint torque {tau}")));
    }
    let net = tau.net();
    let cocontraction = tau.flexor_fes.abs().min(tau.extensor_fes.abs());
    let (cooperative_gain, sigma) = if net != 0.0 {
        (tau.fes() / net, sigma_for(net, prev.sigma))
    } else {
        (prev.cooperative_gain, prev.sigma)
    };
    Ok(Decomposition {
        net,
        cooperative_gain,
        cocontraction,
        sigma,
    })
}

/// Inverse of [`decompose`] for torques whose FES part has the sign of the net.
pub fn reconstruct(d: &Decomposition) -> JointTorque {
    let a = d.cooperative_gain;
    JointTorque::new(
        a * d.sigma[0] * d.net + d.cocontraction,
        a * d.sigma[1] * d.net - d.cocontraction,
        (1.0 - a) * d.net,
    )
}

/// Magnitude bound of one actuator as a function of joint angle (deg).
#[derive(Clone)]
pub enum AngleBound {
    Constant(f64),
    /// Steady-state maximum of an identified muscle model,
    /// `psi * r(upsilon_max, theta) * tau_max(theta)`.
    Fes(Arc<FesModel>),
    /// A fixed share of another bound.
    Scaled(f64, Arc<AngleBound>),
}

impl AngleBound {
    pub fn at(&self, angle_deg: f64) -> f64 {
        match self {
            AngleBound::Constant(v) => *v,
            AngleBound::Fes(model) => model.max_torque(angle_deg),
            AngleBound::Scaled(share, bound) => share * bound.at(angle_deg),
        }
    }
}

impl fmt::Debug for AngleBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AngleBound::Constant(v) => write!(f, "Constant({v})"),
            AngleBound::Fes(m) => write!(f, "Fes({})", m.name),
            AngleBound::Scaled(s, b) => write!(f, "Scaled({s}, {b:?})"),
        }
    }
}

/// Torques each actuator can realize: magnitude bounds plus FES bandwidth.
#[derive(Debug, Clone)]
pub struct AttainableSet {
    pub fes_flexor_max: AngleBound,
    pub fes_extensor_max: AngleBound,
    pub exo_max: f64,
    /// Hz
    pub fes_flexor_bandwidth: f64,
    /// Hz
    pub fes_extensor_bandwidth: f64,
}

impl AttainableSet {
    pub fn new(
        fes_flexor_max: AngleBound,
        fes_extensor_max: AngleBound,
        exo_max: f64,
        fes_flexor_bandwidth: f64,
        fes_extensor_bandwidth: f64,
    ) -> Result<Self> {
        let set = Self {
            fes_flexor_max,
            fes_extensor_max,
            exo_max,
            fes_flexor_bandwidth,
            fes_extensor_bandwidth,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.exo_max) {
            return Err(Error::Config(format!("exo bound must be > 0, got {}", self.exo_max)));
        }
        if !positive(self.fes_flexor_bandwidth) || !positive(self.fes_extensor_bandwidth) {
            return Err(Error::Config("FES bandwidths must be > 0".into()));
        }
        for (name, bound) in [("flexor", &self.fes_flexor_max), ("extensor", &self.fes_extensor_max)] {
            // Sample the joint range; the bound must stay strictly positive.
            for i in 0..=120 {
                let v = bound.at(i as f64);
                if !positive(v) {
                    return Err(Error::Config(format!("{name} FES bound not positive at {i} deg: {v}")));
                }
            }
        }
        Ok(())
    }

    /// Per-channel magnitude bounds `[flexor, extensor, exo]` at `angle_deg`.
    pub fn magnitudes(&self, angle_deg: f64) -> [f64; 3] {
        [
            self.fes_flexor_max.at(angle_deg),
            self.fes_extensor_max.at(angle_deg),
            self.exo_max,
        ]
    }

    pub fn max_fes_bandwidth(&self) -> f64 {
        self.fes_flexor_bandwidth.max(self.fes_extensor_bandwidth)
    }

    /// Which channels of `tau` lie outside their magnitude bound.
    pub fn violations(&self, tau: &JointTorque, angle_deg: f64) -> [bool; 3] {
        let m = self.magnitudes(angle_deg);
        [tau.flexor_fes > m[0], -tau.extensor_fes > m[1], tau.exo.abs() > m[2]]
    }
}

/// Elbow angle and velocity, deg and deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub angle: f64,
    pub velocity: f64,
}

impl PlantState {
    pub fn new(angle: f64, velocity: f64) -> Self {
        Self { angle, velocity }
    }

    pub fn at_rest(angle: f64) -> Self {
        Self::new(angle, 0.0)
    }
}
