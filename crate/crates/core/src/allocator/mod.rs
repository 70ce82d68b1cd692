//! Dynamic input allocation between the FES channels and the exoskeleton.
//!
//! The nominal torque vector is perturbed along the null space of the joint's
//! augmented control matrix `[1, 1, 1]`:
//!
//! ```text
//! tau      = tau_nom + G S zeta
//! zeta_dot = -K S G^T W tau
//! ```
//!
//! `G` is the null-space basis, `S = diag(sigma)` routes FES effort to the
//! flexor or extensor group, `K` sets convergence speed and `W` sets the
//! steady-state split. Because every column of `G` sums to zero, the net
//! torque is never changed by the redistribution.

mod extended;

pub use extended::{extended_allocator_step, ExtendedAllocatorState, ExtendedStep};

use crate::error::{Error, Result};
use crate::integrate::rk4;
use crate::types::{decompose, sigma_for, AttainableSet, Decomposition, JointTorque, Sigma};

/// A 3x2 basis of `ker [1, 1, 1]`, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullSpaceBasis(pub [[f64; 2]; 3]);

impl NullSpaceBasis {
    /// Column 1 trades flexor FES against the exoskeleton, column 2 trades
    /// extensor FES against the exoskeleton.
    pub const STANDARD: NullSpaceBasis = NullSpaceBasis([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]);

    pub fn column(&self, j: usize) -> [f64; 3] {
        [self.0[0][j], self.0[1][j], self.0[2][j]]
    }

    /// `G S zeta`
    pub fn apply(&self, sigma: Sigma, zeta: [f64; 2]) -> [f64; 3] {
        let s = [sigma[0] * zeta[0], sigma[1] * zeta[1]];
        self.0.map(|row| row[0] * s[0] + row[1] * s[1])
    }

    /// `G^T v`
    pub fn transpose_apply(&self, v: [f64; 3]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.0[0][j] * v[0] + self.0[1][j] * v[1] + self.0[2][j] * v[2];
        }
        out
    }

    /// Sum of each column, zero for a genuine null-space basis.
    pub fn column_sums(&self) -> [f64; 2] {
        self.transpose_apply([1.0, 1.0, 1.0])
    }

    pub fn rank(&self) -> usize {
        let m = &self.0;
        let minors = [
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
            m[0][0] * m[2][1] - m[0][1] * m[2][0],
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
        ];
        if minors.iter().any(|v| v.abs() > 1e-12) {
            2
        } else if m.iter().flatten().any(|v| v.abs() > 1e-12) {
            1
        } else {
            0
        }
    }
}

pub fn null_space_basis() -> NullSpaceBasis {
    NullSpaceBasis::STANDARD
}

#[derive(Debug, Clone)]
pub struct AllocatorParams {
    /// Convergence gains `(k1, k2)`.
    pub k: [f64; 2],
    /// Nominal weights `(w1, w2, w3)` for flexor FES, extensor FES and exo.
    pub w_base: [f64; 3],
    /// Floor of the barrier denominator near an actuator bound.
    pub fes_margin_eps: f64,
    pub limits: AttainableSet,
    /// Upper bound on the steady-state FES share.
    pub alpha_cap: Option<f64>,
    /// When false the weights stay at `w_base` (frozen W).
    pub saturation_aware: bool,
    /// External multiplicative schedule on W, e.g. for fatigue. Identity by default.
    pub weight_scale: [f64; 3],
}

impl AllocatorParams {
    pub fn new(k: [f64; 2], w_base: [f64; 3], limits: AttainableSet) -> Self {
        Self {
            k,
            w_base,
            fes_margin_eps: 1e-3,
            limits,
            alpha_cap: None,
            saturation_aware: true,
            weight_scale: [1.0; 3],
        }
    }

    /// Chooses `k` so that the nominal modified gain of each channel equals
    /// `2 pi` times that channel's FES bandwidth.
    pub fn with_bandwidth_gains(mut self) -> Self {
        let bw = [self.limits.fes_flexor_bandwidth, self.limits.fes_extensor_bandwidth];
        for i in 0..2 {
            self.k[i] = 2.0 * std::f64::consts::PI * bw[i] / (self.w_base[i] + self.w_base[2]);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::Config(format!("allocator gains must be > 0: {:?}", self.k)));
        }
        if self.w_base.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config(format!(
                "allocator weights must be > 0: {:?}",
                self.w_base
            )));
        }
        if self.weight_scale.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("weight scale must be > 0".into()));
        }
        if !(self.fes_margin_eps > 0.0 && self.fes_margin_eps < 1.0) {
            return Err(Error::Config("fes_margin_eps must lie in (0, 1)".into()));
        }
        if let Some(cap) = self.alpha_cap {
            if !(cap > 0.0 && cap <= 1.0) {
                return Err(Error::Config(format!("alpha_cap must lie in (0, 1], got {cap}")));
            }
        }
        self.limits.validate()
    }

    /// Largest step the allocator accepts: a twentieth of the fastest FES period.
    pub fn max_dt(&self) -> f64 {
        1.0 / (20.0 * self.limits.max_fes_bandwidth())
    }
}

/// Weights chosen for one step, with the channels found beyond their bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub w: [f64; 3],
    pub saturated: [bool; 3],
}

/// Saturation-aware weights: each `w_i` grows without bound (up to the
/// `1/eps` cap) as `|tau_i|` approaches its attainable bound, which pushes
/// effort away from that actuator. `alpha_cap` is enforced by flooring the
/// FES weights, never by clipping torques.
pub fn weight_schedule(tau: &JointTorque, params: &AllocatorParams, angle_deg: f64) -> Weights {
    let t = tau.to_array();
    let mut w = params.w_base;
    let mut saturated = [false; 3];
    if params.saturation_aware {
        let m = params.limits.magnitudes(angle_deg);
        for i in 0..3 {
            let ratio = t[i] / m[i];
            saturated[i] = ratio.abs() > 1.0;
            w[i] /= (1.0 - ratio * ratio).max(params.fes_margin_eps);
        }
    }
    for i in 0..3 {
        w[i] *= params.weight_scale[i];
    }
    if let Some(cap) = params.alpha_cap {
        let floor = w[2] * (1.0 - cap) / cap;
        w[0] = w[0].max(floor);
        w[1] = w[1].max(floor);
    }
    Weights { w, saturated }
}

/// Steady-state cooperative gains and modified convergence gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedGains {
    pub alpha_s: [f64; 2],
    pub k_prime: [f64; 2],
}

pub fn derived_gains(params: &AllocatorParams, w: [f64; 3], sigma: Sigma) -> DerivedGains {
    let mut alpha_s = [0.0; 2];
    let mut k_prime = [0.0; 2];
    for i in 0..2 {
        alpha_s[i] = w[2] / (w[i] + w[2]);
        k_prime[i] = params.k[i] * sigma[i] * (w[i] + w[2]);
    }
    DerivedGains { alpha_s, k_prime }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AllocatorState {
    pub zeta: [f64; 2],
    pub last_decomposition: Decomposition,
}

impl AllocatorState {
    pub fn new(zeta: [f64; 2]) -> Self {
        Self {
            zeta,
            last_decomposition: Decomposition::default(),
        }
    }

    pub fn sigma(&self) -> Sigma {
        self.last_decomposition.sigma
    }
}

/// Result of one allocator step: the new state and the quantities it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocatorStep {
    pub state: AllocatorState,
    pub weights: Weights,
    pub gains: DerivedGains,
}

/// Right-hand side `-K S G^T W (tau_nom + G S zeta)`.
fn zeta_rate(
    basis: &NullSpaceBasis,
    k: [f64; 2],
    w: [f64; 3],
    sigma: Sigma,
    tau_nominal: [f64; 3],
    zeta: [f64; 2],
) -> [f64; 2] {
    let shift = basis.apply(sigma, zeta);
    let mut weighted = [0.0; 3];
    for i in 0..3 {
        weighted[i] = w[i] * (tau_nominal[i] + shift[i]);
    }
    let g = basis.transpose_apply(weighted);
    [-k[0] * sigma[0] * g[0], -k[1] * sigma[1] * g[1]]
}

/// Advances the allocator state by one fixed step.
///
/// Weights are evaluated once per step from the redistributed torque at the
/// start of the step (current nominal torque, current state) and held over the
/// four RK4 stages. The channel whose sigma is zero is left untouched.
pub fn allocator_step(
    state: &AllocatorState,
    tau_nominal: JointTorque,
    params: &AllocatorParams,
    angle_deg: f64,
    dt: f64,
) -> Result<AllocatorStep> {
    let max_dt = params.max_dt();
    if !(dt > 0.0 && dt <= max_dt) {
        return Err(Error::Config(format!("allocator step {dt} s outside (0, {max_dt}] s")));
    }
    let decomposition = decompose(tau_nominal, &state.last_decomposition)?;
    let sigma = decomposition.sigma;
    let basis = NullSpaceBasis::STANDARD;

    let current = redistribute_with(&basis, tau_nominal, sigma, state.zeta);
    let weights = weight_schedule(&current, params, angle_deg);
    let gains = derived_gains(params, weights.w, sigma);

    let nominal = tau_nominal.to_array();
    let stepped = rk4(state.zeta, dt, |z| {
        zeta_rate(&basis, params.k, weights.w, sigma, nominal, *z)
    });
    let mut zeta = state.zeta;
    for i in 0..2 {
        if sigma[i] != 0.0 {
            zeta[i] = stepped[i];
        }
    }
    Ok(AllocatorStep {
        state: AllocatorState {
            zeta,
            last_decomposition: decomposition,
        },
        weights,
        gains,
    })
}

/// `tau_nom + G S zeta` with the state's current routing.
pub fn redistribute(tau_nominal: JointTorque, state: &AllocatorState) -> JointTorque {
    redistribute_with(&NullSpaceBasis::STANDARD, tau_nominal, state.sigma(), state.zeta)
}

pub fn redistribute_with(
    basis: &NullSpaceBasis,
    tau_nominal: JointTorque,
    sigma: Sigma,
    zeta: [f64; 2],
) -> JointTorque {
    let shift = basis.apply(sigma, zeta);
    let t = tau_nominal.to_array();
    JointTorque::new(t[0] + shift[0], t[1] + shift[1], t[2] + shift[2])
}

/// Baseline: a fixed FES share of the net torque, routed by sign, with no
/// knowledge of the attainable sets.
pub fn constant_allocate(tau_net_nominal: f64, alpha_const: f64, prev: &Decomposition) -> Result<JointTorque> {
    if !(0.0..=1.0).contains(&alpha_const) {
        return Err(Error::InvalidInput(format!(
            "constant allocation share must lie in [0, 1], got {alpha_const}"
        )));
    }
    let sigma = sigma_for(tau_net_nominal, prev.sigma);
    let fes = alpha_const * tau_net_nominal;
    Ok(JointTorque::new(
        sigma[0] * fes,
        sigma[1] * fes,
        (1.0 - alpha_const) * tau_net_nominal,
    ))
}

/// `V(zeta) = 1/2 zeta^T K^-1 zeta`
pub fn lyapunov_value(zeta: [f64; 2], k: [f64; 2]) -> f64 {
    0.5 * (zeta[0] * zeta[0] / k[0] + zeta[1] * zeta[1] / k[1])
}

/// Time derivative of [`lyapunov_value`] along the unforced allocator,
/// `-zeta^T S G^T W G S zeta`.
pub fn lyapunov_rate(basis: &NullSpaceBasis, zeta: [f64; 2], sigma: Sigma, w: [f64; 3]) -> f64 {
    let v = basis.apply(sigma, zeta);
    -(0..3).map(|i| w[i] * v[i] * v[i]).sum::<f64>()
}
