//! Reference trajectory and impedance law for the nominal torque.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{sigma_for, JointTorque, PlantState, SIGMA_FLEXION};

/// Product-of-sines reference `theta0 + thetaA * prod sin(2 pi f_i (t - t0))`
/// with a hold inserted at every interior extremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    /// deg
    pub theta0: f64,
    /// deg
    #[serde(rename = "thetaA")]
    pub theta_a: f64,
    /// Hz
    pub freqs: [f64; 3],
    /// s
    pub t0: f64,
    /// Hold at each extremum, s.
    pub dwell: f64,
    /// Horizon of the base curve before holds are inserted, s.
    pub duration: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            theta0: 52.6,
            theta_a: 37.6,
            freqs: [0.050, 0.068, 0.093],
            t0: 2.5,
            dwell: 2.0,
            duration: 30.0,
        }
    }
}

impl TrajectoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || self.freqs.iter().any(|f| !(*f > 0.0)) || !(self.dwell >= 0.0) {
            return Err(Error::Config(format!("invalid trajectory parameters: {self:?}")));
        }
        Ok(())
    }

    /// Base curve value, deg.
    pub fn base(&self, t: f64) -> f64 {
        let s = t - self.t0;
        self.theta0 + self.theta_a * self.freqs.iter().map(|f| (2.0 * PI * f * s).sin()).product::<f64>()
    }

    /// Base curve derivative, deg/s.
    pub fn base_rate(&self, t: f64) -> f64 {
        let s = t - self.t0;
        let sines: Vec<f64> = self.freqs.iter().map(|f| (2.0 * PI * f * s).sin()).collect();
        let mut sum = 0.0;
        for (i, f) in self.freqs.iter().enumerate() {
            let others: f64 = (0..3).filter(|j| *j != i).map(|j| sines[j]).product();
            sum += 2.0 * PI * f * (2.0 * PI * f * s).cos() * others;
        }
        self.theta_a * sum
    }
}

/// Interior extrema of the base curve on `(0, duration)`, by sign changes of
/// the derivative on a fine grid refined with bisection.
pub fn base_extrema(params: &TrajectoryParams) -> Vec<f64> {
    let step = 1e-3;
    let n = (params.duration / step).ceil() as usize;
    let mut out = Vec::new();
    let mut prev_t = 0.0;
    let mut prev = params.base_rate(0.0);
    for k in 1..=n {
        let t = (k as f64 * step).min(params.duration);
        let cur = params.base_rate(t);
        if prev != 0.0 && cur != 0.0 && prev.signum() != cur.signum() {
            let (mut lo, mut hi) = (prev_t, t);
            let lo_sign = prev.signum();
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if params.base_rate(mid).signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t_ext = 0.5 * (lo + hi);
            if t_ext > 0.0 && t_ext < params.duration {
                out.push(t_ext);
            }
        }
        if cur != 0.0 {
            prev = cur;
            prev_t = t;
        }
    }
    out
}

/// Time-warped reference with holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub params: TrajectoryParams,
    pub extrema: Vec<f64>,
}

impl Reference {
    pub fn new(params: TrajectoryParams) -> Result<Self> {
        params.validate()?;
        let extrema = base_extrema(&params);
        Ok(Self { params, extrema })
    }

    /// Base horizon plus one hold per extremum.
    pub fn total_duration(&self) -> f64 {
        self.params.duration + self.params.dwell * self.extrema.len() as f64
    }

    /// `(theta_d, theta_dot_d)` in deg and deg/s.
    pub fn sample(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= 0.0 && t <= self.total_duration() + 1e-9) {
            return Err(Error::Domain(format!(
                "reference time {t} s outside [0, {}] s",
                self.total_duration()
            )));
        }
        let dwell = self.params.dwell;
        for (j, &e) in self.extrema.iter().enumerate() {
            let start = e + j as f64 * dwell;
            if t < start {
                let tb = t - j as f64 * dwell;
                return Ok((self.params.base(tb), self.params.base_rate(tb)));
            }
            if t < start + dwell {
                return Ok((self.params.base(e), 0.0));
            }
        }
        let tb = t - self.extrema.len() as f64 * dwell;
        Ok((self.params.base(tb), self.params.base_rate(tb)))
    }
}

/// Shorthand for [`Reference::sample`] on freshly located extrema.
pub fn reference(t: f64, params: &TrajectoryParams) -> Result<(f64, f64)> {
    Reference::new(params.clone())?.sample(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceGains {
    /// N·m/rad
    pub kp: f64,
    /// N·m·s/rad
    pub kd: f64,
    /// Nominal FES share.
    pub alpha_bar: f64,
}

impl Default for ImpedanceGains {
    fn default() -> Self {
        Self {
            kp: 30.0,
            kd: 3.0,
            alpha_bar: 0.0,
        }
    }
}

impl ImpedanceGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp >= 0.0 && self.kd >= 0.0 && (0.0..=1.0).contains(&self.alpha_bar)) {
            return Err(Error::Config(format!("invalid impedance gains: {self:?}")));
        }
        Ok(())
    }
}

/// Impedance net torque `kp e + kd e_dot` (radians), N·m.
pub fn nominal_net(theta_d: f64, theta_dot_d: f64, state: &PlantState, gains: &ImpedanceGains) -> f64 {
    gains.kp * (theta_d - state.angle).to_radians() + gains.kd * (theta_dot_d - state.velocity).to_radians()
}

/// Splits a net torque into the nominal vector
/// `[alpha_bar sigma, 1 - alpha_bar] tau_n + [1, -1, 0] tau_c`.
pub fn distribute_nominal(net: f64, alpha_bar: f64, cocontraction: f64) -> JointTorque {
    let sigma = sigma_for(net, SIGMA_FLEXION);
    JointTorque::new(
        alpha_bar * sigma[0] * net + cocontraction,
        alpha_bar * sigma[1] * net - cocontraction,
        (1.0 - alpha_bar) * net,
    )
}

/// Nominal torque vector of the impedance law with no co-contraction.
pub fn nominal_torque(theta_d: f64, theta_dot_d: f64, state: &PlantState, gains: &ImpedanceGains) -> JointTorque {
    distribute_nominal(nominal_net(theta_d, theta_dot_d, state, gains), gains.alpha_bar, 0.0)
}
