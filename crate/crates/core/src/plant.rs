//! Single-joint elbow and exoskeleton actuator.
//!
//! Angles are measured from the forearm pointing down, so gravity acts as
//! `mass_moment * sin(theta)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::integrate::rk4;
use crate::types::PlantState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElbowPlant {
    /// kg·m²
    pub inertia: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// Modelled `m g l` of forearm and cuff, N·m. Gravity compensation uses this.
    pub mass_moment: f64,
    /// Unmodelled load moment, N·m. Acts like gravity but is not compensated.
    pub payload_moment: f64,
    /// deg
    pub joint_limits: [f64; 2],
}

impl Default for ElbowPlant {
    fn default() -> Self {
        Self {
            inertia: 0.072,
            damping: 0.15,
            mass_moment: 3.0,
            payload_moment: 0.0,
            joint_limits: [0.0, 120.0],
        }
    }
}

impl ElbowPlant {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.inertia > 0.0
            && self.damping >= 0.0
            && self.mass_moment.is_finite()
            && self.payload_moment.is_finite()
            && self.joint_limits[0] < self.joint_limits[1];
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid plant parameters: {self:?}")))
        }
    }
}

/// Gravity moment the exoskeleton compensates, N·m.
pub fn gravity_torque(plant: &ElbowPlant, theta_deg: f64) -> f64 {
    plant.mass_moment * theta_deg.to_radians().sin()
}

/// One RK4 step under a constant joint torque.
pub fn plant_step(plant: &ElbowPlant, state: PlantState, tau_total: f64, dt: f64) -> PlantState {
    plant_step_with(plant, state, dt, |_| tau_total)
}

/// One RK4 step where the applied torque depends on the stage state
/// (angle in deg, velocity in deg/s).
pub fn plant_step_with(
    plant: &ElbowPlant,
    state: PlantState,
    dt: f64,
    torque: impl Fn(&PlantState) -> f64,
) -> PlantState {
    let moment = plant.mass_moment + plant.payload_moment;
    let x = [state.angle.to_radians(), state.velocity.to_radians()];
    let next = rk4(x, dt, |s| {
        let stage = PlantState::new(s[0].to_degrees(), s[1].to_degrees());
        let acc = (torque(&stage) - plant.damping * s[1] - moment * s[0].sin()) / plant.inertia;
        [s[1], acc]
    });
    let mut out = PlantState::new(next[0].to_degrees(), next[1].to_degrees());
    let [lo, hi] = plant.joint_limits;
    if out.angle < lo {
        out = PlantState::new(lo, 0.0);
    } else if out.angle > hi {
        out = PlantState::new(hi, 0.0);
    }
    out
}

/// Mechanical energy relative to hanging at rest, J.
pub fn mechanical_energy(plant: &ElbowPlant, state: PlantState) -> f64 {
    let w = state.velocity.to_radians();
    0.5 * plant.inertia * w * w + (plant.mass_moment + plant.payload_moment) * (1.0 - state.angle.to_radians().cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExoActuator {
    /// Actuator torque limit, N·m.
    pub torque_limit: f64,
    /// Bandwidth of the first-order torque loop, Hz. Infinite means ideal.
    pub tracking_bandwidth: f64,
}

impl Default for ExoActuator {
    fn default() -> Self {
        Self {
            torque_limit: 20.0,
            tracking_bandwidth: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExoState {
    /// Torque currently delivered, N·m.
    pub applied: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExoOutput {
    pub command: f64,
    pub applied: f64,
    pub saturated: bool,
}

/// Adds gravity compensation to the assistive torque, clamps to the actuator
/// limit and advances the torque loop by one exact first-order step.
pub fn exo_command(
    exo: &ExoActuator,
    plant: &ElbowPlant,
    tau_e_desired: f64,
    plant_state: &PlantState,
    exo_state: ExoState,
    dt: f64,
) -> (ExoOutput, ExoState) {
    let raw = tau_e_desired + gravity_torque(plant, plant_state.angle);
    let command = raw.clamp(-exo.torque_limit, exo.torque_limit);
    let decay = (-2.0 * PI * exo.tracking_bandwidth * dt).exp();
    let applied = command + (exo_state.applied - command) * decay;
    (
        ExoOutput {
            command,
            applied,
            saturated: command != raw,
        },
        ExoState { applied },
    )
}
