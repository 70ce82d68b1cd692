//! Hammerstein-Wiener model of stimulation-induced muscle torque.
//!
//! ```text
//! upsilon --delay--> r(upsilon, theta) --a_r--> [A, B] --a--> psi * a * tau_max(theta)
//! ```
//!
//! A static recruitment curve maps stimulation intensity to an activation
//! command, second-order linear dynamics turn that into muscle activation, and
//! the contraction map gives the torque at full activation for the current
//! joint angle.

mod identify;
pub mod io;

pub use identify::{
    identify, synthesize_training_grid, GridProtocol, Identification, IdentifyOptions, StimulationRecord, TrainingGrid,
};

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrate::rk4;
use crate::spline::MonotoneSpline;
use crate::types::{AngleBound, AttainableSet};

/// Stimulator plus communication latency.
pub const STIMULATOR_DELAY_S: f64 = 0.016;
/// Default electromechanical share of the total delay.
pub const DEFAULT_ELECTROMECHANICAL_DELAY_S: f64 = 0.030;

/// Normalized recruitment `r(upsilon, theta)`: monotone cubic splines over
/// intensity at each training angle, blended linearly across angle.
#[derive(Debug, Clone, PartialEq)]
pub struct RecruitmentMap {
    upsilon: Vec<f64>,
    angles: Vec<f64>,
    values: Vec<Vec<f64>>,
    splines: Vec<MonotoneSpline>,
}

impl RecruitmentMap {
    /// `values[i][k]` is the recruitment at `angles[i]` and `upsilon[k]`. The
    /// first intensity is the motor threshold, below which recruitment is zero.
    pub fn new(upsilon: Vec<f64>, angles: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if angles.is_empty() || values.len() != angles.len() {
            return Err(Error::InvalidInput("recruitment table needs one row per angle".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("recruitment angles must increase".into()));
        }
        let splines = values
            .iter()
            .map(|row| MonotoneSpline::new(upsilon.clone(), row.clone()))
            .collect::<Result<Vec<_>>>()?;
        for (row, theta) in values.iter().zip(&angles) {
            if row.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidInput(format!(
                    "recruitment at {theta} deg is not monotone"
                )));
            }
        }
        Ok(Self {
            upsilon,
            angles,
            values,
            splines,
        })
    }

    pub fn upsilon_knots(&self) -> &[f64] {
        &self.upsilon
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn upsilon_min(&self) -> f64 {
        self.upsilon[0]
    }

    pub fn upsilon_max(&self) -> f64 {
        self.upsilon[self.upsilon.len() - 1]
    }

    pub fn eval(&self, upsilon: f64, theta: f64) -> f64 {
        if upsilon <= self.upsilon_min() {
            return 0.0;
        }
        let (i, j, s) = bracket(&self.angles, theta);
        let lo = self.splines[i].eval(upsilon);
        if s == 0.0 {
            return lo;
        }
        (1.0 - s) * lo + s * self.splines[j].eval(upsilon)
    }
}

/// Peak torque at full activation as a function of angle, piecewise linear
/// and held constant outside the tabulated range.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionMap {
    angles: Vec<f64>,
    torque: Vec<f64>,
}

impl ContractionMap {
    pub fn new(angles: Vec<f64>, torque: Vec<f64>) -> Result<Self> {
        if angles.is_empty() || angles.len() != torque.len() {
            return Err(Error::InvalidInput("contraction map needs matching columns".into()));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("contraction angles must increase".into()));
        }
        if torque.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput("contraction torque must be positive".into()));
        }
        Ok(Self { angles, torque })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn torques(&self) -> &[f64] {
        &self.torque
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (i, j, s) = bracket(&self.angles, theta);
        (1.0 - s) * self.torque[i] + s * self.torque[j]
    }
}

/// Index pair and blend factor for linear interpolation, clamped at the ends.
fn bracket(xs: &[f64], x: f64) -> (usize, usize, f64) {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return (0, 0, 0.0);
    }
    if x >= xs[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let j = xs.partition_point(|v| *v <= x);
    let i = j - 1;
    (i, j, (x - xs[i]) / (xs[j] - xs[i]))
}

/// Linear activation dynamics `a_dot = A a + B a_r` with state `[a, a_dot]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationDynamics {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
}

impl ActivationDynamics {
    /// Critically damped, unit DC gain, natural frequency `2 pi bandwidth`.
    pub fn critically_damped(bandwidth_hz: f64) -> Self {
        let w = 2.0 * PI * bandwidth_hz;
        Self::from_characteristic(w * w, 2.0 * w)
    }

    /// Companion form of `s^2 + a1 s + a0` normalized to unit DC gain.
    pub fn from_characteristic(a0: f64, a1: f64) -> Self {
        Self {
            a: [[0.0, 1.0], [-a0, -a1]],
            b: [0.0, a0],
        }
    }

    /// `-C A^-1 B` with `C = [1, 0]`.
    pub fn dc_gain(&self) -> f64 {
        let [[a11, a12], [a21, a22]] = self.a;
        let det = a11 * a22 - a12 * a21;
        // first row of A^-1 is [a22, -a12] / det
        -(a22 * self.b[0] - a12 * self.b[1]) / det
    }

    pub fn is_stable(&self) -> bool {
        let [[a11, a12], [a21, a22]] = self.a;
        let trace = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        trace < 0.0 && det > 0.0
    }

    /// Natural frequency over `2 pi`, Hz.
    pub fn bandwidth(&self) -> f64 {
        let [[a11, a12], [a21, a22]] = self.a;
        (a11 * a22 - a12 * a21).sqrt() / (2.0 * PI)
    }

    pub fn step(&self, state: [f64; 2], a_r: f64, dt: f64) -> [f64; 2] {
        let (a, b) = (self.a, self.b);
        rk4(state, dt, |x| {
            [
                a[0][0] * x[0] + a[0][1] * x[1] + b[0] * a_r,
                a[1][0] * x[0] + a[1][1] * x[1] + b[1] * a_r,
            ]
        })
    }
}

/// Identified torque model of one stimulated muscle group.
#[derive(Debug, Clone, PartialEq)]
pub struct FesModel {
    pub name: String,
    pub recruitment: RecruitmentMap,
    pub contraction: ContractionMap,
    pub activation: ActivationDynamics,
    /// Fatigue scale in (0, 1].
    pub fatigue_psi: f64,
    /// Total delay from command to activation, s.
    pub delay_td: f64,
}

impl FesModel {
    pub fn new(
        name: impl Into<String>,
        recruitment: RecruitmentMap,
        contraction: ContractionMap,
        activation: ActivationDynamics,
        fatigue_psi: f64,
        delay_td: f64,
    ) -> Result<Self> {
        let model = Self {
            name: name.into(),
            recruitment,
            contraction,
            activation,
            fatigue_psi,
            delay_td,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fatigue_psi > 0.0 && self.fatigue_psi <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "fatigue scale must lie in (0, 1], got {}",
                self.fatigue_psi
            )));
        }
        if !(self.delay_td >= 0.0 && self.delay_td.is_finite()) {
            return Err(Error::InvalidInput("delay must be >= 0".into()));
        }
        if !self.activation.is_stable() {
            return Err(Error::InvalidInput("activation dynamics are not stable".into()));
        }
        if (self.activation.dc_gain() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "activation DC gain must be 1, got {}",
                self.activation.dc_gain()
            )));
        }
        Ok(())
    }

    pub fn upsilon_min(&self) -> f64 {
        self.recruitment.upsilon_min()
    }

    pub fn upsilon_max(&self) -> f64 {
        self.recruitment.upsilon_max()
    }

    pub fn bandwidth(&self) -> f64 {
        self.activation.bandwidth()
    }

    pub fn recruitment_at(&self, upsilon: f64, theta: f64) -> f64 {
        self.recruitment.eval(upsilon, theta)
    }

    pub fn peak_torque(&self, theta: f64) -> f64 {
        self.contraction.eval(theta)
    }

    /// Largest steady torque magnitude at `theta`,
    /// `psi * r(upsilon_max, theta) * tau_max(theta)`.
    pub fn max_torque(&self, theta: f64) -> f64 {
        self.fatigue_psi * self.recruitment_at(self.upsilon_max(), theta) * self.peak_torque(theta)
    }

    pub fn with_fatigue(mut self, psi: f64) -> Result<Self> {
        self.fatigue_psi = psi;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delay(mut self, delay_td: f64) -> Result<Self> {
        self.delay_td = delay_td;
        self.validate()?;
        Ok(self)
    }

    /// Synthetic biceps group. Magnitudes are plausible stand-ins, not
    /// measured values; the bandwidth is 0.908 Hz.
    pub fn synthetic_flexor() -> Self {
        let recruitment = RecruitmentMap::new(
            vec![8.0, 13.0, 18.0, 23.0, 28.0],
            vec![15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            vec![
                vec![0.0, 0.18, 0.52, 0.85, 1.0],
                vec![0.0, 0.16, 0.50, 0.84, 1.0],
                vec![0.0, 0.15, 0.48, 0.82, 1.0],
                vec![0.0, 0.14, 0.46, 0.80, 1.0],
                vec![0.0, 0.14, 0.45, 0.80, 1.0],
                vec![0.0, 0.13, 0.44, 0.79, 1.0],
            ],
        )
        .expect("static table");
        let contraction = ContractionMap::new(
            vec![15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            vec![2.6, 3.6, 4.6, 5.5, 6.0, 5.9],
        )
        .expect("static table");
        FesModel::new(
            "flexor",
            recruitment,
            contraction,
            ActivationDynamics::critically_damped(0.908),
            1.0,
            STIMULATOR_DELAY_S + DEFAULT_ELECTROMECHANICAL_DELAY_S,
        )
        .expect("static model")
    }

    /// Synthetic triceps group, bandwidth 3.976 Hz.
    pub fn synthetic_extensor() -> Self {
        let recruitment = RecruitmentMap::new(
            vec![10.0, 15.0, 20.0, 25.0, 30.0],
            vec![15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            vec![
                vec![0.0, 0.20, 0.55, 0.86, 1.0],
                vec![0.0, 0.19, 0.53, 0.85, 1.0],
                vec![0.0, 0.18, 0.52, 0.84, 1.0],
                vec![0.0, 0.17, 0.50, 0.83, 1.0],
                vec![0.0, 0.16, 0.49, 0.82, 1.0],
                vec![0.0, 0.16, 0.48, 0.81, 1.0],
            ],
        )
        .expect("static table");
        let contraction = ContractionMap::new(
            vec![15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            vec![1.7, 2.3, 2.9, 3.5, 3.9, 4.0],
        )
        .expect("static table");
        FesModel::new(
            "extensor",
            recruitment,
            contraction,
            ActivationDynamics::critically_damped(3.976),
            1.0,
            STIMULATOR_DELAY_S + DEFAULT_ELECTROMECHANICAL_DELAY_S,
        )
        .expect("static model")
    }
}

/// Fixed-length command delay. Reads before the line is full return zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    buf: VecDeque<f64>,
    len: usize,
}

impl DelayLine {
    pub fn new(delay_s: f64, dt: f64) -> Self {
        let len = (delay_s / dt).round() as usize;
        Self {
            buf: VecDeque::from(vec![0.0; len]),
            len,
        }
    }

    pub fn len_ticks(&self) -> usize {
        self.len
    }

    /// Pushes the current command and returns the one issued `len` ticks ago.
    pub fn push(&mut self, v: f64) -> f64 {
        if self.len == 0 {
            return v;
        }
        self.buf.push_back(v);
        self.buf.pop_front().unwrap_or(0.0)
    }
}

/// Advances one muscle by one tick: delayed recruitment, activation step,
/// torque magnitude `psi * a * tau_max(theta)`.
pub fn fes_torque(
    model: &FesModel,
    history: &mut DelayLine,
    upsilon: f64,
    theta: f64,
    a_state: [f64; 2],
    dt: f64,
) -> (f64, [f64; 2]) {
    let delayed = history.push(upsilon);
    let a_r = model.recruitment_at(delayed, theta);
    let next = model.activation.step(a_state, a_r, dt);
    (model.fatigue_psi * next[0] * model.peak_torque(theta), next)
}

/// Runtime state of one stimulated muscle group.
#[derive(Debug, Clone)]
pub struct FesChannel {
    pub model: Arc<FesModel>,
    pub delay: DelayLine,
    pub activation: [f64; 2],
}

impl FesChannel {
    pub fn new(model: Arc<FesModel>, dt: f64) -> Self {
        let delay = DelayLine::new(model.delay_td, dt);
        Self {
            model,
            delay,
            activation: [0.0, 0.0],
        }
    }

    /// Applies `upsilon` for one tick and returns the torque magnitude.
    pub fn step(&mut self, upsilon: f64, theta: f64, dt: f64) -> f64 {
        let (tau, next) = fes_torque(&self.model, &mut self.delay, upsilon, theta, self.activation, dt);
        self.activation = next;
        tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub upsilon: f64,
    pub saturated: bool,
}

/// Smallest-residual intensity in `[0, upsilon_max]` for the desired
/// recruitment, by bisection on the monotone curve.
pub fn invert_recruitment(model: &FesModel, a_r_desired: f64, theta: f64) -> Inversion {
    if !(a_r_desired > 0.0) {
        return Inversion {
            upsilon: 0.0,
            saturated: false,
        };
    }
    let hi_value = model.recruitment_at(model.upsilon_max(), theta);
    if a_r_desired > hi_value {
        return Inversion {
            upsilon: model.upsilon_max(),
            saturated: true,
        };
    }
    let (mut lo, mut hi) = (model.upsilon_min(), model.upsilon_max());
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if model.recruitment_at(mid, theta) < a_r_desired {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Inversion {
        upsilon: 0.5 * (lo + hi),
        saturated: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeedforwardCommand {
    pub upsilon: f64,
    pub a_r: f64,
    /// Desired torque beyond the recruitable range; intensity clamped.
    pub saturated: bool,
    /// No torque can be produced at this angle.
    pub infeasible: bool,
}

/// Model-based open-loop stimulation for a desired torque magnitude.
///
/// The activation dynamics are inverted statically (`a_r = a_psi / psi`),
/// optionally with a first-order lead of time constant `lead_s`.
#[derive(Debug, Clone, Default)]
pub struct Feedforward {
    pub lead_s: f64,
    prev_activation: Option<f64>,
}

impl Feedforward {
    pub fn new(lead_s: f64) -> Self {
        Self {
            lead_s,
            prev_activation: None,
        }
    }

    pub fn command(&mut self, model: &FesModel, tau_desired: f64, theta: f64, dt: f64) -> FeedforwardCommand {
        let peak = model.fatigue_psi * model.peak_torque(theta);
        if !(peak > 1e-9) {
            self.prev_activation = None;
            return FeedforwardCommand {
                infeasible: true,
                ..Default::default()
            };
        }
        let activation = tau_desired.max(0.0) / peak;
        let lead = match self.prev_activation {
            Some(prev) if self.lead_s > 0.0 => self.lead_s * (activation - prev) / dt,
            _ => 0.0,
        };
        self.prev_activation = Some(activation);
        let a_r = (activation + lead).max(0.0);
        let inv = invert_recruitment(model, a_r, theta);
        FeedforwardCommand {
            upsilon: inv.upsilon,
            a_r,
            saturated: inv.saturated,
            infeasible: false,
        }
    }
}

/// Static-inverse feedforward for a single desired torque magnitude.
pub fn feedforward_control(model: &FesModel, tau_desired: f64, theta: f64) -> FeedforwardCommand {
    Feedforward::default().command(model, tau_desired, theta, 1.0)
}

/// Attainable set induced by a flexor/extensor model pair and an exo bound.
pub fn attainable_set(flexor: Arc<FesModel>, extensor: Arc<FesModel>, exo_max: f64) -> Result<AttainableSet> {
    let (bf, be) = (flexor.bandwidth(), extensor.bandwidth());
    AttainableSet::new(AngleBound::Fes(flexor), AngleBound::Fes(extensor), exo_max, bf, be)
}

/// Flexor and extensor channels driven from signed allocator torques.
#[derive(Debug, Clone)]
pub struct FesPair {
    pub flexor: FesChannel,
    pub extensor: FesChannel,
    ff_flexor: Feedforward,
    ff_extensor: Feedforward,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FesPairOutput {
    pub upsilon: [f64; 2],
    /// Realized signed torques, flexor >= 0, extensor <= 0.
    pub realized: [f64; 2],
    pub saturated: [bool; 2],
    pub infeasible: [bool; 2],
}

impl FesPair {
    pub fn new(flexor: Arc<FesModel>, extensor: Arc<FesModel>, dt: f64, lead_s: f64) -> Self {
        Self {
            flexor: FesChannel::new(flexor, dt),
            extensor: FesChannel::new(extensor, dt),
            ff_flexor: Feedforward::new(lead_s),
            ff_extensor: Feedforward::new(lead_s),
        }
    }

    /// Positive desired torque goes to the flexor model, negative to the
    /// extensor model.
    pub fn drive(&mut self, tau_flexor: f64, tau_extensor: f64, theta: f64, dt: f64) -> FesPairOutput {
        let cf = self
            .ff_flexor
            .command(&self.flexor.model, tau_flexor.max(0.0), theta, dt);
        let ce = self
            .ff_extensor
            .command(&self.extensor.model, (-tau_extensor).max(0.0), theta, dt);
        let tf = self.flexor.step(cf.upsilon, theta, dt);
        let te = self.extensor.step(ce.upsilon, theta, dt);
        FesPairOutput {
            upsilon: [cf.upsilon, ce.upsilon],
            realized: [tf, -te],
            saturated: [cf.saturated, ce.saturated],
            infeasible: [cf.infeasible, ce.infeasible],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn activation_equilibrium_at_zero() {
        let dyn_ = ActivationDynamics::critically_damped(0.908);
        assert_eq!(dyn_.step([0.0, 0.0], 0.0, 1e-3), [0.0, 0.0]);
    }

    #[test]
    fn activation_has_unit_dc_gain() {
        let dyn_ = ActivationDynamics::critically_damped(0.908);
        assert_abs_diff_eq!(dyn_.dc_gain(), 1.0, epsilon = 1e-12);
        let mut x = [0.0, 0.0];
        for _ in 0..20_000 {
            x = dyn_.step(x, 0.37, 1e-3);
        }
        assert_abs_diff_eq!(x[0], 0.37, epsilon = 1e-9);
    }

    #[test]
    fn activation_step_matches_critically_damped_closed_form() {
        let bw = 0.908;
        let w = 2.0 * PI * bw;
        let dyn_ = ActivationDynamics::critically_damped(bw);
        let mut x = [0.0, 0.0];
        let mut max_a: f64 = 0.0;
        for k in 1..=1000 {
            x = dyn_.step(x, 1.0, 1e-3);
            let t = k as f64 * 1e-3;
            let exact = 1.0 - (1.0 + w * t) * (-w * t).exp();
            assert_abs_diff_eq!(x[0], exact, epsilon = 1e-9);
            if k == 500 {
                assert_abs_diff_eq!(x[0], 0.777722, epsilon = 1e-6);
            }
            max_a = max_a.max(x[0]);
        }
        assert!(max_a <= 1.0);
        assert_abs_diff_eq!(dyn_.bandwidth(), bw, epsilon = 1e-12);
    }

    #[test]
    fn recruitment_is_zero_below_threshold_and_monotone() {
        let m = FesModel::synthetic_flexor();
        assert_eq!(m.recruitment_at(0.0, 45.0), 0.0);
        assert_eq!(m.recruitment_at(m.upsilon_min(), 45.0), 0.0);
        for theta in [0.0, 15.0, 22.5, 47.0, 90.0, 110.0] {
            let mut prev = 0.0;
            for i in 0..=400 {
                let u = 40.0 * i as f64 / 400.0;
                let r = m.recruitment_at(u, theta);
                assert!(r >= prev - 1e-12, "theta {theta} u {u}");
                prev = r;
            }
        }
    }

    #[test]
    fn delay_line_holds_impulse_for_td() {
        let m = FesModel::synthetic_flexor();
        let dt = 1e-3;
        let mut ch = FesChannel::new(Arc::new(m.clone()), dt);
        let n = ch.delay.len_ticks();
        assert_eq!(n, 46);
        for k in 0..200 {
            let u = if k < 5 { m.upsilon_max() } else { 0.0 };
            let tau = ch.step(u, 60.0, dt);
            let t_end = (k + 1) as f64 * dt;
            if t_end <= m.delay_td + 1e-12 {
                assert_eq!(tau, 0.0, "tick {k}");
            }
            if k == n {
                assert!(tau > 0.0);
            }
        }
    }

    #[test]
    fn below_threshold_gives_no_torque() {
        let m = Arc::new(FesModel::synthetic_flexor());
        let mut ch = FesChannel::new(m.clone(), 1e-3);
        for _ in 0..2000 {
            assert_eq!(ch.step(m.upsilon_min() * 0.9, 45.0, 1e-3), 0.0);
        }
    }

    #[test]
    fn fatigue_scales_torque_pointwise() {
        let full = Arc::new(FesModel::synthetic_flexor());
        let half = Arc::new(FesModel::synthetic_flexor().with_fatigue(0.5).unwrap());
        let mut a = FesChannel::new(full, 1e-3);
        let mut b = FesChannel::new(half, 1e-3);
        for k in 0..1500 {
            let u = 10.0 + 15.0 * ((k as f64) * 0.01).sin().abs();
            let ta = a.step(u, 50.0, 1e-3);
            let tb = b.step(u, 50.0, 1e-3);
            assert_abs_diff_eq!(tb, 0.5 * ta, epsilon = 1e-15);
        }
    }

    #[test]
    fn settled_torque_matches_static_map() {
        let m = Arc::new(FesModel::synthetic_flexor());
        let mut ch = FesChannel::new(m.clone(), 1e-3);
        let mut tau = 0.0;
        for _ in 0..10_000 {
            tau = ch.step(m.upsilon_max(), 60.0, 1e-3);
        }
        assert_abs_diff_eq!(
            tau,
            m.recruitment_at(m.upsilon_max(), 60.0) * m.peak_torque(60.0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn inversion_round_trip_and_clamp() {
        let m = FesModel::synthetic_extensor();
        assert_eq!(invert_recruitment(&m, 0.0, 40.0).upsilon, 0.0);
        let top = m.recruitment_at(m.upsilon_max(), 40.0);
        let clamped = invert_recruitment(&m, top + 0.1, 40.0);
        assert_eq!(clamped.upsilon, m.upsilon_max());
        assert!(clamped.saturated);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let theta = rng.random_range(0.0..100.0);
            let a = rng.random_range(0.0..=1.0) * m.recruitment_at(m.upsilon_max(), theta);
            let inv = invert_recruitment(&m, a, theta);
            assert!(!inv.saturated);
            assert!((m.recruitment_at(inv.upsilon, theta) - a).abs() <= 1e-6);
        }
    }

    #[test]
    fn feedforward_examples() {
        let m = FesModel::synthetic_flexor();
        let zero = feedforward_control(&m, 0.0, 45.0);
        assert_eq!(zero.upsilon, 0.0);
        assert!(!zero.saturated);
        let over = feedforward_control(&m, m.peak_torque(45.0) * 1.2, 45.0);
        assert!(over.saturated);
        assert_eq!(over.upsilon, m.upsilon_max());
    }

    fn worst_tracking_error(freq_hz: f64, lead_s: f64) -> f64 {
        let m = Arc::new(FesModel::synthetic_flexor());
        let dt = 1e-3;
        let mut ch = FesChannel::new(m.clone(), dt);
        let mut ff = Feedforward::new(lead_s);
        let theta = 60.0;
        let desired = |t: f64| 2.5 + 1.5 * (2.0 * PI * freq_hz * t).sin();
        let mut worst: f64 = 0.0;
        for k in 0..60_000 {
            let t = k as f64 * dt;
            let cmd = ff.command(&m, desired(t), theta, dt);
            let tau = ch.step(cmd.upsilon, theta, dt);
            if t > 3.0 {
                worst = worst.max((tau - desired(t + dt)).abs());
            }
        }
        worst
    }

    #[test]
    fn feedforward_tracks_slow_torque_on_matched_model() {
        // 5 % of the 3 N·m desired range
        let worst = worst_tracking_error(0.02, 0.0);
        assert!(worst <= 0.05 * 3.0, "worst tracking error {worst}");
    }

    #[test]
    fn lead_reduces_phase_lag() {
        let m = FesModel::synthetic_flexor();
        let lag = 2.0 / (2.0 * PI * m.bandwidth()) + m.delay_td;
        let plain = worst_tracking_error(0.05, 0.0);
        let lead = worst_tracking_error(0.05, lag);
        assert!(lead < 0.5 * plain, "lead {lead} vs static {plain}");
    }

    #[test]
    fn attainable_set_from_models() {
        let f = Arc::new(FesModel::synthetic_flexor());
        let e = Arc::new(FesModel::synthetic_extensor());
        let set = attainable_set(f.clone(), e.clone(), 15.0).unwrap();
        let expected = f.recruitment_at(f.upsilon_max(), 50.0) * f.peak_torque(50.0);
        assert_abs_diff_eq!(set.fes_flexor_max.at(50.0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(set.fes_flexor_bandwidth, 0.908, epsilon = 1e-12);
        assert_abs_diff_eq!(set.fes_extensor_bandwidth, 3.976, epsilon = 1e-12);

        let tired = Arc::new(FesModel::synthetic_flexor().with_fatigue(0.5).unwrap());
        let set2 = attainable_set(tired, e, 15.0).unwrap();
        for theta in [15.0, 40.0, 77.0] {
            assert_abs_diff_eq!(
                set2.fes_flexor_max.at(theta),
                0.5 * set.fes_flexor_max.at(theta),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn pair_routes_by_sign() {
        let f = Arc::new(FesModel::synthetic_flexor());
        let e = Arc::new(FesModel::synthetic_extensor());
        let mut pair = FesPair::new(f, e, 1e-3, 0.0);
        let out = pair.drive(2.0, 0.0, 45.0, 1e-3);
        assert!(out.upsilon[0] > 0.0);
        assert_eq!(out.upsilon[1], 0.0);
        let mut out = out;
        for _ in 0..5000 {
            out = pair.drive(0.0, -1.5, 45.0, 1e-3);
        }
        assert_eq!(out.upsilon[0], 0.0);
        assert_abs_diff_eq!(out.realized[1], -1.5, epsilon = 1e-6);
        assert!(out.realized[0].abs() < 1e-6);
    }
}
