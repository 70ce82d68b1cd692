//! Executable checks of the allocator's structural and stability properties.
//!
//! Every oracle is deterministic given its inputs and seed. Margins are
//! reported as tolerance minus the worst observed value, so a negative margin
//! is a failure.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocator::{
    allocator_step, extended_allocator_step, lyapunov_rate, lyapunov_value, null_space_basis, redistribute,
    redistribute_with, AllocatorParams, AllocatorState, ExtendedAllocatorState, NullSpaceBasis,
};
use crate::error::{Error, Result};
use crate::fes::FesModel;
use crate::integrate::rk4;
use crate::plant::{plant_step, ElbowPlant};
use crate::sim::{self, Scenario, Trace};
use crate::types::{sigma_for, AngleBound, AttainableSet, JointTorque, PlantState, SIGMA_FLEXION};

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
}

impl fmt::Display for OracleResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {:.6e}",
            self.name,
            if self.pass { "pass" } else { "FAIL" },
            self.margin
        )
    }
}

/// Running maxima behind the uniform state bound
/// `|zeta_i(t)| <= max(|zeta_i(0)|, max|c_i| * max|tau_n|)`,
/// `c_i = alpha^s_i - alpha_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct IssReport {
    pub pass: bool,
    /// `min_i (bound_i + 1e-6 - max|zeta_i|)`
    pub margin: f64,
    pub max_abs_zeta: [f64; 2],
    pub max_abs_c: [f64; 2],
    pub tau_n_max: f64,
    pub bound: [f64; 2],
    /// Ticks during which each channel was active.
    pub active_ticks: [usize; 2],
}

pub const ISS_TOLERANCE: f64 = 1e-6;

/// Checks the uniform bound on a two-channel allocator trace.
pub fn iss_bound_check(trace: &Trace) -> Result<IssReport> {
    if trace.meta.mode == "extended" {
        return Err(Error::InvalidInput(
            "the uniform bound applies to two-channel allocator traces".into(),
        ));
    }
    if trace.rows.is_empty() {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    let ab = trace.meta.alpha_bar;
    let mut max_zeta: [f64; 2] = [0.0; 2];
    let mut max_c: [f64; 2] = [0.0; 2];
    let mut tau_max: f64 = 0.0;
    let mut active = [0usize; 2];
    for r in &trace.rows {
        max_zeta[0] = max_zeta[0].max(r.zeta1.abs());
        max_zeta[1] = max_zeta[1].max(r.zeta2.abs());
        max_c[0] = max_c[0].max((r.alpha_s1 - ab).abs());
        max_c[1] = max_c[1].max((r.alpha_s2 - ab).abs());
        tau_max = tau_max.max(r.tau_n_nom.abs());
        if r.sigma1 > 0.5 {
            active[0] += 1;
        } else {
            active[1] += 1;
        }
    }
    let z0 = trace.meta.zeta0;
    let bound = [z0[0].abs().max(max_c[0] * tau_max), z0[1].abs().max(max_c[1] * tau_max)];
    let margin = (bound[0] + ISS_TOLERANCE - max_zeta[0]).min(bound[1] + ISS_TOLERANCE - max_zeta[1]);
    Ok(IssReport {
        pass: margin >= 0.0,
        margin,
        max_abs_zeta: max_zeta,
        max_abs_c: max_c,
        tau_n_max: tau_max,
        bound,
        active_ticks: active,
    })
}

/// Bounded redistribution-state signal used by the invisibility oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum ZetaSchedule {
    Zero,
    Constant([f64; 2]),
    Sine {
        amplitude: [f64; 2],
        freq_hz: [f64; 2],
        phase: [f64; 2],
    },
    /// Piecewise constant, each value held for `hold_s`, repeating.
    Steps {
        hold_s: f64,
        values: Vec<[f64; 2]>,
    },
    /// Grows without bound; rejected by the oracle.
    Ramp([f64; 2]),
}

impl ZetaSchedule {
    /// Seeded piecewise-constant signal with values in `[-amplitude, amplitude]`.
    pub fn random(seed: u64, hold_s: f64, amplitude: f64, horizon: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (horizon / hold_s).ceil() as usize + 1;
        let values = (0..n)
            .map(|_| {
                [
                    rng.random_range(-amplitude..=amplitude),
                    rng.random_range(-amplitude..=amplitude),
                ]
            })
            .collect();
        ZetaSchedule::Steps { hold_s, values }
    }

    /// Supremum of `|zeta_i|`, or `None` if the signal is unbounded.
    pub fn bound(&self) -> Option<f64> {
        let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
        match self {
            ZetaSchedule::Zero => Some(0.0),
            ZetaSchedule::Constant(v) => finite(v[0].abs().max(v[1].abs())),
            ZetaSchedule::Sine { amplitude, .. } => finite(amplitude[0].abs().max(amplitude[1].abs())),
            ZetaSchedule::Steps { hold_s, values } => {
                if !(*hold_s > 0.0) || values.is_empty() {
                    return None;
                }
                finite(values.iter().fold(0.0_f64, |m, v| m.max(v[0].abs()).max(v[1].abs())))
            }
            ZetaSchedule::Ramp(slope) => {
                if slope[0] == 0.0 && slope[1] == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        match self {
            ZetaSchedule::Zero => [0.0, 0.0],
            ZetaSchedule::Constant(v) => *v,
            ZetaSchedule::Sine {
                amplitude,
                freq_hz,
                phase,
            } => {
                let w = std::f64::consts::TAU;
                [
                    amplitude[0] * (w * freq_hz[0] * t + phase[0]).sin(),
                    amplitude[1] * (w * freq_hz[1] * t + phase[1]).sin(),
                ]
            }
            ZetaSchedule::Steps { hold_s, values } => values[((t / hold_s).floor() as usize) % values.len()],
            ZetaSchedule::Ramp(slope) => [slope[0] * t, slope[1] * t],
        }
    }
}

/// Open-loop nominal torque used by the invisibility oracle. The net torque
/// changes sign, so both channels see use.
pub fn open_loop_nominal(t: f64) -> JointTorque {
    JointTorque::new(
        0.8 + 0.6 * (0.9 * t).sin(),
        -0.4 * (1.0 + (0.4 * t).cos()),
        2.5 * (0.3 * t).sin() + 0.5 * (2.1 * t).cos(),
    )
}

#[derive(Debug, Clone)]
pub struct InvisibilityCase {
    pub zeta: ZetaSchedule,
    pub basis: NullSpaceBasis,
    pub plant: ElbowPlant,
    pub dt: f64,
    pub duration: f64,
    pub tolerance: f64,
}

impl InvisibilityCase {
    pub fn new(zeta: ZetaSchedule) -> Self {
        Self {
            zeta,
            basis: null_space_basis(),
            plant: ElbowPlant {
                joint_limits: [-360.0, 360.0],
                ..ElbowPlant::default()
            },
            dt: 1e-3,
            duration: 30.0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvisibilityReport {
    pub pass: bool,
    /// deg
    pub max_dtheta: f64,
    /// deg/s
    pub max_dvelocity: f64,
}

/// Simulates the plant under `tau_bar(t)` and under
/// `tau_bar(t) + G S zeta(t)` and compares the state trajectories.
pub fn invisibility_check(case: &InvisibilityCase) -> Result<InvisibilityReport> {
    if case.zeta.bound().is_none() {
        return Err(Error::InvalidInput("redistribution schedule is unbounded".into()));
    }
    let steps = (case.duration / case.dt).round() as usize;
    let mut a = PlantState::at_rest(30.0);
    let mut b = a;
    let mut sigma = SIGMA_FLEXION;
    let (mut dth, mut dv): (f64, f64) = (0.0, 0.0);
    for k in 0..steps {
        let t = k as f64 * case.dt;
        let nominal = open_loop_nominal(t);
        sigma = sigma_for(nominal.net(), sigma);
        let shifted = redistribute_with(&case.basis, nominal, sigma, case.zeta.at(t));
        a = plant_step(&case.plant, a, nominal.net(), case.dt);
        b = plant_step(&case.plant, b, shifted.net(), case.dt);
        dth = dth.max((a.angle - b.angle).abs());
        dv = dv.max((a.velocity - b.velocity).abs());
    }
    Ok(InvisibilityReport {
        pass: dth <= case.tolerance && dv <= case.tolerance,
        max_dtheta: dth,
        max_dvelocity: dv,
    })
}

/// The schedule family used by the verification suite.
pub fn invisibility_schedules() -> Vec<ZetaSchedule> {
    let mut v = vec![
        ZetaSchedule::Zero,
        ZetaSchedule::Constant([3.0, -2.0]),
        ZetaSchedule::Sine {
            amplitude: [5.0, 0.0],
            freq_hz: [1.0 / std::f64::consts::TAU, 0.0],
            phase: [0.0, 0.0],
        },
        ZetaSchedule::Sine {
            amplitude: [4.0, 3.0],
            freq_hz: [0.7, 2.3],
            phase: [0.3, 1.1],
        },
        ZetaSchedule::Steps {
            hold_s: 1.5,
            values: vec![[0.0, 0.0], [6.0, -4.0], [-2.0, 5.0]],
        },
    ];
    for seed in 0..6 {
        v.push(ZetaSchedule::random(seed, 0.25 + 0.1 * seed as f64, 8.0, 30.0));
    }
    v
}

/// Basis with one column pushed off the null space, for negative controls.
pub fn corrupted_basis() -> NullSpaceBasis {
    NullSpaceBasis([[1.0, 0.0], [0.0, 1.0], [-1.1, -1.0]])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovReport {
    pub pass: bool,
    /// Largest `V_dot` seen over the random trials.
    pub worst_rate: f64,
    /// Largest one-step increase of `V` along the simulated unforced runs.
    pub worst_increase: f64,
    /// `V_dot` at `sigma = [1, 0]`, `zeta = [1, 0]`, `W = I`.
    pub hand_value: f64,
    pub trials: usize,
}

pub const LYAPUNOV_TOLERANCE: f64 = 1e-12;

/// Random positive weights, routings and states with zero nominal torque.
pub fn lyapunov_check(n_trials: usize, seed: u64) -> Result<LyapunovReport> {
    if n_trials < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 trials, got {n_trials}")));
    }
    let basis = null_space_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_rate = f64::NEG_INFINITY;
    let mut worst_increase = f64::NEG_INFINITY;
    let limits = AttainableSet::new(AngleBound::Constant(1e6), AngleBound::Constant(1e6), 1e6, 1.0, 1.0)?;
    for trial in 0..n_trials {
        let w = [
            rng.random_range(0.01..10.0),
            rng.random_range(0.01..10.0),
            rng.random_range(0.01..10.0),
        ];
        let sigma = if rng.random_bool(0.5) { [1.0, 0.0] } else { [0.0, 1.0] };
        let zeta = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        worst_rate = worst_rate.max(lyapunov_rate(&basis, zeta, sigma, w));

        // simulate a subset of the trials with the full stepping code
        if trial % 10 == 0 {
            let k = [rng.random_range(0.1..10.0), rng.random_range(0.1..10.0)];
            let mut params = AllocatorParams::new(k, w, limits.clone());
            params.saturation_aware = false;
            let mut st = AllocatorState::new(zeta);
            st.last_decomposition.sigma = sigma;
            let mut v = lyapunov_value(st.zeta, k);
            for _ in 0..200 {
                st = allocator_step(&st, JointTorque::ZERO, &params, 45.0, 1e-3)?.state;
                let next = lyapunov_value(st.zeta, k);
                worst_increase = worst_increase.max(next - v);
                v = next;
            }
        }
    }
    let hand_value = lyapunov_rate(&basis, [1.0, 0.0], [1.0, 0.0], [1.0, 1.0, 1.0]);
    Ok(LyapunovReport {
        pass: worst_rate <= LYAPUNOV_TOLERANCE && worst_increase <= LYAPUNOV_TOLERANCE && hand_value == -2.0,
        worst_rate,
        worst_increase,
        hand_value,
        trials: n_trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateCase {
    pub tau_n: f64,
    pub alpha_s: f64,
    pub alpha_bar: f64,
    /// Modified gain of the flexion channel, 1/s.
    pub k_prime: f64,
    pub dt: f64,
}

impl Default for SteadyStateCase {
    fn default() -> Self {
        Self {
            tau_n: 5.0,
            alpha_s: 0.8,
            alpha_bar: 0.0,
            k_prime: 5.0,
            dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    pub pass: bool,
    /// Flexor FES torque at `5 / k'`.
    pub tau_f: f64,
    pub target: f64,
    /// First time after which the FES torque stays within 1 % of the net
    /// torque from the target.
    pub settle_time: f64,
    /// Largest `|zeta|` seen.
    pub max_abs_zeta: f64,
}

/// Allocator parameters with frozen weights giving `alpha_s`, and the
/// nominal torque vector of the case.
fn steady_state_setup(case: &SteadyStateCase) -> Result<(AllocatorParams, JointTorque)> {
    if !(case.alpha_s > 0.0 && case.alpha_s < 1.0 && case.tau_n > 0.0 && case.k_prime > 0.0) {
        return Err(Error::InvalidInput(format!("unsupported steady-state case {case:?}")));
    }
    let w3 = 1.0;
    let w1 = w3 * (1.0 - case.alpha_s) / case.alpha_s;
    let k1 = case.k_prime / (w1 + w3);
    let limits = AttainableSet::new(AngleBound::Constant(1e6), AngleBound::Constant(1e6), 1e6, 0.1, 0.1)?;
    let mut params = AllocatorParams::new([k1, k1], [w1, w1, w3], limits);
    params.saturation_aware = false;
    let nominal = JointTorque::new(case.alpha_bar * case.tau_n, 0.0, (1.0 - case.alpha_bar) * case.tau_n);
    Ok((params, nominal))
}

/// Largest gap between the simulated `zeta_1` and
/// `(alpha_s - alpha_bar) tau_n (1 - exp(-k' t))` over `horizon` seconds.
pub fn closed_form_deviation(case: &SteadyStateCase, horizon: f64) -> Result<f64> {
    let (params, nominal) = steady_state_setup(case)?;
    let amplitude = (case.alpha_s - case.alpha_bar) * case.tau_n;
    let mut st = AllocatorState::default();
    let mut worst: f64 = 0.0;
    for k in 1..=(horizon / case.dt).round() as usize {
        st = allocator_step(&st, nominal, &params, 45.0, case.dt)?.state;
        let t = k as f64 * case.dt;
        let exact = amplitude * (1.0 - (-case.k_prime * t).exp());
        worst = worst.max((st.zeta[0] - exact).abs());
    }
    Ok(worst)
}

/// Constant flexion torque with frozen weights chosen to give `alpha_s`.
pub fn steady_state_check(case: &SteadyStateCase) -> Result<SteadyStateReport> {
    let (params, nominal) = steady_state_setup(case)?;
    let target = case.alpha_s * case.tau_n;
    let band = 0.01 * case.tau_n.abs();
    let horizon = 5.0 / case.k_prime;
    let steps = (horizon / case.dt).ceil() as usize;
    let mut st = AllocatorState::default();
    let mut settle = 0.0;
    let mut tau_f = nominal.flexor_fes;
    let mut max_zeta: f64 = 0.0;
    // run past the horizon so the settling time is well defined
    for k in 1..=(2 * steps) {
        st = allocator_step(&st, nominal, &params, 45.0, case.dt)?.state;
        max_zeta = max_zeta.max(st.zeta[0].abs()).max(st.zeta[1].abs());
        let f = redistribute(nominal, &st).flexor_fes;
        if (f - target).abs() > band {
            settle = k as f64 * case.dt;
        }
        if k == steps {
            tau_f = f;
        }
    }
    Ok(SteadyStateReport {
        pass: (tau_f - target).abs() <= band,
        tau_f,
        target,
        settle_time: settle,
        max_abs_zeta: max_zeta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceCase {
    /// Multiplies the extended flexor gain; 1 matches the two-channel gains.
    pub k_scale: f64,
    /// Amplitude of the nominal net torque, N·m.
    pub amplitude: f64,
    pub duration: f64,
}

impl Default for EquivalenceCase {
    fn default() -> Self {
        Self {
            k_scale: 1.0,
            amplitude: 6.0,
            duration: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub pass: bool,
    /// Largest state or torque difference.
    pub max_deviation: f64,
    pub max_abs_state: f64,
}

pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

/// Runs the extended allocator with one muscle per group next to the
/// two-channel allocator, barriers included.
pub fn extended_equivalence_check(case: &EquivalenceCase) -> Result<EquivalenceReport> {
    let flexor = Arc::new(FesModel::synthetic_flexor());
    let extensor = Arc::new(FesModel::synthetic_extensor());
    let limits = crate::fes::attainable_set(flexor.clone(), extensor.clone(), 15.0)?;
    let params = AllocatorParams::new([1.0, 1.0], [0.05, 0.05, 1.0], limits).with_bandwidth_gains();
    let mut ext = ExtendedAllocatorState::new(
        1,
        1,
        vec![params.k[0] * case.k_scale, params.k[1]],
        params.w_base.to_vec(),
        vec![AngleBound::Fes(flexor), AngleBound::Fes(extensor)],
        15.0,
    )?;
    ext.barrier_eps = Some(params.fes_margin_eps);
    let mut two = AllocatorState::default();
    let dt = 1e-3;
    let angle = 60.0;
    let mut dev: f64 = 0.0;
    let mut max_state: f64 = 0.0;
    for k in 0..(case.duration / dt).round() as usize {
        let t = k as f64 * dt;
        let net = case.amplitude * ((0.5 * t).sin() + 0.4 * (1.7 * t).sin());
        let nominal = JointTorque::new(0.0, 0.0, net);
        let step = allocator_step(&two, nominal, &params, angle, dt)?;
        two = step.state;
        let tau = redistribute(nominal, &two).to_array();
        let e = extended_allocator_step(&ext, &[0.0, 0.0, net], angle, dt)?;
        ext = e.state;
        for i in 0..2 {
            dev = dev.max((two.zeta[i] - ext.zeta_plus[i]).abs());
            max_state = max_state.max(two.zeta[i].abs()).max(ext.zeta_plus[i].abs());
        }
        for i in 0..3 {
            dev = dev.max((tau[i] - e.tau_plus[i]).abs());
        }
    }
    Ok(EquivalenceReport {
        pass: dev <= EQUIVALENCE_TOLERANCE,
        max_deviation: dev,
        max_abs_state: max_state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderReport {
    pub pass: bool,
    pub errors: [f64; 2],
    /// `error(dt) / error(dt / 2)`; fourth order gives about 16.
    pub ratio: f64,
}

/// Halving the step of the plant integrator shrinks the error at least 8x.
pub fn rk4_order_check() -> OrderReport {
    let plant = ElbowPlant {
        joint_limits: [-360.0, 360.0],
        ..ElbowPlant::default()
    };
    let simulate = |dt: f64| {
        let mut s = PlantState::new(60.0, -20.0);
        for _ in 0..(2.0 / dt).round() as usize {
            s = plant_step(&plant, s, 1.0, dt);
        }
        s
    };
    let reference = simulate(0.02 / 64.0);
    let err = |s: PlantState| {
        (s.angle - reference.angle)
            .abs()
            .max((s.velocity - reference.velocity).abs())
    };
    let errors = [err(simulate(0.02)), err(simulate(0.01))];
    let ratio = errors[0] / errors[1];
    OrderReport {
        pass: ratio >= 8.0,
        errors,
        ratio,
    }
}

/// Exact null-space membership and rank of the basis.
pub fn null_space_check() -> OracleResult {
    let b = null_space_basis();
    let sums = b.column_sums();
    OracleResult {
        name: "nullspace".into(),
        pass: sums == [0.0, 0.0] && b.rank() == 2,
        margin: 0.0 - sums[0].abs().max(sums[1].abs()),
    }
}

/// Verification suites selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Nullspace,
    Invisibility,
    Lyapunov,
    Iss,
    SteadyState,
    Extended,
    Rk4Order,
}

impl Suite {
    pub const NAMES: [&'static str; 8] = [
        "all",
        "nullspace",
        "invisibility",
        "lyapunov",
        "iss",
        "steady-state",
        "extended",
        "rk4-order",
    ];

    pub fn parse(name: &str) -> Option<Suite> {
        Some(match name {
            "all" => Suite::All,
            "nullspace" => Suite::Nullspace,
            "invisibility" => Suite::Invisibility,
            "lyapunov" => Suite::Lyapunov,
            "iss" => Suite::Iss,
            "steady-state" => Suite::SteadyState,
            "extended" => Suite::Extended,
            "rk4-order" => Suite::Rk4Order,
            _ => return None,
        })
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

/// Runs the selected oracles. `scenarios` feed the state-bound check.
pub fn run_suite(suite: Suite, scenarios: &[Scenario], seed: u64) -> Result<Vec<OracleResult>> {
    let mut out = Vec::new();
    if suite.includes(Suite::Nullspace) {
        out.push(null_space_check());
    }
    if suite.includes(Suite::Invisibility) {
        for (i, z) in invisibility_schedules().into_iter().enumerate() {
            let r = invisibility_check(&InvisibilityCase::new(z))?;
            out.push(OracleResult {
                name: format!("invisibility/{i}"),
                pass: r.pass,
                margin: 1e-9 - r.max_dtheta.max(r.max_dvelocity),
            });
        }
        let mut negative = InvisibilityCase::new(invisibility_schedules().swap_remove(2));
        negative.basis = corrupted_basis();
        let r = invisibility_check(&negative)?;
        let dev = r.max_dtheta.max(r.max_dvelocity);
        out.push(OracleResult {
            name: "invisibility/corrupted-basis-detected".into(),
            pass: dev > 1e-3,
            margin: dev - 1e-3,
        });
    }
    if suite.includes(Suite::Lyapunov) {
        let r = lyapunov_check(1000, seed)?;
        out.push(OracleResult {
            name: "lyapunov".into(),
            pass: r.pass,
            margin: LYAPUNOV_TOLERANCE - r.worst_rate.max(r.worst_increase),
        });
    }
    if suite.includes(Suite::Iss) {
        for s in scenarios {
            let run = sim::run(s)?;
            if let Ok(r) = iss_bound_check(&run.trace) {
                out.push(OracleResult {
                    name: format!("iss/{}", s.name),
                    pass: r.pass,
                    margin: r.margin,
                });
            }
        }
    }
    if suite.includes(Suite::SteadyState) {
        let r = steady_state_check(&SteadyStateCase::default())?;
        out.push(OracleResult {
            name: "steady-state".into(),
            pass: r.pass,
            margin: 0.01 * 5.0 - (r.tau_f - r.target).abs(),
        });
    }
    if suite.includes(Suite::Extended) {
        let r = extended_equivalence_check(&EquivalenceCase::default())?;
        out.push(OracleResult {
            name: "extended".into(),
            pass: r.pass,
            margin: EQUIVALENCE_TOLERANCE - r.max_deviation,
        });
    }
    if suite.includes(Suite::Rk4Order) {
        let r = rk4_order_check();
        out.push(OracleResult {
            name: "rk4-order".into(),
            pass: r.pass,
            margin: r.ratio - 8.0,
        });
    }
    Ok(out)
}

/// Reference solution of `x' = -k (x - target)` sampled with RK4, used to
/// cross-check closed forms.
pub fn first_order_rk4(k: f64, target: f64, dt: f64, steps: usize) -> Vec<f64> {
    let mut x = [0.0];
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        x = rk4(x, dt, |s| [-k * (s[0] - target)]);
        out.push(x[0]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_schedule_gives_exactly_zero_deviation() {
        let r = invisibility_check(&InvisibilityCase {
            duration: 2.0,
            ..InvisibilityCase::new(ZetaSchedule::Zero)
        })
        .unwrap();
        assert_eq!(r.max_dtheta, 0.0);
        assert_eq!(r.max_dvelocity, 0.0);
    }

    #[test]
    fn unbounded_schedule_is_rejected() {
        assert!(invisibility_check(&InvisibilityCase::new(ZetaSchedule::Ramp([1.0, 0.0]))).is_err());
        assert!(ZetaSchedule::Ramp([0.0, 0.0]).bound().is_some());
    }

    #[test]
    fn lyapunov_needs_enough_trials() {
        assert!(lyapunov_check(10, 0).is_err());
        assert!(lyapunov_check(100, 0).unwrap().pass);
    }

    #[test]
    fn matching_bar_keeps_zeta_at_zero() {
        let r = steady_state_check(&SteadyStateCase {
            alpha_bar: 0.8,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.max_abs_zeta, 0.0);
        assert!((r.tau_f - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_keeps_both_allocators_at_zero() {
        let r = extended_equivalence_check(&EquivalenceCase {
            amplitude: 0.0,
            duration: 1.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.max_abs_state, 0.0);
        assert_eq!(r.max_deviation, 0.0);
    }

    #[test]
    fn order_check_sees_fourth_order() {
        let r = rk4_order_check();
        assert!(r.pass, "{r:?}");
        assert!(r.ratio > 12.0 && r.ratio < 20.0, "{r:?}");
    }
}
