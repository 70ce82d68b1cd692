//! Closed-loop simulation of shared control, allocation, FES and exoskeleton.
//!
//! Each tick runs, in order: reference, impedance nominal torque, allocator
//! step, redistribution, FES feedforward and exoskeleton command, plant step.

mod builtin;
mod scenario;
mod trace;

pub use builtin::{builtin_scenario, builtin_scenarios, BUILTIN};

pub use scenario::{
    AllocatorConfig, AllocatorMode, FesConfig, ImpedanceConfig, ReferenceConfig, Resolved, Scenario, TorqueSchedule,
};
pub use trace::{
    compare, ChannelStats, Comparison, Summary, Trace, TraceMeta, TraceRow, ALPHA_MIN_NET, COLUMNS, FLAG_EXO_ACTUATOR,
    FLAG_EXO_BOUND, FLAG_EXTENSOR_BOUND, FLAG_EXTENSOR_STIM, FLAG_FLEXOR_BOUND, FLAG_FLEXOR_STIM, NET_TOLERANCE,
};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::allocator::{
    allocator_step, constant_allocate, extended_allocator_step, redistribute, AllocatorState, ExtendedAllocatorState,
};
use crate::control::{distribute_nominal, nominal_net};
use crate::error::{Error, Result};
use crate::fes::FesPair;
use crate::plant::{exo_command, plant_step, ExoState};
use crate::types::{decompose, AngleBound, Decomposition, JointTorque, PlantState};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub summary: Summary,
}

enum Allocation {
    Dynamic(AllocatorState),
    Constant { alpha: f64, prev: Decomposition },
    Extended(ExtendedAllocatorState),
}

/// Runs a scenario. Constant mode without an explicit share first runs the
/// dynamic allocator and uses its mean FES share.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    let resolved = scenario.resolve()?;
    let alpha_const = match (scenario.allocator.mode, scenario.allocator.alpha_const) {
        (AllocatorMode::Constant, Some(a)) => Some(a),
        (AllocatorMode::Constant, None) => {
            let mut dynamic = scenario.clone();
            dynamic.allocator.mode = AllocatorMode::Dynamic;
            Some(simulate(&dynamic, &resolved, None)?.summary.mean_alpha)
        }
        _ => None,
    };
    simulate(scenario, &resolved, alpha_const)
}

fn extended_state(scenario: &Scenario, resolved: &Resolved) -> Result<ExtendedAllocatorState> {
    let a = &scenario.allocator;
    let p = &resolved.params;
    let (nf, ne) = (a.flexor_shares.len(), a.extensor_shares.len());
    let mut limits = Vec::with_capacity(nf + ne);
    let mut k = Vec::with_capacity(nf + ne);
    let mut w = Vec::with_capacity(nf + ne + 1);
    for (shares, group, bound) in [
        (&a.flexor_shares, 0, &resolved.limits.fes_flexor_max),
        (&a.extensor_shares, 1, &resolved.limits.fes_extensor_max),
    ] {
        for s in shares {
            limits.push(AngleBound::Scaled(*s, Arc::new(bound.clone())));
            k.push(p.k[group]);
            w.push(p.w_base[group]);
        }
    }
    w.push(p.w_base[2]);
    let mut st = ExtendedAllocatorState::new(nf, ne, k, w, limits, resolved.limits.exo_max)?;
    if p.saturation_aware {
        st.barrier_eps = Some(p.fes_margin_eps);
    }
    // zeta0 is split over each group by share
    for j in 0..nf {
        st.zeta_plus[j] = a.zeta0[0] * a.flexor_shares[j];
    }
    for j in 0..ne {
        st.zeta_plus[nf + j] = a.zeta0[1] * a.extensor_shares[j];
    }
    Ok(st)
}

/// Steady FES share of a muscle group under weights `w_group` against `w_exo`.
fn group_share(w_group: &[f64], w_exo: f64) -> f64 {
    let inv: f64 = w_group.iter().map(|w| 1.0 / w).sum();
    inv / (inv + 1.0 / w_exo)
}

fn simulate(scenario: &Scenario, resolved: &Resolved, alpha_const: Option<f64>) -> Result<RunOutput> {
    let dt = scenario.dt;
    let ticks = (resolved.duration / dt).round() as usize + 1;
    let plant = scenario.plant;
    let exo = scenario.exo;
    let params = &resolved.params;
    let imp = &scenario.impedance;
    let alpha_bar = imp.alpha_bar;

    let hold = match &scenario.reference {
        ReferenceConfig::TorqueSchedule(s) => Some(s),
        ReferenceConfig::Trajectory(_) => None,
    };
    let initial_angle = match (scenario.initial_angle, hold, &resolved.reference) {
        (Some(a), _, _) => a,
        (None, Some(s), _) => s.hold_angle,
        (None, None, Some(r)) => r.sample(0.0)?.0,
        (None, None, None) => unreachable!("trajectory references are resolved"),
    };
    let mut state = PlantState::at_rest(initial_angle);
    let mut exo_state = ExoState::default();
    let mut fes = FesPair::new(
        resolved.flexor.clone(),
        resolved.extensor.clone(),
        dt,
        scenario.fes.lead_s,
    );
    let mut alloc = match scenario.allocator.mode {
        AllocatorMode::Dynamic => Allocation::Dynamic(AllocatorState::new(scenario.allocator.zeta0)),
        AllocatorMode::Constant => Allocation::Constant {
            alpha: alpha_const.expect("constant share resolved before simulating"),
            prev: Decomposition::default(),
        },
        AllocatorMode::Extended => Allocation::Extended(extended_state(scenario, resolved)?),
    };
    let noise = Normal::new(0.0, scenario.sensor_noise_deg).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut alpha_prev = Decomposition::default();
    let mut rows = Vec::with_capacity(ticks);

    for tick in 0..ticks {
        let t = tick as f64 * dt;
        let mut measured = state;
        if scenario.sensor_noise_deg > 0.0 {
            measured.angle += noise.sample(&mut rng);
        }
        let theta = measured.angle;

        let (theta_d, net) = match (hold, &resolved.reference) {
            (Some(s), _) => (s.hold_angle, s.at(t)),
            (None, Some(r)) => {
                let (td, tdd) = r.sample(t.min(r.total_duration()))?;
                (td, nominal_net(td, tdd, &measured, &imp.gains()))
            }
            (None, None) => unreachable!("trajectory references are resolved"),
        };
        let nominal = distribute_nominal(net, alpha_bar, imp.cocontraction);

        let (tau, zeta, alpha_s, sigma1) = match &mut alloc {
            Allocation::Dynamic(st) => {
                let step = allocator_step(st, nominal, params, theta, dt)?;
                *st = step.state;
                let tau = redistribute(nominal, st);
                (tau, st.zeta, step.gains.alpha_s, st.sigma()[0])
            }
            Allocation::Constant { alpha, prev } => {
                let tau = constant_allocate(net, *alpha, prev)?;
                *prev = decompose(tau, prev)?;
                (tau, [0.0, 0.0], [*alpha, *alpha], prev.sigma[0])
            }
            Allocation::Extended(st) => {
                let n = st.n_muscles();
                let sigma = crate::types::sigma_for(nominal.net(), st.sigma);
                let shares = scenario
                    .allocator
                    .flexor_shares
                    .iter()
                    .map(|s| (s, nominal.flexor_fes))
                    .chain(
                        scenario
                            .allocator
                            .extensor_shares
                            .iter()
                            .map(|s| (s, nominal.extensor_fes)),
                    );
                let mut nominal_plus: Vec<f64> = shares.map(|(s, v)| s * v).collect();
                nominal_plus.push(nominal.exo);
                let step = extended_allocator_step(st, &nominal_plus, theta, dt)?;
                *st = step.state;
                let nf = st.n_flexor;
                let tau = JointTorque::new(
                    step.tau_plus[..nf].iter().sum(),
                    step.tau_plus[nf..n].iter().sum(),
                    step.tau_plus[n],
                );
                let zeta = [st.zeta_plus[..nf].iter().sum(), st.zeta_plus[nf..].iter().sum()];
                let w = &step.weights;
                let alpha_s = [group_share(&w[..nf], w[n]), group_share(&w[nf..n], w[n])];
                (tau, zeta, alpha_s, sigma[0])
            }
        };
        if !tau.is_finite() {
            return Err(Error::NonFinite {
                tick,
                what: format!("allocated torque {tau}"),
            });
        }
        let decomposition = decompose(tau, &alpha_prev)?;
        alpha_prev = decomposition;

        let bounds = resolved.limits.magnitudes(theta);
        let violations = resolved.limits.violations(&tau, theta);
        let out = fes.drive(tau.flexor_fes, tau.extensor_fes, theta, dt);
        let (exo_out, next_exo) = exo_command(&exo, &plant, tau.exo, &measured, exo_state, dt);
        exo_state = next_exo;
        let total = out.realized[0] + out.realized[1] + exo_out.applied;

        let mut flags = 0;
        for (set, bit) in [
            (violations[0], FLAG_FLEXOR_BOUND),
            (violations[1], FLAG_EXTENSOR_BOUND),
            (violations[2], FLAG_EXO_BOUND),
            (out.saturated[0], FLAG_FLEXOR_STIM),
            (out.saturated[1], FLAG_EXTENSOR_STIM),
            (exo_out.saturated, FLAG_EXO_ACTUATOR),
        ] {
            if set {
                flags |= bit;
            }
        }
        rows.push(TraceRow {
            t,
            theta_d,
            theta: state.angle,
            tau_n_nom: net,
            tau_ff: tau.flexor_fes,
            tau_fe: tau.extensor_fes,
            tau_e: tau.exo,
            tau_f_real: out.realized[0] + out.realized[1],
            tau_e_applied: exo_out.applied,
            zeta1: zeta[0],
            zeta2: zeta[1],
            alpha: decomposition.cooperative_gain,
            alpha_s1: alpha_s[0],
            alpha_s2: alpha_s[1],
            upsilon_f: out.upsilon[0],
            upsilon_e: out.upsilon[1],
            af_upper: bounds[0],
            af_lower: -bounds[1],
            sat_flags: flags,
            sigma1,
        });

        if hold.is_none() {
            state = plant_step(&plant, state, total, dt);
            if !(state.angle.is_finite() && state.velocity.is_finite()) {
                return Err(Error::NonFinite {
                    tick,
                    what: "plant state".into(),
                });
            }
        }
    }

    let trace = Trace {
        meta: TraceMeta {
            scenario: scenario.name.clone(),
            scenario_sha256: scenario.hash()?,
            mode: scenario.allocator.mode.as_str().into(),
            alpha_bar,
            zeta0: scenario.allocator.zeta0,
            dt,
            alpha_const,
        },
        rows,
    };
    let summary = Summary::from_trace(&trace);
    Ok(RunOutput { trace, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(mode: &str) -> Scenario {
        Scenario::from_toml(
            &format!(
                r#"
name = "unit"
duration = 3.0
[allocator]
mode = "{mode}"
[reference]
kind = "torque_schedule"
hold_angle = 60.0
segments = [[0.0, 0.0], [0.5, 3.0], [1.5, -2.0]]
"#
            ),
            None,
        )
        .unwrap()
    }

    #[test]
    fn net_torque_is_conserved_in_every_mode() {
        for mode in ["dynamic", "constant", "extended"] {
            let out = run(&schedule(mode)).unwrap();
            assert_eq!(out.trace.rows.len(), 3001);
            assert!(out.summary.net_error_max <= NET_TOLERANCE, "{mode}");
        }
    }

    #[test]
    fn extended_with_single_muscles_matches_dynamic() {
        let a = run(&schedule("dynamic")).unwrap().trace;
        let b = run(&schedule("extended")).unwrap().trace;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((ra.zeta1 - rb.zeta1).abs() < 1e-9);
            assert!((ra.zeta2 - rb.zeta2).abs() < 1e-9);
            assert!((ra.alpha_s1 - rb.alpha_s1).abs() < 1e-12);
        }
    }

    #[test]
    fn auto_constant_share_comes_from_dynamic_run() {
        let dynamic = run(&schedule("dynamic")).unwrap();
        let constant = run(&schedule("constant")).unwrap();
        assert_eq!(constant.trace.meta.alpha_const, Some(dynamic.summary.mean_alpha));
    }

    #[test]
    fn trace_round_trips_through_csv() {
        let out = run(&schedule("dynamic")).unwrap();
        let text = out.trace.to_csv_string().unwrap();
        assert_eq!(Trace::parse(&text).unwrap(), out.trace);
    }
}
