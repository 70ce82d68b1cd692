//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use hybrid_alloc::allocator::{AllocatorParams, ExtendedAllocatorState};
use hybrid_alloc::fes::{attainable_set, FesModel};
use hybrid_alloc::sim::Scenario;
use hybrid_alloc::AngleBound;

pub fn models() -> (Arc<FesModel>, Arc<FesModel>) {
    (
        Arc::new(FesModel::synthetic_flexor()),
        Arc::new(FesModel::synthetic_extensor()),
    )
}

/// Two-channel allocator with the default weights and bandwidth gains.
pub fn two_channel_params() -> AllocatorParams {
    let (f, e) = models();
    let limits = attainable_set(f, e, 15.0).expect("valid models");
    AllocatorParams::new([1.0, 1.0], [0.05, 0.05, 1.0], limits).with_bandwidth_gains()
}

/// Extended allocator with `n` flexors and `n` extensors sharing each group bound.
pub fn extended_state(n: usize) -> ExtendedAllocatorState {
    let (f, e) = models();
    let f = Arc::new(AngleBound::Fes(f));
    let e = Arc::new(AngleBound::Fes(e));
    let share = 1.0 / n as f64;
    let limits = (0..n)
        .map(|_| AngleBound::Scaled(share, f.clone()))
        .chain((0..n).map(|_| AngleBound::Scaled(share, e.clone())))
        .collect();
    let mut w = vec![0.05; 2 * n];
    w.push(1.0);
    let mut st = ExtendedAllocatorState::new(n, n, vec![5.0; 2 * n], w, limits, 15.0).expect("valid state");
    st.barrier_eps = Some(1e-3);
    st
}

/// Short isometric step scenario.
pub fn step_scenario(seconds: f64) -> Scenario {
    Scenario::from_toml(
        &format!(
            r#"
name = "bench"
duration = {seconds}
[reference]
kind = "torque_schedule"
hold_angle = 60.0
segments = [[0.0, 0.0], [0.2, 4.0], [0.6, -3.0]]
"#
        ),
        None,
    )
    .expect("valid scenario")
}
