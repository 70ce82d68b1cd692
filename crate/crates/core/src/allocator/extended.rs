//! Allocation with redundancy inside the muscle groups.
//!
//! Every stimulated muscle is its own actuator. The torque vector is
//! `[flexors..., extensors..., exo]` and the null-space basis is
//! `[I; -1^T]`, so each allocator state trades one muscle against the
//! exoskeleton. `S+` repeats sigma over the muscles of each group.

use crate::error::{Error, Result};
use crate::types::{sigma_for, AngleBound, Sigma, SIGMA_FLEXION};

#[derive(Debug, Clone)]
pub struct ExtendedAllocatorState {
    pub n_flexor: usize,
    pub n_extensor: usize,
    pub zeta_plus: Vec<f64>,
    /// Per-muscle magnitude bounds, flexors first.
    pub muscle_limits: Vec<AngleBound>,
    pub exo_limit: f64,
    pub k_plus: Vec<f64>,
    /// `n_m + 1` weights, the last one for the exoskeleton.
    pub w_plus: Vec<f64>,
    /// Barrier floor; `None` keeps `w_plus` frozen.
    pub barrier_eps: Option<f64>,
    pub sigma: Sigma,
}

#[derive(Debug, Clone)]
pub struct ExtendedStep {
    pub state: ExtendedAllocatorState,
    /// Redistributed torque vector after the step.
    pub tau_plus: Vec<f64>,
    /// Muscles (and last entry: exo) outside their magnitude bound.
    pub violations: Vec<bool>,
    pub weights: Vec<f64>,
}

impl ExtendedAllocatorState {
    pub fn new(
        n_flexor: usize,
        n_extensor: usize,
        k_plus: Vec<f64>,
        w_plus: Vec<f64>,
        muscle_limits: Vec<AngleBound>,
        exo_limit: f64,
    ) -> Result<Self> {
        let state = Self {
            n_flexor,
            n_extensor,
            zeta_plus: vec![0.0; n_flexor + n_extensor],
            muscle_limits,
            exo_limit,
            k_plus,
            w_plus,
            barrier_eps: None,
            sigma: SIGMA_FLEXION,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn n_muscles(&self) -> usize {
        self.n_flexor + self.n_extensor
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_muscles();
        if self.n_flexor == 0 || self.n_extensor == 0 {
            return Err(Error::Config("need at least one flexor and one extensor".into()));
        }
        if self.zeta_plus.len() != n
            || self.k_plus.len() != n
            || self.w_plus.len() != n + 1
            || self.muscle_limits.len() != n
        {
            return Err(Error::Config(format!(
                "extended allocator dimensions inconsistent with n_m = {n}: zeta {}, k {}, w {}, limits {}",
                self.zeta_plus.len(),
                self.k_plus.len(),
                self.w_plus.len(),
                self.muscle_limits.len()
            )));
        }
        if self
            .k_plus
            .iter()
            .chain(&self.w_plus)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::Config("extended gains must be positive".into()));
        }
        Ok(())
    }

    /// Diagonal of `S+`.
    fn selector(&self, sigma: Sigma) -> Vec<f64> {
        (0..self.n_muscles())
            .map(|j| if j < self.n_flexor { sigma[0] } else { sigma[1] })
            .collect()
    }

    /// `tau_nom + G+ S+ zeta`
    pub fn redistribute(&self, tau_plus_nominal: &[f64], sigma: Sigma, zeta: &[f64]) -> Vec<f64> {
        let n = self.n_muscles();
        let s = self.selector(sigma);
        let mut tau = tau_plus_nominal.to_vec();
        for j in 0..n {
            let shift = s[j] * zeta[j];
            tau[j] += shift;
            tau[n] -= shift;
        }
        tau
    }

    fn weights(&self, tau: &[f64], angle_deg: f64) -> (Vec<f64>, Vec<bool>) {
        let n = self.n_muscles();
        let mut w = self.w_plus.clone();
        let mut violations = vec![false; n + 1];
        for j in 0..=n {
            let m = if j < n {
                self.muscle_limits[j].at(angle_deg)
            } else {
                self.exo_limit
            };
            let ratio = tau[j] / m;
            violations[j] = ratio.abs() > 1.0;
            if let Some(eps) = self.barrier_eps {
                w[j] /= (1.0 - ratio * ratio).max(eps);
            }
        }
        (w, violations)
    }

    fn rate(&self, w: &[f64], s: &[f64], tau_nominal: &[f64], zeta: &[f64]) -> Vec<f64> {
        let n = self.n_muscles();
        let mut exo = tau_nominal[n];
        for j in 0..n {
            exo -= s[j] * zeta[j];
        }
        (0..n)
            .map(|j| {
                let muscle = tau_nominal[j] + s[j] * zeta[j];
                -self.k_plus[j] * s[j] * (w[j] * muscle - w[n] * exo)
            })
            .collect()
    }
}

/// One RK4 step of the extended allocator.
pub fn extended_allocator_step(
    state: &ExtendedAllocatorState,
    tau_plus_nominal: &[f64],
    angle_deg: f64,
    dt: f64,
) -> Result<ExtendedStep> {
    state.validate()?;
    let n = state.n_muscles();
    if tau_plus_nominal.len() != n + 1 {
        return Err(Error::Config(format!(
            "nominal torque has {} entries, expected {}",
            tau_plus_nominal.len(),
            n + 1
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {dt}")));
    }
    if tau_plus_nominal.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite nominal torque".into()));
    }
    let net: f64 = tau_plus_nominal.iter().sum();
    let sigma = sigma_for(net, state.sigma);
    let s = state.selector(sigma);

    let current = state.redistribute(tau_plus_nominal, sigma, &state.zeta_plus);
    let (w, _) = state.weights(&current, angle_deg);

    let z0 = &state.zeta_plus;
    let f = |z: &[f64]| state.rate(&w, &s, tau_plus_nominal, z);
    let shifted = |k: &[f64], h: f64| -> Vec<f64> { z0.iter().zip(k).map(|(z, k)| z + h * k).collect() };
    let k1 = f(z0);
    let k2 = f(&shifted(&k1, 0.5 * dt));
    let k3 = f(&shifted(&k2, 0.5 * dt));
    let k4 = f(&shifted(&k3, dt));
    let mut zeta = z0.clone();
    for j in 0..n {
        if s[j] != 0.0 {
            zeta[j] = z0[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }

    let mut next = state.clone();
    next.zeta_plus = zeta;
    next.sigma = sigma;
    let tau_plus = next.redistribute(tau_plus_nominal, sigma, &next.zeta_plus);
    let (_, violations) = next.weights(&tau_plus, angle_deg);
    Ok(ExtendedStep {
        state: next,
        tau_plus,
        violations,
        weights: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_flexors() -> ExtendedAllocatorState {
        ExtendedAllocatorState::new(
            2,
            1,
            vec![3.0; 3],
            vec![0.5, 0.5, 0.5, 1.0],
            vec![AngleBound::Constant(5.0); 3],
            20.0,
        )
        .unwrap()
    }

    #[test]
    fn basis_columns_sum_to_zero() {
        let s = two_flexors();
        for j in 0..3 {
            let mut zeta = vec![0.0; 3];
            zeta[j] = 1.0;
            let shift = s.redistribute(&[0.0; 4], [1.0, 1.0], &zeta);
            assert_eq!(shift[j], 1.0);
            assert_eq!(shift[3], -1.0);
            assert_eq!(shift.iter().sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn zero_state_leaves_nominal_unchanged() {
        let s = two_flexors();
        let nominal = [1.0, 2.0, -0.5, 3.0];
        assert_eq!(s.redistribute(&nominal, SIGMA_FLEXION, &s.zeta_plus), nominal.to_vec());
    }

    #[test]
    fn symmetric_flexors_share_equally() {
        // Hand solution of the steady state with w_f = 0.5, w_exo = 1:
        // 0.5 z = 1 (10 - 2 z) => z = 4 per flexor, exo keeps 2.
        let mut s = two_flexors();
        let nominal = [0.0, 0.0, 0.0, 10.0];
        for _ in 0..20_000 {
            s = extended_allocator_step(&s, &nominal, 45.0, 1e-3).unwrap().state;
        }
        assert_abs_diff_eq!(s.zeta_plus[0], s.zeta_plus[1], epsilon = 1e-12);
        assert_abs_diff_eq!(s.zeta_plus[0], 4.0, epsilon = 1e-6);
        assert_eq!(s.zeta_plus[2], 0.0);
    }

    #[test]
    fn net_is_preserved() {
        let mut s = two_flexors();
        let nominal = [0.3, 0.1, -0.2, 7.0];
        for _ in 0..100 {
            let out = extended_allocator_step(&s, &nominal, 45.0, 1e-3).unwrap();
            let net: f64 = out.tau_plus.iter().sum();
            assert_abs_diff_eq!(net, 7.2, epsilon = 1e-12);
            s = out.state;
        }
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let s = two_flexors();
        assert!(matches!(
            extended_allocator_step(&s, &[0.0; 3], 45.0, 1e-3),
            Err(Error::Config(_))
        ));
        let bad = ExtendedAllocatorState::new(
            1,
            1,
            vec![1.0; 3],
            vec![1.0; 3],
            vec![AngleBound::Constant(1.0); 2],
            1.0,
        );
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn reports_muscle_violations() {
        let mut s = two_flexors();
        s.zeta_plus = vec![6.0, 1.0, 0.0];
        let out = extended_allocator_step(&s, &[0.0, 0.0, 0.0, 10.0], 45.0, 1e-3).unwrap();
        assert!(out.violations[0]);
        assert!(!out.violations[1]);
    }
}
