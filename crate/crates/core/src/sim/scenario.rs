//! Scenario files.
//!
//! A scenario is a TOML document. Every table except `[reference]` may be
//! omitted. Example:
//!
//! ```toml
//! name = "tracking"
//! dt = 0.001                   # s
//!
//! [allocator]
//! mode = "dynamic"             # dynamic | constant | extended
//! w_base = [0.05, 0.05, 1.0]
//! alpha_cap = 0.8              # optional
//!
//! [reference]
//! kind = "trajectory"          # or "torque_schedule"
//! dwell = 2.0
//!
//! [plant]
//! payload_moment = 8.0         # N·m, not gravity compensated
//!
//! [fes]
//! flexor = "synthetic:flexor"  # or a path to a model file
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocator::AllocatorParams;
use crate::control::{ImpedanceGains, Reference, TrajectoryParams};
use crate::error::{Error, Result};
use crate::fes::{self, FesModel};
use crate::plant::{ElbowPlant, ExoActuator};
use crate::types::{AngleBound, AttainableSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorMode {
    #[default]
    Dynamic,
    Constant,
    Extended,
}

impl AllocatorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AllocatorMode::Dynamic => "dynamic",
            AllocatorMode::Constant => "constant",
            AllocatorMode::Extended => "extended",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocatorConfig {
    pub mode: AllocatorMode,
    /// Constant-mode FES share. Absent: the mean share of the dynamic run.
    pub alpha_const: Option<f64>,
    pub alpha_cap: Option<f64>,
    pub w_base: [f64; 3],
    /// Absent: `2 pi` times each channel's FES bandwidth as modified gain.
    pub k: Option<[f64; 2]>,
    pub fes_margin_eps: f64,
    pub saturation_aware: bool,
    pub zeta0: [f64; 2],
    /// Exoskeleton bound used by the allocator, N·m.
    pub exo_bound: f64,
    /// Strength shares of the muscles in each group (extended mode).
    pub flexor_shares: Vec<f64>,
    pub extensor_shares: Vec<f64>,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self {
            mode: AllocatorMode::Dynamic,
            alpha_const: None,
            alpha_cap: None,
            w_base: [0.05, 0.05, 1.0],
            k: None,
            fes_margin_eps: 1e-3,
            saturation_aware: true,
            zeta0: [0.0, 0.0],
            exo_bound: 15.0,
            flexor_shares: vec![1.0],
            extensor_shares: vec![1.0],
        }
    }
}

/// Piecewise-constant net torque with the joint held at a fixed angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorqueSchedule {
    /// deg
    pub hold_angle: f64,
    /// `[start time s, net torque N·m]`, ordered by time.
    pub segments: Vec<[f64; 2]>,
}

impl TorqueSchedule {
    pub fn at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .take_while(|s| s[0] <= t)
            .last()
            .map_or(0.0, |s| s[1])
    }

    /// Segment boundaries `(start, end, torque)` up to `horizon`.
    pub fn spans(&self, horizon: f64) -> Vec<(f64, f64, f64)> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let end = self.segments.get(i + 1).map_or(horizon, |n| n[0]);
                (s[0], end, s[1])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceConfig {
    Trajectory(TrajectoryParams),
    TorqueSchedule(TorqueSchedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceConfig {
    pub kp: f64,
    pub kd: f64,
    pub alpha_bar: f64,
    /// Commanded co-contraction, N·m.
    pub cocontraction: f64,
}

impl Default for ImpedanceConfig {
    fn default() -> Self {
        let g = ImpedanceGains::default();
        Self {
            kp: g.kp,
            kd: g.kd,
            alpha_bar: g.alpha_bar,
            cocontraction: 0.0,
        }
    }
}

impl ImpedanceConfig {
    pub fn gains(&self) -> ImpedanceGains {
        ImpedanceGains {
            kp: self.kp,
            kd: self.kd,
            alpha_bar: self.alpha_bar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FesConfig {
    /// `synthetic:flexor`, `synthetic:extensor` or a model file path,
    /// relative to the scenario file.
    pub flexor: String,
    pub extensor: String,
    pub flexor_psi: f64,
    pub extensor_psi: f64,
    /// Lead time constant of the feedforward, s. Zero is a static inverse.
    pub lead_s: f64,
}

impl Default for FesConfig {
    fn default() -> Self {
        Self {
            flexor: "synthetic:flexor".into(),
            extensor: "synthetic:extensor".into(),
            flexor_psi: 1.0,
            extensor_psi: 1.0,
            lead_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// s. Defaults to the trajectory length with holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Seeds the angle-sensor noise.
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of the measured angle, deg.
    #[serde(default)]
    pub sensor_noise_deg: f64,
    /// deg. Defaults to the reference at t = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_angle: Option<f64>,
    #[serde(default)]
    pub allocator: AllocatorConfig,
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub plant: ElbowPlant,
    #[serde(default)]
    pub exo: ExoActuator,
    #[serde(default)]
    pub impedance: ImpedanceConfig,
    #[serde(default)]
    pub fes: FesConfig,
    /// Directory model paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_dt() -> f64 {
    1e-3
}

/// Everything a run needs, resolved and validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub flexor: Arc<FesModel>,
    pub extensor: Arc<FesModel>,
    pub limits: AttainableSet,
    pub params: AllocatorParams,
    pub reference: Option<Reference>,
    pub duration: f64,
}

impl Scenario {
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Config(format!("invalid scenario: {e}")))?;
        s.base_dir = base_dir.map(Path::to_path_buf);
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
    }

    /// SHA-256 of the canonical TOML form, hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    fn load_model(&self, spec: &str, psi: f64) -> Result<Arc<FesModel>> {
        let model = match spec {
            "synthetic:flexor" => FesModel::synthetic_flexor(),
            "synthetic:extensor" => FesModel::synthetic_extensor(),
            path => {
                let p = Path::new(path);
                let full = match (&self.base_dir, p.is_relative()) {
                    (Some(dir), true) => dir.join(p),
                    _ => p.to_path_buf(),
                };
                fes::io::read_model(&full)?
            }
        };
        Ok(Arc::new(model.with_fatigue(psi)?))
    }

    /// Loads models and checks every parameter before anything is simulated.
    pub fn resolve(&self) -> Result<Resolved> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.sensor_noise_deg >= 0.0) {
            return Err(Error::Config("sensor noise must be >= 0".into()));
        }
        self.plant.validate()?;
        if !(self.exo.torque_limit > 0.0 && self.exo.tracking_bandwidth > 0.0) {
            return Err(Error::Config("exoskeleton limit and bandwidth must be positive".into()));
        }
        self.impedance.gains().validate()?;
        let a = &self.allocator;
        if let Some(alpha) = a.alpha_const {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::Config(format!("alpha_const must lie in [0, 1], got {alpha}")));
            }
        }
        if a.mode == AllocatorMode::Extended {
            if a.alpha_cap.is_some() {
                return Err(Error::Config("alpha_cap is not supported in extended mode".into()));
            }
            for shares in [&a.flexor_shares, &a.extensor_shares] {
                let sum: f64 = shares.iter().sum();
                if shares.is_empty() || shares.iter().any(|s| !(*s > 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "muscle shares must be positive and sum to 1, got {shares:?}"
                    )));
                }
            }
        }

        let flexor = self.load_model(&self.fes.flexor, self.fes.flexor_psi)?;
        let extensor = self.load_model(&self.fes.extensor, self.fes.extensor_psi)?;
        let limits = AttainableSet::new(
            AngleBound::Fes(flexor.clone()),
            AngleBound::Fes(extensor.clone()),
            a.exo_bound,
            flexor.bandwidth(),
            extensor.bandwidth(),
        )?;
        let mut params = AllocatorParams::new(a.k.unwrap_or([1.0, 1.0]), a.w_base, limits.clone());
        params.fes_margin_eps = a.fes_margin_eps;
        params.alpha_cap = a.alpha_cap;
        params.saturation_aware = a.saturation_aware;
        if a.k.is_none() {
            params = params.with_bandwidth_gains();
        }
        params.validate()?;
        if self.dt > params.max_dt() {
            return Err(Error::Config(format!(
                "dt {} s exceeds the allocator limit {} s",
                self.dt,
                params.max_dt()
            )));
        }

        let (reference, natural) = match &self.reference {
            ReferenceConfig::Trajectory(p) => {
                let r = Reference::new(p.clone())?;
                let d = r.total_duration();
                (Some(r), Some(d))
            }
            ReferenceConfig::TorqueSchedule(s) => {
                if s.segments.is_empty() || s.segments.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::Config("torque schedule needs increasing segment times".into()));
                }
                (None, None)
            }
        };
        let duration = match (self.duration, natural) {
            (Some(d), Some(n)) if d > n + 1e-9 => {
                return Err(Error::Config(format!(
                    "duration {d} s exceeds the reference length {n} s"
                )))
            }
            (Some(d), _) => d,
            (None, Some(n)) => n,
            (None, None) => return Err(Error::Config("torque schedules need an explicit duration".into())),
        };
        if !(duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        Ok(Resolved {
            flexor,
            extensor,
            limits,
            params,
            reference,
            duration,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"
[reference]
kind = "trajectory"
"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_toml(MINIMAL, None).unwrap();
        assert_eq!(s.dt, 1e-3);
        assert_eq!(s.allocator.mode, AllocatorMode::Dynamic);
        assert_eq!(s.plant, ElbowPlant::default());
        let r = s.resolve().unwrap();
        assert!(r.duration > 30.0);
        let k_prime = r.params.k[0] * (r.params.w_base[0] + r.params.w_base[2]);
        assert!((k_prime - 2.0 * std::f64::consts::PI * 0.908).abs() < 1e-9);
    }

    #[test]
    fn canonical_form_round_trips_and_hashes_stably() {
        let s = Scenario::from_toml(MINIMAL, None).unwrap();
        let again = Scenario::from_toml(&s.to_toml().unwrap(), None).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.hash().unwrap(), again.hash().unwrap());
        assert_eq!(s.hash().unwrap().len(), 64);
    }

    #[test]
    fn config_errors() {
        let bad_key = format!("{MINIMAL}\n[plant]\ninertia_kg = 1.0\n");
        assert!(matches!(Scenario::from_toml(&bad_key, None), Err(Error::Config(_))));

        let mut s = Scenario::from_toml(MINIMAL, None).unwrap();
        s.dt = 0.05;
        assert!(matches!(s.resolve(), Err(Error::Config(_))));

        let mut s = Scenario::from_toml(MINIMAL, None).unwrap();
        s.fes.flexor = "does/not/exist.toml".into();
        assert!(s.resolve().is_err());

        let schedule = r#"
name = "s"
[reference]
kind = "torque_schedule"
hold_angle = 60.0
segments = [[0.0, 1.0]]
"#;
        let s = Scenario::from_toml(schedule, None).unwrap();
        assert!(matches!(s.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn schedule_lookup() {
        let s = TorqueSchedule {
            hold_angle: 60.0,
            segments: vec![[0.0, 0.0], [1.0, 4.0], [3.0, -2.0]],
        };
        assert_eq!(s.at(0.5), 0.0);
        assert_eq!(s.at(1.0), 4.0);
        assert_eq!(s.at(2.999), 4.0);
        assert_eq!(s.at(10.0), -2.0);
        assert_eq!(s.spans(5.0)[2], (3.0, 5.0, -2.0));
    }
}
