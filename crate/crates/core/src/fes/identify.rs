//! Hammerstein-Wiener identification from isometric stimulation trials.
//!
//! Each trial holds one intensity at one angle for a stimulation window
//! followed by rest. Steady torques give the contraction and recruitment maps;
//! the normalized transients give second-order dynamics and the delay.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, SMatrix, SVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::sync::Arc;

use super::{ActivationDynamics, ContractionMap, FesChannel, FesModel, RecruitmentMap, STIMULATOR_DELAY_S};
use crate::error::{Error, Result};
use crate::spline::isotonic_increasing;

/// One constant-intensity trial at a fixed angle.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulationRecord {
    pub upsilon: f64,
    pub theta: f64,
    pub t: Vec<f64>,
    pub torque: Vec<f64>,
}

/// All trials of one muscle group.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingGrid {
    pub muscle: String,
    pub records: Vec<StimulationRecord>,
}

/// Protocol used to synthesize a training grid from a known model.
#[derive(Debug, Clone, PartialEq)]
pub struct GridProtocol {
    /// Defaults to the model's recruitment knots.
    pub intensities: Option<Vec<f64>>,
    pub angles: Vec<f64>,
    pub stim_s: f64,
    pub rest_s: f64,
    pub sample_hz: f64,
    pub sim_dt: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GridProtocol {
    fn default() -> Self {
        Self {
            intensities: None,
            angles: vec![15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            stim_s: 5.0,
            rest_s: 5.0,
            sample_hz: 100.0,
            sim_dt: 1e-3,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyOptions {
    /// Length of the stimulation window of each trial, s.
    pub stim_s: f64,
    /// Trailing share of the window averaged for the steady torque.
    pub steady_fraction: f64,
    pub min_delay_s: f64,
    pub max_delay_s: f64,
    /// Drop in normalized recruitment tolerated before warning.
    pub monotone_tolerance: f64,
    /// Trials below this share of the peak torque are left out of the
    /// dynamics fit.
    pub min_transient_share: f64,
    pub fatigue_psi: f64,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            stim_s: 5.0,
            steady_fraction: 0.4,
            min_delay_s: STIMULATOR_DELAY_S,
            max_delay_s: 0.3,
            monotone_tolerance: 0.02,
            min_transient_share: 0.2,
            fatigue_psi: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub model: FesModel,
    pub warnings: Vec<String>,
    /// Steady torque per cell, `[angle][intensity]`.
    pub steady: Vec<Vec<f64>>,
    pub sample_period: f64,
}

/// Simulates the protocol on `model` starting from rest for every trial.
pub fn synthesize_training_grid(model: &FesModel, protocol: &GridProtocol) -> Result<TrainingGrid> {
    let intensities = protocol
        .intensities
        .clone()
        .unwrap_or_else(|| model.recruitment.upsilon_knots().to_vec());
    let ratio = (1.0 / (protocol.sample_hz * protocol.sim_dt)).round() as usize;
    if ratio == 0 || !(protocol.stim_s > 0.0 && protocol.rest_s >= 0.0) {
        return Err(Error::InvalidInput("bad grid protocol".into()));
    }
    let noise = Normal::new(0.0, protocol.noise_std.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let model = Arc::new(model.clone());
    let total = ((protocol.stim_s + protocol.rest_s) / protocol.sim_dt).round() as usize;
    let stim_ticks = (protocol.stim_s / protocol.sim_dt).round() as usize;

    let mut records = Vec::new();
    for &theta in &protocol.angles {
        for &upsilon in &intensities {
            let mut ch = FesChannel::new(model.clone(), protocol.sim_dt);
            let mut t = vec![0.0];
            let mut torque = vec![0.0];
            for k in 0..total {
                let u = if k < stim_ticks { upsilon } else { 0.0 };
                let tau = ch.step(u, theta, protocol.sim_dt);
                if (k + 1) % ratio == 0 {
                    t.push((k + 1) as f64 * protocol.sim_dt);
                    let n = if protocol.noise_std > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    torque.push(tau + n);
                }
            }
            records.push(StimulationRecord {
                upsilon,
                theta,
                t,
                torque,
            });
        }
    }
    Ok(TrainingGrid {
        muscle: model.name.clone(),
        records,
    })
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    v
}

fn index_of(values: &[f64], x: f64) -> usize {
    values
        .iter()
        .position(|v| (v - x).abs() <= 1e-9 * v.abs().max(1.0))
        .expect("value taken from the same set")
}

/// Fits a model to `grid`. `bandwidth_hint` is only used to flag implausible
/// dynamics.
pub fn identify(grid: &TrainingGrid, bandwidth_hint: f64, opts: &IdentifyOptions) -> Result<Identification> {
    if !(bandwidth_hint > 0.0) {
        return Err(Error::InvalidInput("bandwidth hint must be positive".into()));
    }
    for r in &grid.records {
        if r.t.len() != r.torque.len() || r.t.is_empty() {
            return Err(Error::InvalidInput("trial with mismatched or empty samples".into()));
        }
        if r.torque.iter().chain(&r.t).any(|v| !v.is_finite()) || !r.upsilon.is_finite() || !r.theta.is_finite() {
            return Err(Error::InvalidInput("training data must be finite".into()));
        }
    }
    let intensities = distinct(grid.records.iter().map(|r| r.upsilon));
    let angles = distinct(grid.records.iter().map(|r| r.theta));
    if intensities.len() < 2 || angles.len() < 2 {
        return Err(Error::Identification(format!(
            "need at least 2 intensities and 2 angles, got {} and {}",
            intensities.len(),
            angles.len()
        )));
    }
    let mut warnings = Vec::new();

    // steady torque per cell
    let window_start = opts.stim_s * (1.0 - opts.steady_fraction);
    let mut sum = vec![vec![0.0; intensities.len()]; angles.len()];
    let mut count = vec![vec![0usize; intensities.len()]; angles.len()];
    let mut record_steady = Vec::with_capacity(grid.records.len());
    for r in &grid.records {
        let window: Vec<f64> =
            r.t.iter()
                .zip(&r.torque)
                .filter(|(t, _)| **t >= window_start && **t < opts.stim_s)
                .map(|(_, v)| *v)
                .collect();
        if window.is_empty() {
            return Err(Error::Identification(format!(
                "trial at {} mA, {} deg has no samples in the steady window",
                r.upsilon, r.theta
            )));
        }
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let (i, k) = (index_of(&angles, r.theta), index_of(&intensities, r.upsilon));
        sum[i][k] += mean;
        count[i][k] += 1;
        record_steady.push(mean);
    }
    let mut steady = sum;
    for (i, row) in steady.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            if count[i][k] == 0 {
                return Err(Error::Identification(format!(
                    "no trial at {} mA, {} deg",
                    intensities[k], angles[i]
                )));
            }
            *v /= count[i][k] as f64;
        }
    }

    // contraction and recruitment maps
    let mut peak = Vec::with_capacity(angles.len());
    let mut rows = Vec::with_capacity(angles.len());
    for (i, row) in steady.iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 1e-6) {
            return Err(Error::Identification(format!(
                "degenerate contraction map: no positive steady torque at {} deg",
                angles[i]
            )));
        }
        let mut r: Vec<f64> = row.iter().map(|v| (v / max).max(0.0)).collect();
        if r[0] > opts.monotone_tolerance {
            warnings.push(format!(
                "recruitment at the lowest intensity is {:.3} at {} deg; treated as motor threshold",
                r[0], angles[i]
            ));
        }
        r[0] = 0.0;
        if r.windows(2).any(|w| w[1] < w[0] - opts.monotone_tolerance) {
            warnings.push(format!(
                "non-monotone steady torque at {} deg; isotonic fit applied",
                angles[i]
            ));
        }
        let mut r = isotonic_increasing(&r);
        r[0] = 0.0;
        peak.push(max);
        rows.push(r);
    }
    let recruitment = RecruitmentMap::new(intensities.clone(), angles.clone(), rows)?;
    let contraction = ContractionMap::new(angles.clone(), peak.clone())?;

    // dynamics on normalized transients
    let ts = sample_period(grid)?;
    let mut series = Vec::new();
    for (r, &ss) in grid.records.iter().zip(&record_steady) {
        let i = index_of(&angles, r.theta);
        if ss < opts.min_transient_share * peak[i] {
            continue;
        }
        let y: Vec<f64> = r.torque.iter().map(|v| v / ss).collect();
        let u: Vec<f64> =
            r.t.iter()
                .map(|t| if *t < opts.stim_s - 1e-9 { 1.0 } else { 0.0 })
                .collect();
        series.push((y, u));
    }
    if series.is_empty() {
        return Err(Error::Identification(
            "no trial strong enough for the dynamics fit".into(),
        ));
    }
    // Lag scan. Each candidate is refined with instrumental-variable passes,
    // which remove the equation-error bias under noise, and scored by its
    // simulation error.
    let max_lag = (opts.max_delay_s / ts).ceil() as usize;
    let mut best: Option<(usize, f64, Arx)> = None;
    for d in 0..=max_lag {
        let Some(mut fit) = fit_arx(&series, d, None) else {
            continue;
        };
        for _ in 0..3 {
            match fit_arx(&series, d, Some(&fit)) {
                Some(next) if next.is_stable() => fit = next,
                _ => break,
            }
        }
        if !fit.is_stable() {
            continue;
        }
        let sse = fit.output_error(&series, d);
        if best.as_ref().is_none_or(|(_, s, _)| sse < *s) {
            best = Some((d, sse, fit));
        }
    }
    let (lag, _, arx) =
        best.ok_or_else(|| Error::Identification("no stable dynamics model fits the transients".into()))?;
    let (a0, a1) = continuous_characteristic(&arx, ts)?;
    let (a0, a1, delay) = refine_continuous(&series, ts, [a0, a1, lag as f64 * ts], opts.max_delay_s).unwrap_or((
        a0,
        a1,
        lag as f64 * ts,
    ));
    let activation = ActivationDynamics::from_characteristic(a0, a1);
    let bandwidth = activation.bandwidth();
    if !(bandwidth > bandwidth_hint / 10.0 && bandwidth < bandwidth_hint * 10.0) {
        warnings.push(format!(
            "identified bandwidth {bandwidth:.3} Hz is far from the hint {bandwidth_hint} Hz"
        ));
    }
    let delay = delay.max(opts.min_delay_s);
    let model = FesModel::new(
        grid.muscle.clone(),
        recruitment,
        contraction,
        activation,
        opts.fatigue_psi,
        delay,
    )?;
    Ok(Identification {
        model,
        warnings,
        steady,
        sample_period: ts,
    })
}

fn sample_period(grid: &TrainingGrid) -> Result<f64> {
    let mut ts: Option<f64> = None;
    for r in &grid.records {
        for w in r.t.windows(2) {
            let h = w[1] - w[0];
            match ts {
                None if h > 0.0 => ts = Some(h),
                Some(p) if (h - p).abs() <= 1e-6 * p => {}
                _ => {
                    return Err(Error::Identification(
                        "training samples must share one uniform sample period".into(),
                    ))
                }
            }
        }
    }
    ts.ok_or_else(|| Error::Identification("trials need at least two samples".into()))
}

const NB: usize = 3;
const NP: usize = 2 + NB;

/// `y[k] = -a1 y[k-1] - a2 y[k-2] + b1 u[k-1-d] + b2 u[k-2-d] + b3 u[k-3-d]`
#[derive(Debug, Clone, Copy)]
struct Arx {
    theta: SVector<f64, NP>,
}

impl Arx {
    fn regressor(y: &[f64], u: &[f64], k: usize, d: usize) -> SVector<f64, NP> {
        let mut phi = SVector::<f64, NP>::zeros();
        phi[0] = -y[k - 1];
        phi[1] = -y[k - 2];
        for j in 0..NB {
            phi[2 + j] = u[k - 1 - j - d];
        }
        phi
    }

    fn output_error(&self, series: &[(Vec<f64>, Vec<f64>)], d: usize) -> f64 {
        series
            .iter()
            .map(|(y, u)| {
                let sim = self.simulate(u, d);
                y.iter().zip(&sim).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum()
    }

    /// Simulated response from rest; inputs before the record are zero.
    fn simulate(&self, u: &[f64], d: usize) -> Vec<f64> {
        let mut y = vec![0.0; u.len()];
        for k in 0..u.len() {
            let mut v = 0.0;
            for (j, a) in [self.theta[0], self.theta[1]].iter().enumerate() {
                if k > j {
                    v -= a * y[k - 1 - j];
                }
            }
            for j in 0..NB {
                if k >= 1 + j + d {
                    v += self.theta[2 + j] * u[k - 1 - j - d];
                }
            }
            y[k] = v;
        }
        y
    }

    fn is_stable(&self) -> bool {
        let (a1, a2) = (self.theta[0], self.theta[1]);
        // Jury conditions for z^2 + a1 z + a2
        a2.abs() < 1.0 && 1.0 + a1 + a2 > 0.0 && 1.0 - a1 + a2 > 0.0
    }
}

/// Least squares, or instrumental variables built from a previous model's
/// simulated output.
fn fit_arx(series: &[(Vec<f64>, Vec<f64>)], d: usize, instrument: Option<&Arx>) -> Option<Arx> {
    let mut lhs = SMatrix::<f64, NP, NP>::zeros();
    let mut rhs = SVector::<f64, NP>::zeros();
    let mut rows = 0usize;
    for (y, u) in series {
        let sim = instrument.map(|m| m.simulate(u, d));
        for k in (NB + d)..y.len() {
            let phi = Arx::regressor(y, u, k, d);
            let z = match &sim {
                Some(s) => Arx::regressor(s, u, k, d),
                None => phi,
            };
            lhs += z * phi.transpose();
            rhs += z * y[k];
            rows += 1;
        }
    }
    if rows < NP {
        return None;
    }
    let scale = lhs.abs().max();
    let svd = DMatrix::from_column_slice(NP, NP, lhs.as_slice()).svd(true, true);
    if svd.singular_values.min() <= 1e-12 * scale {
        return None;
    }
    let sol = svd.solve(&DVector::from_column_slice(rhs.as_slice()), 0.0).ok()?;
    Some(Arx {
        theta: SVector::<f64, NP>::from_column_slice(sol.as_slice()),
    })
}

/// Unit-DC step response of `a0 / (s^2 + a1 s + a0)` sampled at
/// `tau0 + k ts`, `k = 0..n`; zero for negative times.
fn step_response(a0: f64, a1: f64, tau0: f64, ts: f64, n: usize) -> Vec<f64> {
    let a = Matrix2::new(0.0, 1.0, -a0, -a1);
    // x(tau) = e^{A tau} v - v with v = -A^{-1} B, B = [0, a0]
    let v = Vector2::new(-1.0, 0.0);
    let phi = (a * ts).exp();
    let mut out = vec![0.0; n];
    let first = if tau0 >= 0.0 { 0 } else { ((-tau0) / ts).ceil() as usize };
    if first >= n {
        return out;
    }
    let mut z = (a * (tau0 + first as f64 * ts)).exp() * v;
    for slot in out.iter_mut().skip(first) {
        *slot = z[0] - v[0];
        z = phi * z;
    }
    out
}

/// Output-error residuals of the delayed continuous model over all series.
/// Inputs are piecewise constant on the sample grid.
fn continuous_residuals(series: &[(Vec<f64>, Vec<f64>)], ts: f64, p: [f64; 3]) -> Vec<f64> {
    let (w, zeta, td) = (p[0].exp(), p[1].exp(), p[2]);
    let (a0, a1) = (w * w, 2.0 * zeta * w);
    let mut res = Vec::new();
    for (y, u) in series {
        let mut pred = vec![0.0; y.len()];
        let mut prev = 0.0;
        for (j, &uj) in u.iter().enumerate() {
            let jump = uj - prev;
            prev = uj;
            if jump != 0.0 {
                let resp = step_response(a0, a1, -td, ts, y.len() - j);
                for (k, r) in resp.iter().enumerate() {
                    pred[j + k] += jump * r;
                }
            }
        }
        res.extend(y.iter().zip(&pred).map(|(a, b)| a - b));
    }
    res
}

/// Levenberg-Marquardt fit of natural frequency, damping and delay to the
/// measured transients, started from the discrete estimate.
fn refine_continuous(
    series: &[(Vec<f64>, Vec<f64>)],
    ts: f64,
    start: [f64; 3],
    max_delay: f64,
) -> Option<(f64, f64, f64)> {
    let [a0, a1, td] = start;
    let w = a0.sqrt();
    let mut p = [w.ln(), (a1 / (2.0 * w)).ln(), td];
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut r = continuous_residuals(series, ts, p);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..100 {
        let steps = [1e-6, 1e-6, 1e-3 * ts];
        let mut jac = DMatrix::zeros(r.len(), 3);
        for i in 0..3 {
            let mut q = p;
            q[i] += steps[i];
            let rq = continuous_residuals(series, ts, q);
            for (k, (a, b)) in rq.iter().zip(&r).enumerate() {
                jac[(k, i)] = (a - b) / steps[i];
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * DVector::from_column_slice(&r);
        let mut improved = false;
        while lambda < 1e12 {
            let mut lhs = jtj.clone();
            for i in 0..3 {
                lhs[(i, i)] *= 1.0 + lambda;
            }
            let delta = lhs.lu().solve(&(-&jtr))?;
            let q = [
                p[0] + delta[0],
                p[1] + delta[1],
                (p[2] + delta[2]).clamp(0.0, max_delay),
            ];
            let rq = continuous_residuals(series, ts, q);
            let cq = cost(&rq);
            if cq.is_finite() && cq < c {
                let gain = (c - cq) / c.max(f64::MIN_POSITIVE);
                p = q;
                r = rq;
                c = cq;
                lambda = (lambda / 10.0).max(1e-12);
                improved = gain > 1e-12;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let (w, zeta) = (p[0].exp(), p[1].exp());
    let out = (w * w, 2.0 * zeta * w, p[2]);
    (out.0.is_finite() && out.1 > 0.0).then_some(out)
}

/// Maps the discrete poles to `s^2 + a1 s + a0`.
fn continuous_characteristic(arx: &Arx, ts: f64) -> Result<(f64, f64)> {
    let (a1, a2) = (arx.theta[0], arx.theta[1]);
    let disc = a1 * a1 - 4.0 * a2;
    let (a0c, a1c) = if disc >= 0.0 {
        let z1 = 0.5 * (-a1 + disc.sqrt());
        let z2 = 0.5 * (-a1 - disc.sqrt());
        if !(z1 > 0.0 && z2 > 0.0 && z1 < 1.0 && z2 < 1.0) {
            return Err(Error::Identification(format!(
                "identified poles {z1:.4}, {z2:.4} have no stable continuous equivalent"
            )));
        }
        let (s1, s2) = (z1.ln() / ts, z2.ln() / ts);
        (s1 * s2, -(s1 + s2))
    } else {
        let modulus = a2.sqrt();
        let angle = (0.5 * (-disc).sqrt()).atan2(-0.5 * a1);
        let re = modulus.ln() / ts;
        let im = angle / ts;
        (re * re + im * im, -2.0 * re)
    };
    if !(a0c > 0.0 && a1c > 0.0) {
        return Err(Error::Identification("identified dynamics are not stable".into()));
    }
    if (a0c.sqrt() / (2.0 * PI)) * ts > 0.5 {
        return Err(Error::Identification(
            "identified bandwidth exceeds the Nyquist rate".into(),
        ));
    }
    Ok((a0c, a1c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_protocol() -> GridProtocol {
        GridProtocol {
            angles: vec![30.0, 60.0, 90.0],
            ..Default::default()
        }
    }

    #[test]
    fn recovers_noise_free_model() {
        let truth = FesModel::synthetic_extensor();
        let grid = synthesize_training_grid(&truth, &small_protocol()).unwrap();
        let id = identify(&grid, 4.0, &IdentifyOptions::default()).unwrap();
        assert!(id.warnings.is_empty(), "{:?}", id.warnings);
        let bw = id.model.bandwidth();
        assert!((bw - 3.976).abs() < 0.01 * 3.976, "bandwidth {bw}");
        assert!((id.model.delay_td - truth.delay_td).abs() <= id.sample_period);
        for theta in [30.0, 60.0, 90.0] {
            assert!((id.model.peak_torque(theta) - truth.peak_torque(theta)).abs() < 1e-6);
        }
    }

    #[test]
    fn single_angle_is_rejected() {
        let truth = FesModel::synthetic_flexor();
        let grid = synthesize_training_grid(
            &truth,
            &GridProtocol {
                angles: vec![45.0],
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            identify(&grid, 1.0, &IdentifyOptions::default()),
            Err(Error::Identification(_))
        ));
    }

    #[test]
    fn zero_torque_grid_is_degenerate() {
        let truth = FesModel::synthetic_flexor();
        let mut grid = synthesize_training_grid(&truth, &small_protocol()).unwrap();
        for r in &mut grid.records {
            r.torque.iter_mut().for_each(|v| *v = 0.0);
        }
        let err = identify(&grid, 1.0, &IdentifyOptions::default()).unwrap_err();
        assert!(err.to_string().contains("degenerate contraction map"), "{err}");
    }

    #[test]
    fn non_monotone_cell_warns_and_stays_monotone() {
        let truth = FesModel::synthetic_flexor();
        let mut grid = synthesize_training_grid(&truth, &small_protocol()).unwrap();
        // depress the 23 mA trial at 60 deg below the 18 mA one
        for r in &mut grid.records {
            if r.theta == 60.0 && r.upsilon == 23.0 {
                r.torque.iter_mut().for_each(|v| *v *= 0.5);
            }
        }
        let id = identify(&grid, 1.0, &IdentifyOptions::default()).unwrap();
        assert!(id.warnings.iter().any(|w| w.contains("non-monotone")));
        let row = &id.model.recruitment.values()[1];
        assert!(row.windows(2).all(|w| w[0] <= w[1]));
    }
}
