//! Trace CSV files, run summaries and trace comparison.
//!
//! A trace starts with `#`-prefixed `key: value` lines followed by a CSV table
//! with one row per control tick.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verify::{iss_bound_check, IssReport};

/// Allocated flexor torque above its bound.
pub const FLAG_FLEXOR_BOUND: u32 = 1;
/// Allocated extensor torque beyond its bound.
pub const FLAG_EXTENSOR_BOUND: u32 = 1 << 1;
/// Allocated exoskeleton torque beyond its bound.
pub const FLAG_EXO_BOUND: u32 = 1 << 2;
/// Flexor stimulation clamped at its maximum intensity.
pub const FLAG_FLEXOR_STIM: u32 = 1 << 3;
/// Extensor stimulation clamped at its maximum intensity.
pub const FLAG_EXTENSOR_STIM: u32 = 1 << 4;
/// Exoskeleton command clamped at the actuator limit.
pub const FLAG_EXO_ACTUATOR: u32 = 1 << 5;

pub const COLUMNS: [&str; 20] = [
    "t",
    "theta_d",
    "theta",
    "tau_n_nom",
    "tau_ff",
    "tau_fe",
    "tau_e",
    "tau_f_real",
    "tau_e_applied",
    "zeta1",
    "zeta2",
    "alpha",
    "alpha_s1",
    "alpha_s2",
    "upsilon_f",
    "upsilon_e",
    "af_upper",
    "af_lower",
    "sat_flags",
    "sigma1",
];

const UNITS: &str =
    "t[s] theta_d[deg] theta[deg] tau_*[N·m] zeta*[N·m] alpha*[-] upsilon_*[mA] af_*[N·m] sat_flags[bitmask] sigma1[-]";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub theta_d: f64,
    pub theta: f64,
    /// Nominal net torque.
    pub tau_n_nom: f64,
    /// Allocated torques.
    pub tau_ff: f64,
    pub tau_fe: f64,
    pub tau_e: f64,
    /// Realized FES torque, flexor plus extensor.
    pub tau_f_real: f64,
    /// Torque delivered by the exoskeleton, gravity compensation included.
    pub tau_e_applied: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub alpha: f64,
    pub alpha_s1: f64,
    pub alpha_s2: f64,
    pub upsilon_f: f64,
    pub upsilon_e: f64,
    pub af_upper: f64,
    pub af_lower: f64,
    pub sat_flags: u32,
    /// 1 while the flexion channel is active.
    pub sigma1: f64,
}

impl TraceRow {
    pub fn fes_violation(&self) -> bool {
        self.sat_flags & (FLAG_FLEXOR_BOUND | FLAG_EXTENSOR_BOUND) != 0
    }

    pub fn net_error(&self) -> f64 {
        (self.tau_ff + self.tau_fe + self.tau_e - self.tau_n_nom).abs()
    }

    fn values(&self) -> [f64; 20] {
        [
            self.t,
            self.theta_d,
            self.theta,
            self.tau_n_nom,
            self.tau_ff,
            self.tau_fe,
            self.tau_e,
            self.tau_f_real,
            self.tau_e_applied,
            self.zeta1,
            self.zeta2,
            self.alpha,
            self.alpha_s1,
            self.alpha_s2,
            self.upsilon_f,
            self.upsilon_e,
            self.af_upper,
            self.af_lower,
            self.sat_flags as f64,
            self.sigma1,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub scenario: String,
    pub scenario_sha256: String,
    pub mode: String,
    pub alpha_bar: f64,
    pub zeta0: [f64; 2],
    pub dt: f64,
    /// Share used by a constant-mode run.
    pub alpha_const: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = Vec::new();
        let m = &self.meta;
        writeln!(out, "# scenario: {}", m.scenario)?;
        writeln!(out, "# scenario_sha256: {}", m.scenario_sha256)?;
        writeln!(out, "# mode: {}", m.mode)?;
        writeln!(out, "# alpha_bar: {}", m.alpha_bar)?;
        writeln!(out, "# zeta0: {},{}", m.zeta0[0], m.zeta0[1])?;
        writeln!(out, "# dt: {}", m.dt)?;
        if let Some(a) = m.alpha_const {
            writeln!(out, "# alpha_const: {a}")?;
        }
        writeln!(out, "# units: {UNITS}")?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            for row in &self.rows {
                w.serialize(row)?;
            }
            if self.rows.is_empty() {
                w.write_record(COLUMNS)?;
            }
            w.flush()?;
        }
        String::from_utf8(out).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?).map_err(|e| Error::file(path, e))
    }

    pub fn read(path: &Path) -> Result<Trace> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Trace::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Trace> {
        let mut meta = TraceMeta {
            scenario: String::new(),
            scenario_sha256: String::new(),
            mode: "dynamic".into(),
            alpha_bar: 0.0,
            zeta0: [0.0, 0.0],
            dt: 0.0,
            alpha_const: None,
        };
        let mut header_lines = 0;
        for (i, line) in text.lines().enumerate() {
            let Some(rest) = line.strip_prefix('#') else {
                break;
            };
            header_lines += 1;
            let Some((key, value)) = rest.split_once(':') else {
                continue;
            };
            let value = value.trim();
            let num = |v: &str| {
                v.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("{key}: {e}"),
                })
            };
            match key.trim() {
                "scenario" => meta.scenario = value.to_string(),
                "scenario_sha256" => meta.scenario_sha256 = value.to_string(),
                "mode" => meta.mode = value.to_string(),
                "alpha_bar" => meta.alpha_bar = num(value)?,
                "dt" => meta.dt = num(value)?,
                "alpha_const" => meta.alpha_const = Some(num(value)?),
                "zeta0" => {
                    let parts: Vec<&str> = value.split(',').collect();
                    if parts.len() != 2 {
                        return Err(Error::Parse {
                            line: i + 1,
                            msg: "zeta0 needs two values".into(),
                        });
                    }
                    meta.zeta0 = [num(parts[0])?, num(parts[1])?];
                }
                _ => {}
            }
        }
        let body: String = text.lines().skip(header_lines).flat_map(|l| [l, "\n"]).collect();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let headers = rdr.headers()?.clone();
        for col in COLUMNS {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::MissingColumn(col.into()));
            }
        }
        let mut rows = Vec::new();
        for (i, row) in rdr.deserialize::<TraceRow>().enumerate() {
            rows.push(row.map_err(|e| Error::Parse {
                line: header_lines + i + 2,
                msg: e.to_string(),
            })?);
        }
        Ok(Trace { meta, rows })
    }
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub ticks: usize,
    /// Tracking error RMSE, deg.
    pub rmse_deg: f64,
    /// Mean FES share over ticks with `|tau_n| >= 0.1` N·m, clamped to [0, 1].
    pub mean_alpha: f64,
    /// Fraction of those ticks with a share of at least 0.95.
    pub p_alpha_095: f64,
    /// Ticks with allocated FES torque outside its attainable set.
    pub fes_violations: usize,
    pub exo_violations: usize,
    pub net_error_max: f64,
    /// `None` for traces the bound does not apply to.
    pub iss: Option<IssReport>,
}

/// Net torque below which the FES share is not counted.
pub const ALPHA_MIN_NET: f64 = 0.1;
pub const NET_TOLERANCE: f64 = 1e-9;

impl Summary {
    pub fn from_trace(trace: &Trace) -> Summary {
        let n = trace.rows.len();
        let mut sq = 0.0;
        let mut alphas = Vec::new();
        let (mut fes_v, mut exo_v) = (0, 0);
        let mut net_err: f64 = 0.0;
        for r in &trace.rows {
            let e = r.theta_d - r.theta;
            sq += e * e;
            if r.tau_n_nom.abs() >= ALPHA_MIN_NET {
                alphas.push(r.alpha.clamp(0.0, 1.0));
            }
            if r.fes_violation() {
                fes_v += 1;
            }
            if r.sat_flags & FLAG_EXO_BOUND != 0 {
                exo_v += 1;
            }
            net_err = net_err.max(r.net_error());
        }
        let mean_alpha = if alphas.is_empty() {
            0.0
        } else {
            alphas.iter().sum::<f64>() / alphas.len() as f64
        };
        let p95 = if alphas.is_empty() {
            0.0
        } else {
            alphas.iter().filter(|a| **a >= 0.95).count() as f64 / alphas.len() as f64
        };
        Summary {
            ticks: n,
            rmse_deg: if n == 0 { 0.0 } else { (sq / n as f64).sqrt() },
            mean_alpha,
            p_alpha_095: p95,
            fes_violations: fes_v,
            exo_violations: exo_v,
            net_error_max: net_err,
            iss: iss_bound_check(trace).ok(),
        }
    }

    /// Net conservation and, where it applies, the state bound hold.
    pub fn invariants_hold(&self) -> bool {
        self.net_error_max <= NET_TOLERANCE && self.iss.as_ref().is_none_or(|r| r.pass)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ticks            {}", self.ticks)?;
        writeln!(f, "rmse_deg         {:.4}", self.rmse_deg)?;
        writeln!(f, "mean_alpha       {:.4}", self.mean_alpha)?;
        writeln!(f, "p_alpha_ge_0.95  {:.4}", self.p_alpha_095)?;
        writeln!(f, "fes_violations   {}", self.fes_violations)?;
        writeln!(f, "exo_violations   {}", self.exo_violations)?;
        writeln!(f, "net_error_max    {:.3e}", self.net_error_max)?;
        match &self.iss {
            Some(r) => write!(
                f,
                "iss_bound        {} (margin {:.4e}, |zeta| {:.4}/{:.4}, bound {:.4}/{:.4})",
                if r.pass { "pass" } else { "FAIL" },
                r.margin,
                r.max_abs_zeta[0],
                r.max_abs_zeta[1],
                r.bound[0],
                r.bound[1]
            ),
            None => write!(f, "iss_bound        n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub column: &'static str,
    pub mean: [f64; 2],
    pub max_abs: [f64; 2],
    pub max_abs_delta: f64,
}

/// Paired statistics of two traces on the same time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rmse_deg: [f64; 2],
    pub fes_violations: [usize; 2],
    pub mean_alpha: [f64; 2],
    pub channels: Vec<ChannelStats>,
    /// Largest absolute difference over all columns.
    pub max_abs_delta: f64,
}

pub fn compare(a: &Trace, b: &Trace) -> Result<Comparison> {
    if a.rows.len() != b.rows.len() {
        return Err(Error::Comparison(format!(
            "traces have {} and {} rows",
            a.rows.len(),
            b.rows.len()
        )));
    }
    for (i, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
        if (ra.t - rb.t).abs() > 1e-9 {
            return Err(Error::Comparison(format!(
                "time grids differ at row {i}: {} vs {}",
                ra.t, rb.t
            )));
        }
    }
    let (sa, sb) = (Summary::from_trace(a), Summary::from_trace(b));
    let n = a.rows.len().max(1) as f64;
    let mut channels = Vec::new();
    let mut overall: f64 = 0.0;
    for (c, name) in COLUMNS.iter().enumerate() {
        let mut mean = [0.0; 2];
        let mut max_abs: [f64; 2] = [0.0; 2];
        let mut delta: f64 = 0.0;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let (va, vb) = (ra.values()[c], rb.values()[c]);
            mean[0] += va / n;
            mean[1] += vb / n;
            max_abs[0] = max_abs[0].max(va.abs());
            max_abs[1] = max_abs[1].max(vb.abs());
            delta = delta.max((va - vb).abs());
        }
        overall = overall.max(delta);
        channels.push(ChannelStats {
            column: name,
            mean,
            max_abs,
            max_abs_delta: delta,
        });
    }
    Ok(Comparison {
        rmse_deg: [sa.rmse_deg, sb.rmse_deg],
        fes_violations: [sa.fes_violations, sb.fes_violations],
        mean_alpha: [sa.mean_alpha, sb.mean_alpha],
        channels,
        max_abs_delta: overall,
    })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16}{:>14}{:>14}{:>14}", "", "A", "B", "B - A")?;
        writeln!(
            f,
            "{:<16}{:>14.4}{:>14.4}{:>14.4}",
            "rmse_deg",
            self.rmse_deg[0],
            self.rmse_deg[1],
            self.rmse_deg[1] - self.rmse_deg[0]
        )?;
        writeln!(
            f,
            "{:<16}{:>14}{:>14}{:>14}",
            "fes_violations",
            self.fes_violations[0],
            self.fes_violations[1],
            self.fes_violations[1] as i64 - self.fes_violations[0] as i64
        )?;
        writeln!(
            f,
            "{:<16}{:>14.4}{:>14.4}{:>14.4}",
            "mean_alpha",
            self.mean_alpha[0],
            self.mean_alpha[1],
            self.mean_alpha[1] - self.mean_alpha[0]
        )?;
        writeln!(
            f,
            "{:<16}{:>14}{:>14}{:>14}",
            "column", "mean A", "mean B", "max |B - A|"
        )?;
        for c in self.channels.iter().filter(|c| c.column != "t") {
            writeln!(
                f,
                "{:<16}{:>14.4}{:>14.4}{:>14.4e}",
                c.column, c.mean[0], c.mean[1], c.max_abs_delta
            )?;
        }
        write!(f, "max_abs_delta   {:.4e}", self.max_abs_delta)
    }
}
