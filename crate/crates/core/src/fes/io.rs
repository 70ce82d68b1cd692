//! Model files and training-data CSV.
//!
//! Models are stored as TOML with the units spelled out in the key names:
//!
//! ```toml
//! format = "fes-model/1"
//! name = "flexor"
//! fatigue_psi = 1.0
//! delay_td_s = 0.046
//!
//! [recruitment]
//! upsilon_mA = [8.0, 13.0, 18.0, 23.0, 28.0]
//! theta_deg = [15.0, 30.0]
//! r = [[0.0, 0.2, 0.5, 0.8, 1.0], [0.0, 0.2, 0.5, 0.8, 1.0]]
//!
//! [contraction]
//! theta_deg = [15.0, 30.0]
//! torque_Nm = [2.6, 3.6]
//!
//! [activation]
//! A_per_s = [[0.0, 1.0], [-32.5, -11.4]]
//! B_per_s2 = [0.0, 32.5]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActivationDynamics, ContractionMap, FesModel, RecruitmentMap, StimulationRecord, TrainingGrid};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "fes-model/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    name: String,
    fatigue_psi: f64,
    delay_td_s: f64,
    recruitment: RecruitmentTable,
    contraction: ContractionTable,
    activation: ActivationTable,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecruitmentTable {
    #[serde(rename = "upsilon_mA")]
    upsilon_ma: Vec<f64>,
    theta_deg: Vec<f64>,
    r: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractionTable {
    theta_deg: Vec<f64>,
    #[serde(rename = "torque_Nm")]
    torque_nm: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActivationTable {
    #[serde(rename = "A_per_s")]
    a: [[f64; 2]; 2],
    #[serde(rename = "B_per_s2")]
    b: [f64; 2],
}

pub fn model_to_string(model: &FesModel) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        name: model.name.clone(),
        fatigue_psi: model.fatigue_psi,
        delay_td_s: model.delay_td,
        recruitment: RecruitmentTable {
            upsilon_ma: model.recruitment.upsilon_knots().to_vec(),
            theta_deg: model.recruitment.angles().to_vec(),
            r: model.recruitment.values().to_vec(),
        },
        contraction: ContractionTable {
            theta_deg: model.contraction.angles().to_vec(),
            torque_nm: model.contraction.torques().to_vec(),
        },
        activation: ActivationTable {
            a: model.activation.a,
            b: model.activation.b,
        },
    };
    toml::to_string(&file).map_err(|e| Error::Config(format!("cannot serialize model: {e}")))
}

pub fn model_from_str(text: &str) -> Result<FesModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Config(format!("invalid model file: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Config(format!(
            "unsupported model format {:?}, expected {MODEL_FORMAT:?}",
            file.format
        )));
    }
    let recruitment = RecruitmentMap::new(
        file.recruitment.upsilon_ma,
        file.recruitment.theta_deg,
        file.recruitment.r,
    )?;
    let contraction = ContractionMap::new(file.contraction.theta_deg, file.contraction.torque_nm)?;
    FesModel::new(
        file.name,
        recruitment,
        contraction,
        ActivationDynamics {
            a: file.activation.a,
            b: file.activation.b,
        },
        file.fatigue_psi,
        file.delay_td_s,
    )
}

pub fn write_model(path: &Path, model: &FesModel) -> Result<()> {
    fs::write(path, model_to_string(model)?).map_err(|e| Error::file(path, e))
}

pub fn read_model(path: &Path) -> Result<FesModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    model_from_str(&text)
}

#[derive(Serialize, Deserialize)]
struct TrainingRow {
    muscle: String,
    #[serde(rename = "upsilon_mA")]
    upsilon_ma: f64,
    theta_deg: f64,
    t_s: f64,
    #[serde(rename = "torque_Nm")]
    torque_nm: f64,
}

/// Writes trials as `muscle,upsilon_mA,theta_deg,t_s,torque_Nm` rows.
pub fn write_training_csv(path: &Path, grids: &[TrainingGrid]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::file(path, io),
        other => Error::Config(format!("{other:?}")),
    })?;
    for g in grids {
        for r in &g.records {
            for (t, tau) in r.t.iter().zip(&r.torque) {
                w.serialize(TrainingRow {
                    muscle: g.muscle.clone(),
                    upsilon_ma: r.upsilon,
                    theta_deg: r.theta,
                    t_s: *t,
                    torque_nm: *tau,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups rows by muscle, in order of first appearance. A new trial starts
/// whenever intensity or angle changes or time does not increase.
pub fn read_training_csv(path: &Path) -> Result<Vec<TrainingGrid>> {
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_training_csv(file)
}

pub fn parse_training_csv(reader: impl std::io::Read) -> Result<Vec<TrainingGrid>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["muscle", "upsilon_mA", "theta_deg", "t_s", "torque_Nm"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.into()));
        }
    }
    let mut grids: Vec<TrainingGrid> = Vec::new();
    for (line, row) in rdr.deserialize::<TrainingRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: line + 2,
            msg: e.to_string(),
        })?;
        let gi = match grids.iter().position(|g| g.muscle == row.muscle) {
            Some(i) => i,
            None => {
                grids.push(TrainingGrid {
                    muscle: row.muscle.clone(),
                    records: Vec::new(),
                });
                grids.len() - 1
            }
        };
        let records = &mut grids[gi].records;
        let continues = records.last().is_some_and(|r| {
            r.upsilon == row.upsilon_ma && r.theta == row.theta_deg && r.t.last().is_some_and(|t| row.t_s > *t)
        });
        if !continues {
            records.push(StimulationRecord {
                upsilon: row.upsilon_ma,
                theta: row.theta_deg,
                t: Vec::new(),
                torque: Vec::new(),
            });
        }
        let r = records.last_mut().expect("pushed above");
        r.t.push(row.t_s);
        r.torque.push(row.torque_nm);
    }
    Ok(grids)
}
