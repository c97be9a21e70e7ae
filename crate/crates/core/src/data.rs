//! Censored survival datasets: the subject model, CSV ingestion and the
//! advisory overlap report.
//!
//! Internally `censored == true` means the subject dropped out before the
//! event (the observed time is the censoring time). CSV files may use either
//! that convention or the opposite `event` convention; the schema must say
//! which.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::Matrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("missing cell at row {row}, column `{column}`")]
    MissingCell { row: usize, column: String },
    #[error("row {row}: observed time {value} is not positive")]
    NonPositiveTime { row: usize, value: f64 },
    #[error("row {row}: indicator `{column}` has value {value}, expected 0 or 1")]
    IndicatorOutOfRange { row: usize, column: String, value: f64 },
    #[error("row {row}: treatment {value} is not a non-negative integer arm code")]
    InvalidArm { row: usize, value: f64 },
    #[error("row {row}: observed time {value} exceeds t_max = {t_max}")]
    TimeAboveMax { row: usize, value: f64, t_max: f64 },
    #[error("t_max must be positive, got {0}")]
    InvalidTMax(f64),
    #[error("dataset has no subjects")]
    EmptyDataset,
    #[error("subject {row} has {got} covariates, expected {expected}")]
    DimensionMismatch { row: usize, expected: usize, got: usize },
}

/// A discrete treatment arm code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Arm(pub u32);

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentMode {
    #[default]
    Discrete,
    Continuous,
}

/// One right-censored observation `(x, a, t̃, δ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub x: Vec<f64>,
    /// Arm code in discrete mode, dose in continuous mode.
    pub treatment: f64,
    /// Observed time `min(T, C)`.
    pub time: f64,
    pub censored: bool,
}

impl Subject {
    /// `δ` as 0/1.
    pub fn delta(&self) -> u8 {
        u8::from(self.censored)
    }

    /// Arm code; only meaningful in discrete mode.
    pub fn arm(&self) -> Arm {
        Arm(self.treatment as u32)
    }
}

/// A validated, immutable collection of subjects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    subjects: Vec<Subject>,
    covariate_names: Vec<String>,
    t_max: f64,
    arms: Vec<Arm>,
    mode: TreatmentMode,
}

impl Dataset {
    /// Validates and builds a dataset. When `t_max` is `None` it defaults to
    /// the largest observed time (with a warning).
    pub fn new(
        subjects: Vec<Subject>,
        covariate_names: Vec<String>,
        t_max: Option<f64>,
        mode: TreatmentMode,
    ) -> Result<Self, DataError> {
        if subjects.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let p = covariate_names.len();
        let mut max_time = 0.0_f64;
        for (i, s) in subjects.iter().enumerate() {
            let row = i + 1;
            if s.x.len() != p {
                return Err(DataError::DimensionMismatch { row, expected: p, got: s.x.len() });
            }
            if !(s.time > 0.0) || !s.time.is_finite() {
                return Err(DataError::NonPositiveTime { row, value: s.time });
            }
            if mode == TreatmentMode::Discrete
                && (s.treatment < 0.0 || s.treatment.fract() != 0.0 || !s.treatment.is_finite())
            {
                return Err(DataError::InvalidArm { row, value: s.treatment });
            }
            max_time = max_time.max(s.time);
        }
        let t_max = match t_max {
            Some(t) => {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(DataError::InvalidTMax(t));
                }
                if let Some((i, s)) = subjects.iter().enumerate().find(|(_, s)| s.time > t) {
                    return Err(DataError::TimeAboveMax { row: i + 1, value: s.time, t_max: t });
                }
                t
            }
            None => {
                warn!("t_max not supplied; defaulting to the largest observed time {max_time}");
                max_time
            }
        };
        let arms = match mode {
            TreatmentMode::Discrete => {
                let set: BTreeSet<Arm> = subjects.iter().map(Subject::arm).collect();
                set.into_iter().collect()
            }
            TreatmentMode::Continuous => Vec::new(),
        };
        Ok(Self { subjects, covariate_names, t_max, arms, mode })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Sorted distinct arm codes (empty in continuous mode).
    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn mode(&self) -> TreatmentMode {
        self.mode
    }

    /// Covariates as an `n × p` matrix.
    pub fn covariates(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len() * self.dim());
        for s in &self.subjects {
            data.extend_from_slice(&s.x);
        }
        Matrix::new(data, self.len(), self.dim())
    }

    /// A new dataset holding the listed rows (repetition allowed), keeping
    /// `t_max` and the treatment mode.
    pub fn select(&self, rows: &[usize]) -> Result<Self, DataError> {
        let subjects = rows.iter().map(|&i| self.subjects[i].clone()).collect();
        Self::new(subjects, self.covariate_names.clone(), Some(self.t_max), self.mode)
    }

    /// Same data with a different `t_max`.
    pub fn with_t_max(&self, t_max: f64) -> Result<Self, DataError> {
        Self::new(self.subjects.clone(), self.covariate_names.clone(), Some(t_max), self.mode)
    }
}

/// Which way the status column is coded in a CSV file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StatusConvention {
    /// 1 = censored (dropout before the event).
    #[default]
    Censored,
    /// 1 = event observed; converted with `δ = 1 − event`.
    Event,
}

/// Column-role mapping for CSV ingestion. Every column not named here is a
/// covariate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub arm_col: String,
    pub time_col: String,
    pub status_col: String,
    pub convention: StatusConvention,
    pub id_col: Option<String>,
    pub t_max: Option<f64>,
    pub mode: TreatmentMode,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            arm_col: "a".into(),
            time_col: "t_obs".into(),
            status_col: "censored".into(),
            convention: StatusConvention::Censored,
            id_col: None,
            t_max: None,
            mode: TreatmentMode::Discrete,
        }
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64, DataError> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(DataError::MissingCell { row, column: column.to_string() });
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(DataError::NonNumericCell { row, column: column.to_string(), value: s.to_string() }),
    }
}

/// Reads a CSV file (UTF-8, header row, `,` delimiter) into a validated
/// dataset. Rows are reported 1-based, counting data rows only.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find =
        |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| DataError::MissingColumn(name.to_string()));
    let arm_idx = find(&schema.arm_col)?;
    let time_idx = find(&schema.time_col)?;
    let status_idx = find(&schema.status_col)?;
    let id_idx = schema.id_col.as_deref().map(find).transpose()?;
    let reserved = [Some(arm_idx), Some(time_idx), Some(status_idx), id_idx];
    let cov_idx: Vec<usize> = (0..headers.len()).filter(|i| !reserved.contains(&Some(*i))).collect();
    let covariate_names: Vec<String> = cov_idx.iter().map(|&i| headers[i].clone()).collect();

    let mut subjects = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 1;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let treatment = parse_cell(cell(arm_idx), row, &headers[arm_idx])?;
        let time = parse_cell(cell(time_idx), row, &headers[time_idx])?;
        let status = parse_cell(cell(status_idx), row, &headers[status_idx])?;
        if status != 0.0 && status != 1.0 {
            return Err(DataError::IndicatorOutOfRange { row, column: headers[status_idx].clone(), value: status });
        }
        if !(time > 0.0) {
            return Err(DataError::NonPositiveTime { row, value: time });
        }
        let censored = match schema.convention {
            StatusConvention::Censored => status == 1.0,
            StatusConvention::Event => status == 0.0,
        };
        let x = cov_idx.iter().map(|&i| parse_cell(cell(i), row, &headers[i])).collect::<Result<Vec<_>, _>>()?;
        let id = match id_idx {
            Some(i) => cell(i).trim().to_string(),
            None => (row - 1).to_string(),
        };
        subjects.push(Subject { id, x, treatment, time, censored });
    }
    Dataset::new(subjects, covariate_names, schema.t_max, schema.mode)
}

/// Writes a dataset back out using the schema's column names and status
/// convention. Covariates come first, then id (if mapped), arm, time and status.
pub fn save_csv(d: &Dataset, path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = d.covariate_names().to_vec();
    if let Some(id) = &schema.id_col {
        header.push(id.clone());
    }
    header.extend([schema.arm_col.clone(), schema.time_col.clone(), schema.status_col.clone()]);
    w.write_record(&header)?;
    for s in d.subjects() {
        let mut rec: Vec<String> = s.x.iter().map(|v| v.to_string()).collect();
        if schema.id_col.is_some() {
            rec.push(s.id.clone());
        }
        let status = match schema.convention {
            StatusConvention::Censored => s.delta(),
            StatusConvention::Event => 1 - s.delta(),
        };
        rec.push(s.treatment.to_string());
        rec.push(s.time.to_string());
        rec.push(status.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmCounts {
    pub arm: Arm,
    pub n: usize,
    pub censored: usize,
    pub uncensored: usize,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OverlapWarning {
    /// No uncensored subject in this arm: ξ ≈ 1, censoring overlap fails.
    CensoringOverlap { arm: Arm },
    /// Arm frequency below the treatment-overlap threshold.
    TreatmentOverlap { arm: Arm, frequency: f64 },
}

impl fmt::Display for OverlapWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverlapWarning::CensoringOverlap { arm } => {
                write!(f, "arm {arm}: no uncensored subjects (censoring overlap violated)")
            }
            OverlapWarning::TreatmentOverlap { arm, frequency } => {
                write!(f, "arm {arm}: frequency {frequency:.4} below treatment-overlap threshold")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub per_arm: Vec<ArmCounts>,
    pub warnings: Vec<OverlapWarning>,
}

/// Per-arm censoring counts plus advisory overlap warnings. Never fails.
pub fn validate_overlap(d: &Dataset, epsilon: f64) -> OverlapReport {
    let mut counts: BTreeMap<Arm, (usize, usize)> = BTreeMap::new();
    for s in d.subjects() {
        let e = counts.entry(s.arm()).or_default();
        if s.censored {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let n = d.len() as f64;
    let mut per_arm = Vec::new();
    let mut warnings = Vec::new();
    for (arm, (censored, uncensored)) in counts {
        let total = censored + uncensored;
        let frequency = total as f64 / n;
        if uncensored == 0 {
            warnings.push(OverlapWarning::CensoringOverlap { arm });
        }
        if frequency < epsilon {
            warnings.push(OverlapWarning::TreatmentOverlap { arm, frequency });
        }
        per_arm.push(ArmCounts { arm, n: total, censored, uncensored, frequency });
    }
    OverlapReport { per_arm, warnings }
}
