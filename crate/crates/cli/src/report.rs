//! Run reports (`swlp-report-v1`): `summary.json` plus a flat `records.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::HarnessError;

pub const REPORT_SCHEMA: &str = "swlp-report-v1";

/// Acceptance band for a recorded value. Non-finite values never pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tolerance {
    Max(f64),
    Min(f64),
    Range([f64; 2]),
}

impl Tolerance {
    pub fn admits(&self, v: f64) -> bool {
        v.is_finite()
            && match *self {
                Tolerance::Max(hi) => v <= hi,
                Tolerance::Min(lo) => v >= lo,
                Tolerance::Range([lo, hi]) => lo <= v && v <= hi,
            }
    }

    fn bounds(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            Tolerance::Max(hi) => (None, Some(hi)),
            Tolerance::Min(lo) => (Some(lo), None),
            Tolerance::Range([lo, hi]) => (Some(lo), Some(hi)),
        }
    }
}

fn ser_value<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_value<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub suite: String,
    pub name: String,
    #[serde(serialize_with = "ser_value", deserialize_with = "de_value")]
    pub value: f64,
    /// `None` when not applicable (single path, deterministic quantity).
    pub sem: Option<f64>,
    pub tolerance: Tolerance,
    pub pass: bool,
    /// Seconds spent in the suite that produced the record.
    pub wall_time: f64,
}

impl Record {
    pub fn new(suite: &str, name: impl Into<String>, value: f64, sem: Option<f64>, tolerance: Tolerance) -> Self {
        Self {
            suite: suite.to_string(),
            name: name.into(),
            value,
            sem: sem.filter(|s| s.is_finite()),
            pass: tolerance.admits(value),
            tolerance,
            wall_time: 0.0,
        }
    }

    /// Re-evaluates `pass` from `value` and `tolerance`.
    pub fn recheck(&self) -> bool {
        self.tolerance.admits(self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub command: String,
    pub instance: String,
    pub environment: Environment,
    pub records: Vec<Record>,
    pub pass: bool,
}

impl RunReport {
    pub fn new(command: &str, instance: &str, environment: Environment) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            command: command.to_string(),
            instance: instance.to_string(),
            environment,
            records: Vec::new(),
            pass: true,
        }
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = Record>) {
        for r in records {
            self.pass &= r.pass;
            self.records.push(r);
        }
    }

    pub fn record(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// Writes `summary.json` and `records.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        fs::write(dir.join("summary.json"), json + "\n")?;
        let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
        w.write_record(["suite", "name", "value", "sem", "min", "max", "pass"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.records {
            let (lo, hi) = r.tolerance.bounds();
            w.write_record([
                r.suite.clone(),
                r.name.clone(),
                r.value.to_string(),
                opt(r.sem),
                opt(lo),
                opt(hi),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
