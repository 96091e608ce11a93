//! Machine-readable scan reports.
//!
//! Reports are JSON documents. Every floating-point number is written with
//! 17 significant digits in scientific notation so that a parse/emit
//! round trip is exact; non-finite values are written as `null` and read
//! back as NaN.

use std::path::Path;

use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub suite: String,
    pub field: String,
    pub environment: Environment,
    pub checks: Vec<CheckRecord>,
    pub extrema: Vec<Extremum>,
    /// Named scalar outputs that are reported but not checked.
    #[serde(default)]
    pub values: Vec<NamedValue>,
}

impl ScanReport {
    pub fn new(suite: impl Into<String>, field: impl Into<String>, environment: Environment) -> Self {
        Self {
            suite: suite.into(),
            field: field.into(),
            environment,
            checks: Vec::new(),
            extrema: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn extremum(&self, quantity: &str) -> Option<&Extremum> {
        self.extrema.iter().find(|e| e.quantity == quantity)
    }

    pub fn value(&self, name: &str) -> Option<&Value> {
        self.values.iter().find(|v| v.name == name).map(|v| &v.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The report with the wall-clock time zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.environment.wall_time_s = 0.0;
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    #[serde(with = "num")]
    pub step: f64,
    pub samples: usize,
    #[serde(with = "num")]
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    #[serde(with = "num")]
    pub max_residual: f64,
    #[serde(with = "num")]
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// `pass` is `max_residual <= tolerance`; NaN never passes.
    pub fn new(name: impl Into<String>, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_residual,
            tolerance,
            pass: max_residual <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(with = "num_vec")]
    pub point: Vec<f64>,
    #[serde(with = "num_vec")]
    pub direction: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub quantity: String,
    #[serde(with = "num")]
    pub max: f64,
    pub argmax: Witness,
    #[serde(with = "num")]
    pub min: f64,
    pub argmin: Witness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Number(f64),
    Flag(bool),
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Value::Number(x) => num::serialize(x, s),
            Value::Flag(b) => s.serialize_bool(*b),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Bool(b) => Ok(Value::Flag(b)),
            serde_json::Value::Null => Ok(Value::Number(f64::NAN)),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Value::Number)
                .ok_or_else(|| serde::de::Error::custom("number out of range")),
            other => Err(serde::de::Error::custom(format!("expected number or boolean, got {other}"))),
        }
    }
}

fn raw(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { format!("{x:.16e}") } else { "null".to_string() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

mod num {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        raw(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

mod num_vec {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for &x in xs {
            seq.serialize_element(&raw(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|x| x.unwrap_or(f64::NAN))
            .collect())
    }
}

pub fn emit_report(report: &ScanReport, path: &Path) -> Result<()> {
    let text = report.to_json()?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_report(path: &Path) -> Result<ScanReport> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScanReport::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert_eq, proptest};

    fn env() -> Environment {
        Environment {
            seed: 42,
            step: 1e-3,
            samples: 10,
            wall_time_s: 0.25,
        }
    }

    fn sample() -> ScanReport {
        let mut r = ScanReport::new("thm44", "octonionic-s6", env());
        r.checks.push(CheckRecord::new("fd_vs_closed", 1.234_567_890_123_456_7e-11, 1e-5));
        r.checks.push(CheckRecord::new("bound_violated", 0.1 + 0.2, -1e-12));
        r.extrema.push(Extremum {
            quantity: "commutator-obstruction".into(),
            max: -3.3e-13,
            argmax: Witness {
                point: vec![1.0 / 3.0, -2.0 / 7.0],
                direction: vec![0.1, f64::MIN_POSITIVE],
            },
            min: -1.0,
            argmin: Witness {
                point: vec![0.0, 1.0],
                direction: vec![1.0, 0.0],
            },
        });
        r.values.push(NamedValue {
            name: "pullback_value".into(),
            value: Value::Number(0.5),
        });
        r.values.push(NamedValue {
            name: "degenerate".into(),
            value: Value::Flag(false),
        });
        r
    }

    #[test]
    fn empty_report_is_valid_json() {
        let r = ScanReport::new("validate", "standard-s2", env());
        let text = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["checks"], serde_json::json!([]));
        for key in ["suite", "field", "environment", "checks", "extrema"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let r = sample();
        assert_eq!(ScanReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn numbers_carry_seventeen_digits() {
        let text = sample().to_json().unwrap();
        assert!(text.contains("\"max_residual\": 1.2345678901234567e-11"), "{text}");
        assert!(text.contains("\"tolerance\": 1.0000000000000001e-5"));
        assert!(text.contains("\"max\": -3.3000000000000001e-13"));
    }

    #[test]
    fn pass_flags_are_recomputable() {
        let text = sample().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for c in v["checks"].as_array().unwrap() {
            let recomputed = c["max_residual"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap();
            assert_eq!(c["pass"].as_bool().unwrap(), recomputed);
        }
    }

    #[test]
    fn nan_becomes_null() {
        let mut r = ScanReport::new("x", "y", env());
        r.checks.push(CheckRecord::new("broken", f64::NAN, 1.0));
        assert!(!r.checks[0].pass);
        let text = r.to_json().unwrap();
        assert!(text.contains("\"max_residual\": null"));
        let back = ScanReport::from_json(&text).unwrap();
        assert!(back.checks[0].max_residual.is_nan());
    }

    proptest! {
        #[test]
        fn any_finite_value_round_trips(
            residual in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
            tol in prop::num::f64::POSITIVE,
            point in prop::collection::vec(prop::num::f64::NORMAL, 0..8),
        ) {
            let mut r = ScanReport::new("s", "f", env());
            r.checks.push(CheckRecord::new("c", residual, tol));
            r.extrema.push(Extremum {
                quantity: "q".into(),
                max: residual,
                argmax: Witness { point: point.clone(), direction: point.clone() },
                min: tol,
                argmin: Witness { point: Vec::new(), direction: point },
            });
            let back = ScanReport::from_json(&r.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.checks[0].max_residual.to_bits(), residual.to_bits());
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(back.checks[0].pass, back.checks[0].max_residual <= back.checks[0].tolerance);
        }
    }

    #[test]
    fn io_errors_name_the_path() {
        let err = emit_report(&sample(), Path::new("/nonexistent-dir/report.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/report.json"));
    }
}
