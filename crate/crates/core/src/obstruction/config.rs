use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fields::FieldParams;

pub const SUITES: [&str; 9] = [
    "validate",
    "tensor-identities",
    "jrm",
    "thm44",
    "prop56",
    "thm53",
    "taming",
    "s2-criterion",
    "cor47-identity",
];

pub const QUANTITIES: [&str; 4] = ["commutator-obstruction", "eta-nu", "qform-bounds", "example24-bounds"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Suite(String),
    Quantity(String),
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::Suite(s) | Target::Quantity(s) => s,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScanConfig {
    pub field: String,
    pub params: FieldParams,
    pub target: Target,
    pub samples: usize,
    pub seed: u64,
    /// Finite-difference step; the backend default when absent.
    pub step: Option<f64>,
    /// Overrides of named check tolerances.
    pub tolerances: BTreeMap<String, f64>,
    pub optimize: bool,
    pub output: Option<PathBuf>,
}

impl ScanConfig {
    pub fn suite(field: &str, suite: &str, samples: usize, seed: u64) -> Self {
        Self::new(field, Target::Suite(suite.to_string()), samples, seed)
    }

    pub fn scan(field: &str, quantity: &str, samples: usize, seed: u64) -> Self {
        Self::new(field, Target::Quantity(quantity.to_string()), samples, seed)
    }

    fn new(field: &str, target: Target, samples: usize, seed: u64) -> Self {
        Self {
            field: field.to_string(),
            params: FieldParams::default(),
            target,
            samples,
            seed,
            step: None,
            tolerances: BTreeMap::new(),
            optimize: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if let Some(step) = self.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Config(format!("step must be positive, got {step}")));
            }
        }
        for (name, &tol) in &self.tolerances {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config(format!("tolerance `{name}` must be positive, got {tol}")));
            }
        }
        let (known, kind): (&[&str], &str) = match &self.target {
            Target::Suite(_) => (&SUITES, "suite"),
            Target::Quantity(_) => (&QUANTITIES, "quantity"),
        };
        if !known.contains(&self.target.name()) {
            return Err(Error::Config(format!(
                "unknown {kind} `{}` (known: {})",
                self.target.name(),
                known.join(", ")
            )));
        }
        Ok(())
    }

    /// The tolerance for a named check, honoring overrides.
    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

/// Parses `KEY=VAL` tolerance overrides.
pub fn parse_tolerance(text: &str) -> Result<(String, f64)> {
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected KEY=VAL, got `{text}`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("empty tolerance name in `{text}`")));
    }
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("tolerance `{key}` is not a number: `{value}`")))?;
    Ok((key.to_string(), value))
}
