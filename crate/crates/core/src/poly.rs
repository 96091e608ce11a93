//! Bivariate polynomials with exact differentiation, and the plain-text
//! monomial table format read by the CLI.
//!
//! Table format: one monomial per line as `x_deg y_deg coefficient`.
//! Lines starting with `#` and blank lines are ignored. A file may hold
//! two polynomials separated by `[f]` and `[g]` section headers; monomials
//! before any header belong to `f`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly2 {
    terms: Vec<(u32, u32, f64)>,
}

impl Poly2 {
    pub fn new(terms: Vec<(u32, u32, f64)>) -> Self {
        Self { terms }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![(0, 0, c)])
    }

    pub fn terms(&self) -> &[(u32, u32, f64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|&(a, b, _)| a + b).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, b, c)| c * x.powi(a as i32) * y.powi(b as i32))
            .sum()
    }

    pub fn d_dx(&self) -> Self {
        Self::new(
            self.terms
                .iter()
                .filter(|t| t.0 > 0)
                .map(|&(a, b, c)| (a - 1, b, c * a as f64))
                .collect(),
        )
    }

    pub fn d_dy(&self) -> Self {
        Self::new(
            self.terms
                .iter()
                .filter(|t| t.1 > 0)
                .map(|&(a, b, c)| (a, b - 1, c * b as f64))
                .collect(),
        )
    }
}

impl FromStr for Poly2 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            terms.push(parse_monomial(line, lineno + 1)?);
        }
        Ok(Self::new(terms))
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &(a, b, c) in &self.terms {
            writeln!(f, "{a} {b} {c:e}")?;
        }
        Ok(())
    }
}

fn parse_monomial(line: &str, lineno: usize) -> Result<(u32, u32, f64)> {
    let bad = || Error::Config(format!("line {lineno}: expected `x_deg y_deg coefficient`, got `{line}`"));
    let mut parts = line.split_whitespace();
    let a = parts.next().ok_or_else(bad)?.parse::<u32>().map_err(|_| bad())?;
    let b = parts.next().ok_or_else(bad)?.parse::<u32>().map_err(|_| bad())?;
    let c = parts.next().ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?;
    if parts.next().is_some() || !c.is_finite() {
        return Err(bad());
    }
    Ok((a, b, c))
}

/// Parses an `[f]` / `[g]` sectioned table. Missing sections default to
/// `f = 0` and `g = 1`.
pub fn parse_fg_table(text: &str) -> Result<(Poly2, Poly2)> {
    let mut f = Vec::new();
    let mut g = Vec::new();
    let mut seen_g = false;
    let mut target = &mut f;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[f]" => target = &mut f,
            "[g]" => {
                seen_g = true;
                target = &mut g;
            }
            _ => target.push(parse_monomial(line, lineno + 1)?),
        }
    }
    let g = if seen_g { Poly2::new(g) } else { Poly2::constant(1.0) };
    Ok((Poly2::new(f), g))
}

pub fn read_fg_table(path: &Path) -> Result<(Poly2, Poly2)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_fg_table(&text)
}
