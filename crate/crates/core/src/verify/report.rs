use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{CheckSettings, EnvelopeSettings, GridSettings, Tolerances};
use crate::error::{Error, Result};
use crate::models::Potential;
use crate::verify::grid::{Grid1D, GridFunction};

/// One pass/fail comparison of a measured number against a tolerance.
///
/// Ordinary checks pass when `residual_norm < tolerance`. Controls pass when
/// `residual_norm > tolerance`: they confirm that the harness detects a
/// deliberately wrong input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub family: String,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub control: bool,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl Check {
    pub fn below(name: &str, family: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            family: family.into(),
            residual_norm: value,
            tolerance,
            passed: value.is_finite() && value < tolerance,
            control: false,
            details: serde_json::Value::Null,
        }
    }

    pub fn above(name: &str, family: &str, value: f64, tolerance: f64) -> Self {
        Check {
            passed: value.is_finite() && value > tolerance,
            control: true,
            ..Check::below(name, family, value, tolerance)
        }
    }

    /// A check that could not be evaluated; the error becomes the details.
    pub fn failed(name: &str, family: &str, tolerance: f64, err: &Error) -> Self {
        Check {
            residual_norm: f64::NAN,
            passed: false,
            details: serde_json::json!({ "error": err.to_string() }),
            ..Check::below(name, family, f64::NAN, tolerance)
        }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }
}

/// Settings a report was produced with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub envelope: EnvelopeSettings,
    pub grid: GridSettings,
    pub tolerances: Tolerances,
    pub checks: CheckSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub environment: Environment,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// One line per check, for terminals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let rel = if c.control { ">" } else { "<" };
            let _ = writeln!(
                out,
                "{status}  {:<24} {:<44} {:.3e} {rel} {:.1e}",
                c.name, c.family, c.residual_norm, c.tolerance
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), failed);
        out
    }
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

/// Grid function as CSV with header `x,t,re,im`.
pub fn grid_function_csv(f: &GridFunction) -> String {
    let g = &f.grid;
    let slices: Vec<(f64, Vec<Complex64>)> = (0..g.nt).map(|j| (g.t(j), f.row(j).to_vec())).collect();
    slices_csv(&g.xs(), &slices)
}

/// Time slices on common nodes as CSV with header `x,t,re,im`.
pub fn slices_csv(xs: &[f64], slices: &[(f64, Vec<Complex64>)]) -> String {
    let mut out = String::from("x,t,re,im\n");
    for (t, row) in slices {
        for (x, z) in xs.iter().zip(row) {
            let _ = writeln!(out, "{},{},{},{}", num(*x), num(*t), num(z.re), num(z.im));
        }
    }
    out
}

/// A potential sampled on a grid as CSV with header `x,t,V`.
pub fn potential_csv(v: &dyn Potential, grid: &Grid1D) -> Result<String> {
    let mut out = String::from("x,t,V\n");
    let xs = grid.xs();
    for t in grid.ts() {
        for (x, val) in xs.iter().zip(v.row(&xs, t)?) {
            let _ = writeln!(out, "{},{},{}", num(*x), num(t), num(val));
        }
    }
    Ok(out)
}
