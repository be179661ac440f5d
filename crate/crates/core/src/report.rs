//! Pass/fail records shared by the verification routines and the CLI.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Numeric residual; for exact checks, the number of nonzero terms left.
    pub residual: Option<f64>,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, residual: Option<f64>) -> Self {
        Self { name: name.into(), pass, residual }
    }

    /// Passes iff `residual <= tol` (NaN fails).
    pub fn within(name: impl Into<String>, residual: f64, tol: f64) -> Self {
        Self::new(name, residual <= tol, Some(residual))
    }

    /// Exact check: passes iff `nonzero_terms == 0`.
    pub fn exact(name: impl Into<String>, nonzero_terms: usize) -> Self {
        Self::new(name, nonzero_terms == 0, Some(nonzero_terms as f64))
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self::new(name, pass, None)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    /// Prefixes every check name with `prefix/`.
    pub fn prefixed(mut self, prefix: &str) -> Self {
        for c in &mut self.checks {
            c.name = format!("{prefix}/{}", c.name);
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().filter_map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
