//! Pass/fail reports shared by the verification operations.

use serde::Serialize;
use std::fmt;

/// Outcome of one named property check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed margin; negative when the property is violated.
    pub worst_margin: Option<f64>,
    /// Human readable location of the worst sample.
    pub witness: Option<String>,
    pub detail: String,
}

impl Check {
    pub fn pass(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: true,
            worst_margin: None,
            witness: None,
            detail: detail.into(),
        }
    }

    pub fn fail(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: false,
            worst_margin: None,
            witness: None,
            detail: detail.into(),
        }
    }

    /// A check decided by its worst margin (`margin >= 0` passes).
    pub fn from_margin(
        name: impl Into<String>,
        margin: f64,
        witness: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Check {
            name: name.into(),
            passed: margin >= 0.0,
            worst_margin: Some(margin),
            witness: Some(witness.into()),
            detail: detail.into(),
        }
    }
}

/// A list of checks about one subject.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PropertyReport {
    pub subject: String,
    pub checks: Vec<Check>,
}

impl PropertyReport {
    pub fn new(subject: impl Into<String>) -> Self {
        PropertyReport {
            subject: subject.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.subject)?;
        for c in &self.checks {
            let status = if c.passed { "ok  " } else { "FAIL" };
            write!(f, "  [{status}] {}: {}", c.name, c.detail)?;
            if let Some(w) = &c.witness {
                write!(f, " (worst at {w})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
