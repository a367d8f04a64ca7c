//! Named pass/fail checks with margins.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable to this configuration; counts as passing.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    /// Distance to the limit, positive when satisfied.
    pub margin: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name.into(), value, Relation::AtMost, limit)
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self::new(name.into(), value, Relation::AtLeast, limit)
    }

    fn new(name: String, value: f64, relation: Relation, limit: f64) -> Self {
        let margin = match relation {
            Relation::AtMost => limit - value,
            Relation::AtLeast => value - limit,
        };
        // NaN fails.
        let status = if margin >= 0.0 { Status::Pass } else { Status::Fail };
        Self { name, status, value, relation, limit, margin, note: String::new() }
    }

    /// Boolean outcome with no natural scale.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn skipped(mut self, note: impl Into<String>) -> Self {
        self.status = Status::Skipped;
        self.note = note.into();
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    /// One human-readable line.
    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let rel = match self.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        let mut s = format!("{tag} {}: {:.6e} {rel} {:.6e}", self.name, self.value, self.limit);
        if !self.note.is_empty() {
            s.push_str(&format!(" ({})", self.note));
        }
        s
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(Check::passed)
}

pub fn failing_names(checks: &[Check]) -> Vec<&str> {
    checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect()
}
