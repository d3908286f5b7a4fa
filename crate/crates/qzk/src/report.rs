//! Versioned JSON reports.

use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA: &str = "qzk-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// Counts toward the exit status.
    Asserted,
    /// Reported only.
    Exploratory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub kind: CheckKind,
    pub passed: bool,
    pub value: f64,
    /// Human-readable condition, e.g. "<= 1e-9".
    pub condition: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), kind: CheckKind::Asserted, passed: value <= limit, value, condition: format!("<= {limit:e}") }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), kind: CheckKind::Asserted, passed: value >= limit, value, condition: format!(">= {limit:e}") }
    }

    /// Passes when `holds`; `value` is whatever count or measure backs it.
    pub fn holds(name: impl Into<String>, holds: bool, value: f64, condition: impl Into<String>) -> Self {
        Self { name: name.into(), kind: CheckKind::Asserted, passed: holds, value, condition: condition.into() }
    }

    pub fn exploratory(mut self) -> Self {
        self.kind = CheckKind::Exploratory;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub scenario: String,
    pub params: Value,
    pub seeds: Vec<u64>,
    pub metrics: Map<String, Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub wall_time_s: f64,
}

impl Report {
    pub fn new(scenario: &str, params: Value) -> Self {
        Self {
            schema: SCHEMA,
            scenario: scenario.to_owned(),
            params,
            seeds: Vec::new(),
            metrics: Map::new(),
            checks: Vec::new(),
            passed: true,
            wall_time_s: 0.0,
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_owned(), serde_json::to_value(value).expect("metrics serialize"));
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn find(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Checks whose name starts with `prefix`.
    pub fn matching<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.checks.iter().filter(move |c| c.name.starts_with(prefix))
    }

    pub fn finish(&mut self) {
        self.passed = self.checks.iter().filter(|c| c.kind == CheckKind::Asserted).all(|c| c.passed);
    }

    /// Everything except the wall time, for reproducibility comparisons.
    pub fn metrics_json(&self) -> String {
        serde_json::to_string(&(&self.params, &self.seeds, &self.metrics, &self.checks)).expect("report serializes")
    }
}
