//! Structured experiment output with an explicit error budget.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geodesic::SolveOptions;

/// `{"experiment", "inputs", "quantities", "budget", "margin", "pass"}`.
///
/// A check passes when `margin ≥ −budget`. Keys are kept sorted so the JSON
/// text is stable for identical inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub inputs: BTreeMap<String, Value>,
    pub quantities: BTreeMap<String, Value>,
    pub budget: f64,
    pub margin: f64,
    pub pass: bool,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>) -> Self {
        ExperimentReport {
            experiment: experiment.into(),
            inputs: BTreeMap::new(),
            quantities: BTreeMap::new(),
            budget: 0.0,
            margin: 0.0,
            pass: false,
        }
    }

    pub fn input(mut self, key: &str, value: impl Serialize) -> Self {
        self.inputs.insert(key.to_owned(), to_value(value));
        self
    }

    pub fn quantity(mut self, key: &str, value: impl Serialize) -> Self {
        self.quantities.insert(key.to_owned(), to_value(value));
        self
    }

    /// Records solver settings under `inputs`.
    pub fn solver_inputs(self, opts: &SolveOptions, n: usize) -> Self {
        let m = opts.time_steps.unwrap_or(n);
        self.input("N", n)
            .input("M", m)
            .input("eps_start", opts.eps_start)
            .input("eps_target", opts.eps_target)
            .input("newton_tol", opts.newton_tol)
    }

    /// Sets margin and budget and decides `pass`.
    pub fn finish(mut self, margin: f64, budget: f64) -> Self {
        self.margin = margin;
        self.budget = budget;
        self.pass = margin.is_finite() && budget.is_finite() && margin >= -budget;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}

/// Non-finite floats become JSON `null` instead of failing.
fn to_value(value: impl Serialize) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_rule_and_stable_shape() {
        let r = ExperimentReport::new("demo")
            .input("seed", 7)
            .input("N", 32)
            .quantity("values", [1.0, 2.0])
            .finish(-1e-4, 2e-4);
        assert!(r.pass);
        let text = r.to_json();
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(text.find("\"N\"").unwrap() < text.find("\"seed\"").unwrap());
        assert!(!ExperimentReport::new("x").finish(-3.0, 2.0).pass);
        assert!(!ExperimentReport::new("x").finish(f64::NAN, 2.0).pass);
    }
}
