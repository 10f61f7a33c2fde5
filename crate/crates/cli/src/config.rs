//! Run configuration: JSON with every field optional.
//!
//! Unknown keys are rejected and every offending key is reported at once,
//! named by its dotted path (`grid.N`, `flow.ds`, ...).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use mabuchi::geodesic::SolveOptions;
use mabuchi::flow::FlowOptions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Time intervals; `null` means `M = N`.
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub eps_start: f64,
    pub eps_target: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub ds: f64,
    pub steps: usize,
    pub sample_every: usize,
    pub flow_mono_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub cat0: f64,
    pub jacobi_convexity: f64,
    pub jacobi_end: f64,
    pub derivative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// Amplitude of the seeded potentials, per experiment.
    pub amplitudes: BTreeMap<String, f64>,
    pub max_wavenumber: usize,
    pub lambdas: Vec<f64>,
    pub perturbation_scales: Vec<f64>,
    /// Newton tolerance of the Jacobi family solves.
    pub jacobi_newton_tol: f64,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoConfig {
    pub output_dir: String,
    pub dump_fields: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub grid: GridConfig,
    pub path: PathConfig,
    pub flow: FlowConfig,
    pub experiment: ExperimentConfig,
    pub io: IoConfig,
}

pub const EXPERIMENTS: [&str; 5] = ["triangle", "minimizing", "jacobi", "contract", "derivcheck"];

impl Default for Config {
    fn default() -> Self {
        let amplitudes = [
            ("triangle", 2e-3),
            ("minimizing", 1e-2),
            ("jacobi", 2e-3),
            ("contract", 1e-2),
            ("derivcheck", 1e-2),
        ];
        Config {
            grid: GridConfig { n: 32 },
            path: PathConfig {
                m: None,
                eps_start: 1.0,
                eps_target: 1e-3,
                newton_tol: 1e-9,
                max_newton: 50,
            },
            flow: FlowConfig {
                ds: 1e-5,
                steps: 490,
                sample_every: 10,
                flow_mono_tol: 1e-9,
            },
            experiment: ExperimentConfig {
                seeds: vec![7],
                amplitudes: amplitudes.iter().map(|&(k, v)| (k.to_owned(), v)).collect(),
                max_wavenumber: 1,
                lambdas: vec![0.25, 0.5, 0.75],
                perturbation_scales: vec![1e-3, 1e-2],
                jacobi_newton_tol: 1e-11,
                tolerances: Tolerances {
                    cat0: 5e-4,
                    jacobi_convexity: 1e-6,
                    jacobi_end: 1e-3,
                    derivative: 1e-2,
                },
            },
            io: IoConfig {
                output_dir: "mnpl-out".into(),
                dump_fields: false,
            },
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Read { path: String, message: String },
    Syntax(String),
    /// One entry per offending key, `"<dotted.key>: <problem>"`.
    Schema(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, message } => write!(f, "cannot read config {path}: {message}"),
            ConfigError::Syntax(m) => write!(f, "config is not valid JSON: {m}"),
            ConfigError::Schema(problems) => {
                writeln!(f, "config schema violations:")?;
                for p in problems {
                    writeln!(f, "  {p}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// A validated config together with the keys that were filled by defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Loaded {
    pub config: Config,
    pub defaults: Vec<String>,
}

pub fn load_config(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    from_value(&value)
}

/// Builds a config from parsed JSON, filling defaults and validating ranges.
pub fn from_value(value: &Value) -> Result<Loaded, ConfigError> {
    let Value::Object(root) = value else {
        return Err(ConfigError::Schema(vec!["<root>: expected an object".into()]));
    };
    let defaults_value = serde_json::to_value(Config::default()).expect("default config serializes");
    let Value::Object(default_root) = defaults_value else {
        unreachable!("config serializes to an object")
    };
    let mut problems = Vec::new();
    let mut defaulted = Vec::new();
    let merged = merge(root, &default_root, "", &mut problems, &mut defaulted);
    if !problems.is_empty() {
        return Err(ConfigError::Schema(problems));
    }
    let config: Config = serde_json::from_value(Value::Object(merged)).map_err(|e| ConfigError::Schema(vec![e.to_string()]))?;
    let range = validate(&config);
    if !range.is_empty() {
        return Err(ConfigError::Schema(range));
    }
    Ok(Loaded {
        config,
        defaults: defaulted,
    })
}

/// Overlays `given` on `defaults` key by key, recording unknown keys, type
/// errors and which keys came from the defaults.
fn merge(
    given: &Map<String, Value>,
    defaults: &Map<String, Value>,
    prefix: &str,
    problems: &mut Vec<String>,
    defaulted: &mut Vec<String>,
) -> Map<String, Value> {
    let mut out = Map::new();
    for key in given.keys().filter(|k| !defaults.contains_key(*k)) {
        if !is_open_map(prefix) {
            problems.push(format!("{prefix}{key}: unknown key"));
        }
    }
    if is_open_map(prefix) {
        // per-experiment amplitudes: names are checked, missing ones default
        for key in given.keys() {
            if !EXPERIMENTS.contains(&key.as_str()) {
                problems.push(format!("{prefix}{key}: unknown experiment (expected one of {})", EXPERIMENTS.join(", ")));
            }
        }
    }
    for (key, default) in defaults {
        let path = format!("{prefix}{key}");
        match (given.get(key), default) {
            (None, Value::Object(d)) if !is_open_map(&format!("{path}.")) => {
                out.insert(key.clone(), Value::Object(merge(&Map::new(), d, &format!("{path}."), problems, defaulted)));
            }
            (None, _) => {
                defaulted.push(path);
                out.insert(key.clone(), default.clone());
            }
            (Some(Value::Object(g)), Value::Object(d)) => {
                out.insert(key.clone(), Value::Object(merge(g, d, &format!("{path}."), problems, defaulted)));
            }
            (Some(other), Value::Object(_)) => {
                problems.push(format!("{path}: expected an object, got {}", kind(other)));
                out.insert(key.clone(), default.clone());
            }
            (Some(v), _) => {
                if let Err(e) = type_check(&path, v) {
                    problems.push(e);
                }
                out.insert(key.clone(), v.clone());
            }
        }
    }
    out
}

fn is_open_map(prefix: &str) -> bool {
    prefix == "experiment.amplitudes."
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Checks that a leaf value has the type of its field.
fn type_check(path: &str, v: &Value) -> Result<(), String> {
    fn ok<T: DeserializeOwned>(path: &str, v: &Value, what: &str) -> Result<(), String> {
        serde_json::from_value::<T>(v.clone())
            .map(|_| ())
            .map_err(|_| format!("{path}: expected {what}, got {}", kind(v)))
    }
    match path {
        "grid.N" | "path.max_newton" | "flow.steps" | "flow.sample_every" | "experiment.max_wavenumber" => {
            ok::<usize>(path, v, "a non-negative integer")
        }
        "path.M" => ok::<Option<usize>>(path, v, "a non-negative integer or null"),
        "experiment.seeds" => ok::<Vec<u64>>(path, v, "an array of non-negative integers"),
        "experiment.lambdas" | "experiment.perturbation_scales" => ok::<Vec<f64>>(path, v, "an array of numbers"),
        "io.output_dir" => ok::<String>(path, v, "a string"),
        "io.dump_fields" => ok::<bool>(path, v, "a boolean"),
        _ => ok::<f64>(path, v, "a number"),
    }
}

fn validate(c: &Config) -> Vec<String> {
    fn positive(key: &str, v: f64, p: &mut Vec<String>) {
        if !(v > 0.0 && v.is_finite()) {
            p.push(format!("{key}: must be positive, got {v}"));
        }
    }
    let mut p = Vec::new();
    if c.grid.n < mabuchi::Grid::MIN_POINTS || !c.grid.n.is_multiple_of(2) {
        p.push(format!("grid.N: must be even and at least {}, got {}", mabuchi::Grid::MIN_POINTS, c.grid.n));
    }
    if matches!(c.path.m, Some(m) if m < 2) {
        p.push("path.M: must be at least 2".into());
    }
    positive("path.eps_start", c.path.eps_start, &mut p);
    positive("path.eps_target", c.path.eps_target, &mut p);
    if c.path.eps_target > c.path.eps_start {
        p.push(format!(
            "path.eps_target: {} exceeds path.eps_start {}",
            c.path.eps_target, c.path.eps_start
        ));
    }
    positive("path.newton_tol", c.path.newton_tol, &mut p);
    if c.path.max_newton == 0 {
        p.push("path.max_newton: must be at least 1".into());
    }
    positive("flow.ds", c.flow.ds, &mut p);
    if c.flow.steps == 0 {
        p.push("flow.steps: must be at least 1".into());
    }
    if c.flow.sample_every == 0 {
        p.push("flow.sample_every: must be at least 1".into());
    }
    if !(c.flow.flow_mono_tol >= 0.0 && c.flow.flow_mono_tol.is_finite()) {
        p.push(format!("flow.flow_mono_tol: must be non-negative, got {}", c.flow.flow_mono_tol));
    }
    let e = &c.experiment;
    if e.seeds.is_empty() {
        p.push("experiment.seeds: must not be empty".into());
    }
    for (name, a) in &e.amplitudes {
        if !(*a >= 0.0 && a.is_finite()) {
            p.push(format!("experiment.amplitudes.{name}: must be non-negative, got {a}"));
        }
    }
    if e.max_wavenumber == 0 || e.max_wavenumber > c.grid.n / 4 {
        p.push(format!(
            "experiment.max_wavenumber: must lie in 1..={}, got {}",
            c.grid.n / 4,
            e.max_wavenumber
        ));
    }
    if e.lambdas.is_empty() || e.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        p.push("experiment.lambdas: must be a non-empty list of values in [0, 1]".into());
    }
    if e.perturbation_scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        p.push("experiment.perturbation_scales: values must be non-negative".into());
    }
    positive("experiment.jacobi_newton_tol", e.jacobi_newton_tol, &mut p);
    positive("experiment.tolerances.cat0", e.tolerances.cat0, &mut p);
    positive("experiment.tolerances.jacobi_convexity", e.tolerances.jacobi_convexity, &mut p);
    positive("experiment.tolerances.jacobi_end", e.tolerances.jacobi_end, &mut p);
    positive("experiment.tolerances.derivative", e.tolerances.derivative, &mut p);
    if c.io.output_dir.trim().is_empty() {
        p.push("io.output_dir: must not be empty".into());
    }
    p
}

impl Config {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            newton_tol: self.path.newton_tol,
            max_newton: self.path.max_newton,
            eps_start: self.path.eps_start,
            eps_target: self.path.eps_target,
            time_steps: Some(self.path.m.unwrap_or(self.grid.n)),
            ..SolveOptions::default()
        }
    }

    pub fn flow_options(&self) -> FlowOptions {
        FlowOptions {
            mono_tol: self.flow.flow_mono_tol,
            ..FlowOptions::new(self.flow.ds, self.flow.steps)
        }
    }

    pub fn amplitude(&self, experiment: &str) -> f64 {
        self.experiment.amplitudes.get(experiment).copied().unwrap_or_else(|| {
            Config::default().experiment.amplitudes[experiment]
        })
    }

    /// Human-readable listing of every key with its default.
    pub fn schema() -> String {
        let v = serde_json::to_value(Config::default()).expect("default config serializes");
        let mut lines = vec!["config keys (JSON, all optional; defaults shown):".to_owned()];
        fn walk(v: &Value, prefix: &str, lines: &mut Vec<String>) {
            match v {
                Value::Object(m) if prefix != "experiment.amplitudes." => {
                    for (k, v) in m {
                        walk(v, &format!("{prefix}{k}."), lines);
                    }
                }
                _ => lines.push(format!("  {} = {v}", prefix.trim_end_matches('.'))),
            }
        }
        walk(&v, "", &mut lines);
        lines.join("\n")
    }
}
