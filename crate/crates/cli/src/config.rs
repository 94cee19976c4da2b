//! Pipeline configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! split = 0.8
//! metrics = ["mae", "mse"]
//!
//! [environment]
//! kind = "water_tank"
//!
//! [[transforms]]
//! kind = "select"
//! columns = ["V", "x"]
//!
//! [[transforms]]
//! kind = "sliding_window"
//! window = 3
//!
//! [io]
//! inputs = ["V_0", "x_0", "V_1", "x_1", "V_2"]
//! outputs = ["x_2"]
//!
//! [learner]
//! kind = "regression_tree"
//! max_depth = 5
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use cpsflow::learners::IncrementalLinear;
use cpsflow::metrics::Metric;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_split")]
    pub split: f64,
    pub metrics: Vec<String>,
    pub environment: EnvironmentSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<TransformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub io: Option<IoConfig>,
    pub learner: LearnerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

fn default_split() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Sampled trajectory of the tank under its clipped sine inflow.
    WaterTank {
        #[serde(default)]
        tank: TankParams,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// The tank driven step by step by an active learner.
    WaterTankActive {
        #[serde(default)]
        tank: TankParams,
        /// Length of the passive evaluation trajectory.
        #[serde(default = "default_eval_steps")]
        eval_steps: usize,
    },
    Csv {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
    Json {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankParams {
    #[serde(default = "default_area")]
    pub area: f64,
    #[serde(default = "default_outflow")]
    pub outflow: f64,
    #[serde(default = "default_inflow_gain")]
    pub inflow_gain: f64,
    #[serde(default = "default_period")]
    pub inflow_period: f64,
    #[serde(default = "default_level")]
    pub initial_level: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl Default for TankParams {
    fn default() -> Self {
        TankParams {
            area: default_area(),
            outflow: default_outflow(),
            inflow_gain: default_inflow_gain(),
            inflow_period: default_period(),
            initial_level: default_level(),
            dt: default_dt(),
        }
    }
}

fn default_area() -> f64 {
    5.0
}
fn default_outflow() -> f64 {
    0.5
}
fn default_inflow_gain() -> f64 {
    2.0
}
fn default_period() -> f64 {
    10.0
}
fn default_level() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.1
}
fn default_samples() -> usize {
    250
}
fn default_eval_steps() -> usize {
    250
}
fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    Select { columns: Vec<String> },
    Explode { columns: Vec<String> },
    SlidingWindow { window: usize },
    Standardize { columns: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    RegressionTree {
        #[serde(default = "default_depth")]
        max_depth: usize,
        #[serde(default = "default_leaf")]
        min_samples_leaf: usize,
    },
    Linear,
    Mean,
    IncrementalLinear {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
    ActiveLinear {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_grid")]
        grid_points: usize,
        budget: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_active_delta")]
        delta: f64,
    },
    Remote {
        address: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_depth() -> usize {
    5
}
fn default_leaf() -> usize {
    1
}
fn default_lambda() -> f64 {
    IncrementalLinear::DEFAULT_LAMBDA
}
fn default_delta() -> f64 {
    IncrementalLinear::DEFAULT_DELTA
}
fn default_active_delta() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    32
}
fn default_epsilon() -> f64 {
    0.3
}
fn default_grid() -> usize {
    11
}
fn default_timeout() -> f64 {
    30.0
}

impl LearnerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LearnerSpec::RegressionTree { .. } => "regression_tree",
            LearnerSpec::Linear => "linear",
            LearnerSpec::Mean => "mean",
            LearnerSpec::IncrementalLinear { .. } => "incremental_linear",
            LearnerSpec::ActiveLinear { .. } => "active_linear",
            LearnerSpec::Remote { .. } => "remote",
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self, LearnerSpec::ActiveLinear { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// One problem found in a configuration, located by field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

/// Parses TOML text. Syntax and type errors come back as a single
/// diagnostic naming the offending field.
pub fn parse(text: &str) -> Result<PipelineConfig, Diagnostic> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut field = e.path().to_string();
        if field == "." {
            field.clear();
        }
        let message = e.into_inner().message().trim().to_owned();
        if let Some(inner) = refine(text, &field, &message).filter(|i| !field.ends_with(i.as_str())) {
            field = if field.is_empty() { inner } else { format!("{field}.{inner}") };
        }
        Diagnostic::new(field, message)
    })
}

/// Tagged sections lose the inner field in error paths; recover it.
fn refine(text: &str, path: &str, message: &str) -> Option<String> {
    if message.starts_with("unknown variant") {
        return Some("kind".into());
    }
    if let Some(name) = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|p| message.strip_prefix(p))
        .and_then(|rest| rest.split('`').next())
    {
        return Some(name.to_owned());
    }
    let root: toml::Table = text.parse().ok()?;
    let (key, index) = match path.split_once('[') {
        Some((k, i)) => (k, Some(i.trim_end_matches(']').parse::<usize>().ok()?)),
        None => (path, None),
    };
    let mut item = root.get(key)?;
    if let Some(i) = index {
        item = item.as_array()?.get(i)?;
    }
    let table = item.as_table()?;
    match key {
        "environment" => culprit::<EnvironmentSpec>(table, message),
        "transforms" => culprit::<TransformSpec>(table, message),
        "learner" => culprit::<LearnerSpec>(table, message),
        _ => None,
    }
}

/// The field whose removal changes the deserialization error.
fn culprit<T: serde::de::DeserializeOwned>(table: &toml::Table, message: &str) -> Option<String> {
    table.keys().filter(|k| *k != "kind").find_map(|k| {
        let mut reduced = table.clone();
        reduced.remove(k);
        let changed = match T::deserialize(toml::Value::Table(reduced)) {
            Ok(_) => true,
            Err(e) => e.message().trim() != message,
        };
        changed.then(|| k.clone())
    })
}

pub fn load(path: &Path) -> Result<PipelineConfig, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    let config = parse(&text).map_err(|d| vec![d])?;
    let problems = config.validate();
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(problems)
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl PipelineConfig {
    /// Cross-field checks. An empty list means the config can run.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let active_env = matches!(self.environment, EnvironmentSpec::WaterTankActive { .. });

        if !(self.split > 0.0 && self.split < 1.0) {
            out.push(Diagnostic::new("split", format!("must lie strictly between 0 and 1, got {}", self.split)));
        }
        if self.metrics.is_empty() {
            out.push(Diagnostic::new("metrics", "at least one metric is required"));
        }
        for (i, name) in self.metrics.iter().enumerate() {
            if Metric::from_name(name).is_err() {
                out.push(Diagnostic::new(
                    format!("metrics[{i}]"),
                    format!("unknown metric `{name}`, expected one of {}", Metric::NAMES.join(", ")),
                ));
            } else if self.metrics[..i].contains(name) {
                out.push(Diagnostic::new(format!("metrics[{i}]"), format!("metric `{name}` listed twice")));
            }
        }

        match &self.environment {
            EnvironmentSpec::WaterTank { tank, samples } => {
                check_tank(tank, &mut out);
                if *samples < 2 {
                    out.push(Diagnostic::new("environment.samples", "need at least 2 samples"));
                }
            }
            EnvironmentSpec::WaterTankActive { tank, eval_steps } => {
                check_tank(tank, &mut out);
                if *eval_steps == 0 {
                    out.push(Diagnostic::new("environment.eval_steps", "must be at least 1"));
                }
            }
            EnvironmentSpec::Csv { delimiter, .. } => {
                if !delimiter.is_ascii() {
                    out.push(Diagnostic::new("environment.delimiter", "must be a single ASCII character"));
                }
            }
            EnvironmentSpec::Json { .. } => {}
        }

        for (i, t) in self.transforms.iter().enumerate() {
            match t {
                TransformSpec::SlidingWindow { window } if *window == 0 => {
                    out.push(Diagnostic::new(format!("transforms[{i}].window"), "must be at least 1"));
                }
                TransformSpec::Select { columns }
                | TransformSpec::Explode { columns }
                | TransformSpec::Standardize { columns }
                    if columns.is_empty() =>
                {
                    out.push(Diagnostic::new(format!("transforms[{i}].columns"), "must not be empty"));
                }
                _ => {}
            }
        }
        if active_env && !self.transforms.is_empty() {
            out.push(Diagnostic::new("transforms", "not supported with an active environment"));
        }

        match &self.io {
            None if !active_env => out.push(Diagnostic::new("io", "missing io section")),
            None => {}
            Some(io) => {
                if io.inputs.is_empty() {
                    out.push(Diagnostic::new("io.inputs", "must not be empty"));
                }
                if io.outputs.len() != 1 {
                    out.push(Diagnostic::new("io.outputs", "exactly one output column is supported"));
                }
                for (i, c) in io.inputs.iter().enumerate() {
                    if io.outputs.contains(c) {
                        out.push(Diagnostic::new(format!("io.inputs[{i}]"), format!("`{c}` is also an output")));
                    }
                }
                if active_env && (io.inputs != ["x", "V"] || io.outputs != ["x_next"]) {
                    out.push(Diagnostic::new(
                        "io",
                        "the active tank learns x_next from inputs [x, V]; omit io or state exactly that",
                    ));
                }
            }
        }

        match &self.learner {
            LearnerSpec::RegressionTree { min_samples_leaf, .. } => {
                if *min_samples_leaf == 0 {
                    out.push(Diagnostic::new("learner.min_samples_leaf", "must be at least 1"));
                }
            }
            LearnerSpec::IncrementalLinear {
                lambda,
                delta,
                batch_size,
            } => {
                check_rls(*lambda, *delta, &mut out);
                if *batch_size == 0 {
                    out.push(Diagnostic::new("learner.batch_size", "must be at least 1"));
                }
            }
            LearnerSpec::ActiveLinear {
                epsilon,
                grid_points,
                budget,
                lambda,
                delta,
            } => {
                check_rls(*lambda, *delta, &mut out);
                if !(0.0..=1.0).contains(epsilon) {
                    out.push(Diagnostic::new("learner.epsilon", "must lie in [0, 1]"));
                }
                if *grid_points == 0 {
                    out.push(Diagnostic::new("learner.grid_points", "must be at least 1"));
                }
                if *budget == 0 {
                    out.push(Diagnostic::new("learner.budget", "must be at least 1"));
                }
                if self.seed.is_none() {
                    out.push(Diagnostic::new("seed", "required by the stochastic active_linear learner"));
                }
            }
            LearnerSpec::Remote { address, timeout_secs } => {
                if address.is_empty() {
                    out.push(Diagnostic::new("learner.address", "must not be empty"));
                }
                if !positive(*timeout_secs) {
                    out.push(Diagnostic::new("learner.timeout_secs", "must be positive"));
                }
            }
            LearnerSpec::Linear | LearnerSpec::Mean => {}
        }
        if self.learner.is_active() != active_env {
            out.push(Diagnostic::new(
                "learner.kind",
                if active_env {
                    "the water_tank_active environment needs the active_linear learner"
                } else {
                    "active_linear needs the water_tank_active environment"
                },
            ));
        }
        out
    }
}

fn check_tank(tank: &TankParams, out: &mut Vec<Diagnostic>) {
    for (name, v) in [
        ("area", tank.area),
        ("inflow_period", tank.inflow_period),
        ("dt", tank.dt),
    ] {
        if !positive(v) {
            out.push(Diagnostic::new(format!("environment.tank.{name}"), "must be positive"));
        }
    }
    for (name, v) in [("outflow", tank.outflow), ("inflow_gain", tank.inflow_gain)] {
        if !v.is_finite() {
            out.push(Diagnostic::new(format!("environment.tank.{name}"), "must be finite"));
        }
    }
    if !(tank.initial_level >= 0.0 && tank.initial_level.is_finite()) {
        out.push(Diagnostic::new("environment.tank.initial_level", "must be non-negative"));
    }
}

fn check_rls(lambda: f64, delta: f64, out: &mut Vec<Diagnostic>) {
    if !(lambda > 0.0 && lambda <= 1.0) {
        out.push(Diagnostic::new("learner.lambda", "must lie in (0, 1]"));
    }
    if !positive(delta) {
        out.push(Diagnostic::new("learner.delta", "must be positive"));
    }
}

/// Learner choices of the built-in water tank scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScenarioLearner {
    Tree,
    Linear,
    IncrementalLinear,
}

/// The one-tank case study: 250 samples, window of 3, predict `x_2` from
/// the two preceding samples and the current inflow.
pub fn watertank(learner: ScenarioLearner, max_depth: usize) -> PipelineConfig {
    let learner = match learner {
        ScenarioLearner::Tree => LearnerSpec::RegressionTree {
            max_depth,
            min_samples_leaf: default_leaf(),
        },
        ScenarioLearner::Linear => LearnerSpec::Linear,
        ScenarioLearner::IncrementalLinear => LearnerSpec::IncrementalLinear {
            lambda: default_lambda(),
            delta: default_delta(),
            batch_size: default_batch(),
        },
    };
    PipelineConfig {
        seed: None,
        split: 0.8,
        metrics: vec!["mae".into(), "mse".into()],
        environment: EnvironmentSpec::WaterTank {
            tank: TankParams::default(),
            samples: 250,
        },
        transforms: vec![
            TransformSpec::Select {
                columns: vec!["V".into(), "x".into()],
            },
            TransformSpec::SlidingWindow { window: 3 },
        ],
        io: Some(IoConfig {
            inputs: ["V_0", "x_0", "V_1", "x_1", "V_2"].map(String::from).to_vec(),
            outputs: vec!["x_2".into()],
        }),
        learner,
        output: None,
    }
}
