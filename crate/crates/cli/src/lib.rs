//! Runs declarative pipeline configurations and the built-in water tank
//! scenario.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use cpsflow::data::{self, CsvOptions, Dataset};
use cpsflow::environments::{
    ActiveEnvironment, Inflow, Offline, OdeEnvironment, OdeState, OfflineEnvironment, WaterTank,
    WaterTankEnvironment,
};
use cpsflow::learners::{
    ActivePolicy, ActivePolicyConfig, IncrementalLinear, LinearLearner, MeanLearner, Model, NativeModel,
    TreeLearner, MODEL_FILE_EXTENSION,
};
use cpsflow::metrics::Metric;
use cpsflow::remote::{ClientConfig, RemoteLearner};
use cpsflow::strategies::{evaluate, learn_active, learn_incremental, learn_offline, EvaluationReport, IoSpec};
use cpsflow::transforms::{Transform, TransformChain};
use serde_json::json;

pub use config::{Diagnostic, EnvironmentSpec, LearnerSpec, PipelineConfig, ScenarioLearner, TankParams, TransformSpec};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", join(.0))]
    Config(Vec<Diagnostic>),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Pipeline(#[from] cpsflow::Error),
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl CliError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        }
    }

    /// Machine-readable error record written to stderr.
    pub fn record(&self) -> serde_json::Value {
        match self {
            CliError::Config(diagnostics) => json!({
                "error": {
                    "module": "config",
                    "message": self.to_string(),
                    "diagnostics": diagnostics,
                }
            }),
            CliError::Io { path, message } => json!({
                "error": {"module": "io", "path": path.display().to_string(), "message": message}
            }),
            CliError::Pipeline(e) => json!({
                "error": {"module": e.module(), "message": e.to_string()}
            }),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Result of one pipeline execution.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub model: NativeModel,
    pub train_rows: usize,
    pub eval_rows: usize,
}

/// Reads, validates and resolves a config file. Relative data paths are
/// taken relative to the file's directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let mut config = config::load(path).map_err(CliError::Config)?;
    let base = path.parent().unwrap_or(Path::new("."));
    match &mut config.environment {
        EnvironmentSpec::Csv { path, .. } | EnvironmentSpec::Json { path } if path.is_relative() => {
            *path = base.join(&*path);
        }
        _ => {}
    }
    Ok(config)
}

/// Executes environment, transforms, split, learning and evaluation.
pub fn execute(config: &PipelineConfig) -> Result<RunOutput, CliError> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(CliError::Config(problems));
    }
    let metrics: Vec<Metric> = config
        .metrics
        .iter()
        .map(|m| Metric::from_name(m).map_err(cpsflow::Error::from))
        .collect::<Result<_, _>>()?;

    let raw = match &config.environment {
        EnvironmentSpec::WaterTankActive { tank, eval_steps } => {
            return execute_active(config, tank, *eval_steps, &metrics);
        }
        EnvironmentSpec::WaterTank { tank, samples } => {
            let system = water_tank(tank)?;
            let initial = OdeState {
                t: 0.0,
                x: vec![tank.initial_level],
            };
            OdeEnvironment::new(system, initial, tank.dt, *samples)
                .map_err(cpsflow::Error::from)?
                .observe()
                .map_err(cpsflow::Error::from)?
        }
        EnvironmentSpec::Csv { path, delimiter } => {
            let options = CsvOptions {
                delimiter: *delimiter as u8,
                ..CsvOptions::default()
            };
            Offline::from_csv(path, options).observe().map_err(cpsflow::Error::from)?
        }
        EnvironmentSpec::Json { path } => Offline::from_json(path).observe().map_err(cpsflow::Error::from)?,
    };

    let data = prepare(&raw, &config.transforms, config.split)?;
    let (train, eval) = data.vertical_split(config.split).map_err(cpsflow::Error::from)?;
    let io_config = config.io.as_ref().expect("validated");
    let io = IoSpec::new(io_config.inputs.clone(), io_config.outputs.clone()).map_err(cpsflow::Error::from)?;
    let (train_rows, eval_rows) = (train.row_count(), eval.row_count());

    let mut train_env = Offline::from_dataset(train.clone());
    let mut eval_env = Offline::from_dataset(eval);
    let mut none = TransformChain::new();
    let (report, model) = match &config.learner {
        LearnerSpec::RegressionTree {
            max_depth,
            min_samples_leaf,
        } => {
            let learner = TreeLearner::new(*max_depth, *min_samples_leaf).map_err(cpsflow::Error::from)?;
            let m = learn_offline(&mut train_env, &mut none, &io, &learner)?;
            (evaluate(&mut eval_env, &m, &io, &metrics)?, m.into())
        }
        LearnerSpec::Linear => {
            let m = learn_offline(&mut train_env, &mut none, &io, &LinearLearner)?;
            (evaluate(&mut eval_env, &m, &io, &metrics)?, m.into())
        }
        LearnerSpec::Mean => {
            let m = learn_offline(&mut train_env, &mut none, &io, &MeanLearner)?;
            (evaluate(&mut eval_env, &m, &io, &metrics)?, m.into())
        }
        LearnerSpec::IncrementalLinear {
            lambda,
            delta,
            batch_size,
        } => {
            let mut learner = IncrementalLinear::new(*lambda, *delta).map_err(cpsflow::Error::from)?;
            let mut stream = cpsflow::environments::Replay::new(train, *batch_size).map_err(cpsflow::Error::from)?;
            let m = learn_incremental(&mut stream, &mut none, &io, &mut learner)?;
            (evaluate(&mut eval_env, &m, &io, &metrics)?, m.into())
        }
        LearnerSpec::Remote { address, timeout_secs } => {
            let client = ClientConfig {
                timeout: Duration::from_secs_f64(*timeout_secs),
                ..ClientConfig::default()
            };
            let learner = RemoteLearner::connect(address, client).map_err(cpsflow::Error::from)?;
            let m = learn_offline(&mut train_env, &mut none, &io, &learner)?;
            let report = evaluate(&mut eval_env, &m, &io, &metrics)?;
            (report, m.fetch().map_err(cpsflow::Error::from)?)
        }
        LearnerSpec::ActiveLinear { .. } => unreachable!("validated"),
    };
    Ok(RunOutput {
        report,
        model,
        train_rows,
        eval_rows,
    })
}

fn water_tank(p: &TankParams) -> Result<WaterTank, cpsflow::Error> {
    Ok(WaterTank::new(
        p.area,
        p.outflow,
        p.inflow_gain,
        Inflow::ClippedSine {
            period: p.inflow_period,
        },
    )?)
}

/// Applies the configured transforms in order. Adaptive ones are fitted
/// on the leading `split` share of their input only, so statistics never
/// see evaluation rows.
pub fn prepare(raw: &Dataset, specs: &[TransformSpec], split: f64) -> Result<Dataset, CliError> {
    let mut data = raw.clone();
    for spec in specs {
        let mut t = match spec {
            TransformSpec::Select { columns } => Transform::select(columns.clone()),
            TransformSpec::Explode { columns } => Transform::explode(columns.clone()),
            TransformSpec::SlidingWindow { window } => {
                Transform::sliding_window(*window).map_err(cpsflow::Error::from)?
            }
            TransformSpec::Standardize { columns } => Transform::standardize(columns.clone()),
        };
        if t.is_adaptive() {
            let (fit_part, _) = data.vertical_split(split).map_err(cpsflow::Error::from)?;
            t.fit(&fit_part).map_err(cpsflow::Error::from)?;
        }
        data = t.apply(&data).map_err(cpsflow::Error::from)?;
    }
    Ok(data)
}

fn execute_active(
    config: &PipelineConfig,
    tank: &TankParams,
    eval_steps: usize,
    metrics: &[Metric],
) -> Result<RunOutput, CliError> {
    let LearnerSpec::ActiveLinear {
        epsilon,
        grid_points,
        budget,
        lambda,
        delta,
    } = config.learner
    else {
        unreachable!("validated")
    };
    let system = water_tank(tank)?;
    let fresh = || WaterTankEnvironment::new(system.clone(), tank.initial_level, tank.dt).map_err(cpsflow::Error::from);
    let mut env = fresh()?;
    let policy_config = ActivePolicyConfig {
        epsilon,
        grid_points,
        features: vec!["x".into()],
        target: "x".into(),
        lambda,
        delta,
        seed: config.seed.expect("validated"),
    };
    let mut policy = ActivePolicy::new(policy_config, env.action_space()).map_err(cpsflow::Error::from)?;
    let model = learn_active(&mut env, &mut policy, budget)?;

    // held-out passive run under the tank's own clipped sine inflow
    let schedule = system.inflow();
    let actions: Vec<f64> = (0..eval_steps).map(|i| schedule.at(i as f64 * tank.dt)).collect();
    let rollout = fresh()?.rollout(&actions).map_err(cpsflow::Error::from)?;
    let io = IoSpec::new(policy.model_inputs(), [policy.model_output()]).map_err(cpsflow::Error::from)?;
    let report = evaluate(&mut Offline::from_dataset(rollout), &model, &io, metrics)?;
    Ok(RunOutput {
        report,
        model: model.into(),
        train_rows: budget,
        eval_rows: eval_steps,
    })
}

/// Writes `report.json` and the model document into `dir`.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let report_path = dir.join(REPORT_FILE);
    let model_path = dir.join(format!("model.{MODEL_FILE_EXTENSION}"));
    let report = output.report.to_json().map_err(|e| CliError::io(&report_path, e))?;
    fs::write(&report_path, report).map_err(|e| CliError::io(&report_path, e))?;
    let model = output.model.to_json().map_err(cpsflow::Error::from)?;
    fs::write(&model_path, model).map_err(|e| CliError::io(&model_path, e))?;
    Ok((report_path, model_path))
}

/// Loads a saved model document.
pub fn load_model(path: &Path) -> Result<NativeModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(NativeModel::from_json(&text).map_err(cpsflow::Error::from)?)
}

/// Loads a CSV or JSON dataset, chosen by file extension.
pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let loaded = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => data::load_json(path),
        _ => data::load_csv(path, CsvOptions::default()),
    };
    Ok(loaded.map_err(cpsflow::Error::from)?)
}

/// Predictions of `model` for the rows of `inputs`, which may carry extra
/// columns.
pub fn predict(model: &NativeModel, inputs: &Dataset) -> Result<Dataset, CliError> {
    let selected = inputs.select(model.input_names()).map_err(cpsflow::Error::from)?;
    Ok(model.predict(&selected)?)
}
