//! Drivers composing environments, transforms and learners into models, and
//! the evaluation of models against held-out data.
//!
//! Transforms always run before input/output selection: selection acts as
//! the last step of the chain, so windowed columns can be selected.

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::data::Dataset;
use crate::environments::{ActiveEnvironment, IncrementalEnvironment, OfflineEnvironment};
use crate::learners::{ActiveLearner, IncrementalLearner, LearnError, Model, OfflineLearner};
use crate::metrics::Metric;
use crate::transforms::TransformChain;
use crate::Error;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StrategyError {
    #[error("at least one metric is required")]
    EmptyMetrics,
    #[error("metric `{0}` listed more than once")]
    DuplicateMetric(String),
    #[error("step budget must be at least 1")]
    InvalidBudget,
    #[error("invalid io spec: {0}")]
    InvalidIoSpec(String),
    #[error("model output `{output}` is not among the evaluated outputs {outputs:?}")]
    SchemaMismatch { output: String, outputs: Vec<String> },
}

/// Which columns feed the learner and which it must predict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IoSpec {
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl IoSpec {
    pub fn new<S: Into<String>, T: Into<String>>(
        inputs: impl IntoIterator<Item = S>,
        outputs: impl IntoIterator<Item = T>,
    ) -> Result<Self, StrategyError> {
        let inputs: Vec<String> = inputs.into_iter().map(Into::into).collect();
        let outputs: Vec<String> = outputs.into_iter().map(Into::into).collect();
        if inputs.is_empty() || outputs.is_empty() {
            return Err(StrategyError::InvalidIoSpec("inputs and outputs must both be non-empty".into()));
        }
        if let Some(c) = inputs.iter().find(|c| outputs.contains(c)) {
            return Err(StrategyError::InvalidIoSpec(format!("column `{c}` is both input and output")));
        }
        Ok(IoSpec { inputs, outputs })
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    /// Splits `data` into its input and output parts.
    pub fn split(&self, data: &Dataset) -> Result<(Dataset, Dataset), Error> {
        Ok((data.select(&self.inputs)?, data.select(&self.outputs)?))
    }
}

/// Observe once, transform, select, fit.
pub fn learn_offline<E, L>(
    env: &mut E,
    extra: &mut TransformChain,
    io: &IoSpec,
    learner: &L,
) -> Result<L::Model, Error>
where
    E: OfflineEnvironment + ?Sized,
    L: OfflineLearner + ?Sized,
{
    let data = env.observe()?;
    let data = extra.fit_apply(&data)?;
    let (inputs, outputs) = io.split(&data)?;
    learner.learn(&inputs, &outputs)
}

/// Feeds every batch to `learner` until the environment is exhausted.
/// Unfitted transforms are fitted on the first batch and then frozen.
pub fn learn_incremental<E, L>(
    env: &mut E,
    extra: &mut TransformChain,
    io: &IoSpec,
    learner: &mut L,
) -> Result<L::Model, Error>
where
    E: IncrementalEnvironment + ?Sized,
    L: IncrementalLearner + ?Sized,
{
    let mut updates = 0usize;
    while let Some(batch) = env.next_batch()? {
        let batch = extra.fit_apply(&batch)?;
        let (inputs, outputs) = io.split(&batch)?;
        learner.update(&inputs, &outputs)?;
        updates += 1;
    }
    if updates == 0 {
        return Err(LearnError::NeverUpdated.into());
    }
    learner.finalize()
}

/// Runs `budget` rounds of observe, propose, act, advance, observe, learn.
pub fn learn_active<E, L>(env: &mut E, learner: &mut L, budget: usize) -> Result<L::Model, Error>
where
    E: ActiveEnvironment + ?Sized,
    L: ActiveLearner + ?Sized,
{
    if budget == 0 {
        return Err(StrategyError::InvalidBudget.into());
    }
    for _ in 0..budget {
        let before = env.observe()?;
        let action = learner.propose_action(&before)?;
        env.act(action)?;
        env.advance()?;
        let after = env.observe()?;
        learner.learn_transition(&before, action, &after)?;
    }
    learner.finalize()
}

/// Scores of one model on one evaluation dataset.
///
/// Serializes as
/// `{"schema_version":1,"model":..,"rows":..,"metrics":{name:value},"warnings":[..]}`
/// with metrics in the order they were requested and `warnings` omitted
/// when empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub model: String,
    pub rows: usize,
    pub metrics: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl EvaluationReport {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

struct MetricMap<'a>(&'a [(String, f64)]);

impl Serialize for MetricMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (name, value) in self.0 {
            map.serialize_entry(name, value)?;
        }
        map.end()
    }
}

impl Serialize for EvaluationReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let fields = if self.warnings.is_empty() { 4 } else { 5 };
        let mut map = s.serialize_map(Some(fields))?;
        map.serialize_entry("schema_version", &Self::SCHEMA_VERSION)?;
        map.serialize_entry("model", &self.model)?;
        map.serialize_entry("rows", &self.rows)?;
        map.serialize_entry("metrics", &MetricMap(&self.metrics))?;
        if !self.warnings.is_empty() {
            map.serialize_entry("warnings", &self.warnings)?;
        }
        map.end()
    }
}

/// Observes `env`, predicts with `model` and scores the predictions against
/// the actual output column.
pub fn evaluate<E, M>(env: &mut E, model: &M, io: &IoSpec, metrics: &[Metric]) -> Result<EvaluationReport, Error>
where
    E: OfflineEnvironment + ?Sized,
    M: Model + ?Sized,
{
    check_metrics(metrics)?;
    if !io.outputs.iter().any(|o| o == model.output_name()) {
        return Err(StrategyError::SchemaMismatch {
            output: model.output_name().to_owned(),
            outputs: io.outputs.clone(),
        }
        .into());
    }
    let data = env.observe()?;
    let inputs = data.select(&io.inputs)?;
    let actual = data.f64_column(model.output_name())?;
    let predicted = model.predict(&inputs)?.f64_column(model.output_name())?;

    let mut scores = Vec::with_capacity(metrics.len());
    let mut warnings = Vec::new();
    for metric in metrics {
        let score = metric.evaluate(&predicted, &actual)?;
        if score.zero_division {
            warnings.push(format!("{}: zero division, reported as 0", metric.name()));
        }
        scores.push((metric.name().to_owned(), score.value));
    }
    Ok(EvaluationReport {
        model: model.kind().to_owned(),
        rows: data.row_count(),
        metrics: scores,
        warnings,
    })
}

fn check_metrics(metrics: &[Metric]) -> Result<(), StrategyError> {
    if metrics.is_empty() {
        return Err(StrategyError::EmptyMetrics);
    }
    for (i, m) in metrics.iter().enumerate() {
        if metrics[..i].iter().any(|p| p.name() == m.name()) {
            return Err(StrategyError::DuplicateMetric(m.name().to_owned()));
        }
    }
    Ok(())
}
