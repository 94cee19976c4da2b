//! Learners and the models they produce.
//!
//! A learner is the training algorithm; a model is the immutable artifact it
//! produces. Models never hold a reference to their learner and can be saved
//! to and loaded from a versioned JSON document.

mod active;
mod linear;
mod mean;
mod rls;
mod tree;

pub use active::{ActivePolicy, ActivePolicyConfig, Transition};
pub use linear::{fit_linear, LinearLearner, LinearModel};
pub use mean::{ConstantModel, MeanLearner};
pub use rls::{IncrementalLinear, RlsState};
pub use tree::{fit_tree, Node, RegressionTreeModel, TreeLearner};

use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset, Field, Schema, ValueKind};
use crate::Error;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("design matrix is rank deficient; add explicit regularization or drop collinear inputs")]
    SingularDesign,
    #[error("need at least {needed} samples, got {rows}")]
    TooFewSamples { rows: usize, needed: usize },
    #[error("schema mismatch: model expects {expected:?}, got {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("input has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("incremental learner finalized before any update")]
    NeverUpdated,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("model document: {0}")]
    Document(String),
}

/// A trained artifact mapping input columns to one output column.
pub trait Model {
    /// Short identifier of the model family, e.g. `linear`.
    fn kind(&self) -> &str;
    fn input_names(&self) -> &[String];
    fn output_name(&self) -> &str;
    /// One prediction per input row, as a single-column dataset.
    fn predict(&self, inputs: &Dataset) -> Result<Dataset, Error>;
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn kind(&self) -> &str {
        (**self).kind()
    }
    fn input_names(&self) -> &[String] {
        (**self).input_names()
    }
    fn output_name(&self) -> &str {
        (**self).output_name()
    }
    fn predict(&self, inputs: &Dataset) -> Result<Dataset, Error> {
        (**self).predict(inputs)
    }
}

/// Learns a model from one full batch of data.
pub trait OfflineLearner {
    type Model: Model;
    fn learn(&self, inputs: &Dataset, outputs: &Dataset) -> Result<Self::Model, Error>;
}

/// Learns from successive batches and produces a model on demand.
pub trait IncrementalLearner {
    type Model: Model;
    fn update(&mut self, inputs: &Dataset, outputs: &Dataset) -> Result<(), Error>;
    fn finalize(&self) -> Result<Self::Model, Error>;
}

/// Learns by choosing actions on an interactive environment.
pub trait ActiveLearner {
    type Model: Model;
    fn propose_action(&mut self, observation: &Dataset) -> Result<f64, Error>;
    fn learn_transition(&mut self, observation: &Dataset, action: f64, next: &Dataset) -> Result<(), Error>;
    fn finalize(&self) -> Result<Self::Model, Error>;
}

/// Checks `inputs` against the model schema and returns its rows.
pub(crate) fn input_rows(expected: &[String], inputs: &Dataset) -> Result<Vec<Vec<f64>>, LearnError> {
    if inputs.names() != expected {
        return Err(LearnError::SchemaMismatch {
            expected: expected.to_vec(),
            found: inputs.names().to_vec(),
        });
    }
    Ok(inputs.to_row_major()?)
}

/// Validates a training pair: numeric inputs, one numeric output, equal rows.
pub(crate) fn training_data(inputs: &Dataset, outputs: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<f64>), LearnError> {
    if outputs.column_count() != 1 {
        return Err(LearnError::ShapeMismatch(format!(
            "expected exactly one output column, got {}",
            outputs.column_count()
        )));
    }
    if inputs.row_count() != outputs.row_count() {
        return Err(LearnError::ShapeMismatch(format!(
            "inputs have {} rows but outputs have {}",
            inputs.row_count(),
            outputs.row_count()
        )));
    }
    let columns = inputs.f64_columns()?;
    let target = outputs.f64_column(&outputs.names()[0])?;
    Ok((columns, target))
}

pub(crate) fn single_output(name: &str, values: Vec<f64>) -> Result<Dataset, LearnError> {
    Ok(Dataset::from_f64_columns(vec![name.to_owned()], vec![values])?)
}

fn float_schema(names: &[String]) -> Schema {
    Schema(
        names
            .iter()
            .map(|n| Field {
                name: n.clone(),
                kind: ValueKind::Float64,
            })
            .collect(),
    )
}

/// Version written into model documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// File extension for saved models.
pub const MODEL_FILE_EXTENSION: &str = "fcm.json";

/// Any model produced by the native learners.
#[derive(Debug, Clone, PartialEq)]
pub enum NativeModel {
    Linear(LinearModel),
    Tree(RegressionTreeModel),
    Constant(ConstantModel),
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    kind: String,
    input_schema: Schema,
    output_schema: Schema,
    params: serde_json::Value,
}

impl NativeModel {
    fn inner(&self) -> &dyn Model {
        match self {
            NativeModel::Linear(m) => m,
            NativeModel::Tree(m) => m,
            NativeModel::Constant(m) => m,
        }
    }

    /// Serializes to the versioned model document.
    pub fn to_json(&self) -> Result<String, LearnError> {
        let params = match self {
            NativeModel::Linear(m) => serde_json::to_value(m.params()),
            NativeModel::Tree(m) => serde_json::to_value(m.params()),
            NativeModel::Constant(m) => serde_json::to_value(m.params()),
        }
        .map_err(|e| LearnError::Document(e.to_string()))?;
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.kind().to_owned(),
            input_schema: float_schema(self.input_names()),
            output_schema: float_schema(&[self.output_name().to_owned()]),
            params,
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| LearnError::Document(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<NativeModel, LearnError> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| LearnError::Document(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Document(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let inputs: Vec<String> = doc.input_schema.0.into_iter().map(|f| f.name).collect();
        let output = match doc.output_schema.0.as_slice() {
            [field] => field.name.clone(),
            _ => return Err(LearnError::Document("output_schema must hold exactly one column".into())),
        };
        let bad = |e: serde_json::Error| LearnError::Document(e.to_string());
        match doc.kind.as_str() {
            linear::KIND => Ok(NativeModel::Linear(LinearModel::from_params(
                inputs,
                output,
                serde_json::from_value(doc.params).map_err(bad)?,
            )?)),
            tree::KIND => Ok(NativeModel::Tree(RegressionTreeModel::from_params(
                inputs,
                output,
                serde_json::from_value(doc.params).map_err(bad)?,
            )?)),
            mean::KIND => Ok(NativeModel::Constant(ConstantModel::from_params(
                inputs,
                output,
                serde_json::from_value(doc.params).map_err(bad)?,
            ))),
            other => Err(LearnError::Document(format!("unknown model kind `{other}`"))),
        }
    }
}

impl Model for NativeModel {
    fn kind(&self) -> &str {
        self.inner().kind()
    }
    fn input_names(&self) -> &[String] {
        self.inner().input_names()
    }
    fn output_name(&self) -> &str {
        self.inner().output_name()
    }
    fn predict(&self, inputs: &Dataset) -> Result<Dataset, Error> {
        self.inner().predict(inputs)
    }
}

impl From<LinearModel> for NativeModel {
    fn from(m: LinearModel) -> Self {
        NativeModel::Linear(m)
    }
}

impl From<RegressionTreeModel> for NativeModel {
    fn from(m: RegressionTreeModel) -> Self {
        NativeModel::Tree(m)
    }
}

impl From<ConstantModel> for NativeModel {
    fn from(m: ConstantModel) -> Self {
        NativeModel::Constant(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn xy() -> (Dataset, Dataset) {
        (
            Dataset::new(vec![("a", Column::from(vec![0.1, 1.7, 2.2, 3.9, 4.4, 5.0])), ("b", Column::from(vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0]))]).unwrap(),
            Dataset::new(vec![("y", Column::from(vec![0.3, 1.2, 2.9, 2.0, 4.1, 7.3]))]).unwrap(),
        )
    }

    #[test]
    fn documents_round_trip_for_every_kind() {
        let (x, y) = xy();
        let models: Vec<NativeModel> = vec![
            LinearLearner.learn(&x, &y).unwrap().into(),
            TreeLearner::new(3, 1).unwrap().learn(&x, &y).unwrap().into(),
            MeanLearner.learn(&x, &y).unwrap().into(),
        ];
        for m in models {
            let back = NativeModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
    }

    #[test]
    fn document_layout() {
        let (x, y) = xy();
        let m: NativeModel = LinearLearner.learn(&x, &y).unwrap().into();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["kind"], "linear");
        assert_eq!(v["input_schema"][0]["name"], "a");
        assert_eq!(v["input_schema"][0]["kind"], "float64");
        assert_eq!(v["output_schema"][0]["name"], "y");
        assert!(v["params"]["weights"].is_array());
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(NativeModel::from_json("{}").is_err());
        let (x, y) = xy();
        let m: NativeModel = MeanLearner.learn(&x, &y).unwrap().into();
        let text = m.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(matches!(NativeModel::from_json(&text), Err(LearnError::Document(_))));
    }

    #[test]
    fn training_data_checks_shapes() {
        let (x, y) = xy();
        let short = y.slice_rows(0, 2);
        assert!(matches!(training_data(&x, &short), Err(LearnError::ShapeMismatch(_))));
        assert!(matches!(training_data(&x, &x), Err(LearnError::ShapeMismatch(_))));
    }
}
