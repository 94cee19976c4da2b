use serde::{Deserialize, Serialize};

use super::{input_rows, single_output, training_data, Model, OfflineLearner};
use crate::data::Dataset;
use crate::Error;

pub(crate) const KIND: &str = "constant";

/// Predicts the same value for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantModel {
    input_names: Vec<String>,
    output_name: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ConstantParams {
    value: f64,
}

impl ConstantModel {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub(crate) fn params(&self) -> ConstantParams {
        ConstantParams { value: self.value }
    }

    pub(crate) fn from_params(inputs: Vec<String>, output: String, p: ConstantParams) -> Self {
        ConstantModel {
            input_names: inputs,
            output_name: output,
            value: p.value,
        }
    }
}

impl Model for ConstantModel {
    fn kind(&self) -> &str {
        KIND
    }

    fn input_names(&self) -> &[String] {
        &self.input_names
    }

    fn output_name(&self) -> &str {
        &self.output_name
    }

    fn predict(&self, inputs: &Dataset) -> Result<Dataset, Error> {
        input_rows(&self.input_names, inputs)?;
        Ok(single_output(&self.output_name, vec![self.value; inputs.row_count()])?)
    }
}

/// Baseline learner: predicts the training mean of the target.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeanLearner;

impl OfflineLearner for MeanLearner {
    type Model = ConstantModel;

    fn learn(&self, inputs: &Dataset, outputs: &Dataset) -> Result<ConstantModel, Error> {
        let (_, target) = training_data(inputs, outputs)?;
        let value = if target.is_empty() {
            0.0
        } else {
            target.iter().sum::<f64>() / target.len() as f64
        };
        Ok(ConstantModel {
            input_names: inputs.names().to_vec(),
            output_name: outputs.names()[0].clone(),
            value,
        })
    }
}
