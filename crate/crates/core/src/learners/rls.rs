//! Recursive least squares with exponential forgetting.

use super::{training_data, IncrementalLearner, LearnError, LinearModel};
use crate::data::Dataset;
use crate::Error;

/// Running least-squares solution.
///
/// With forgetting factor `lambda = 1` and `P₀ = I / delta`, the weights
/// after `n` updates equal the ridge solution `(XᵀX + δI)⁻¹ Xᵀy`.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    weights: Vec<f64>,
    /// Inverse Gram matrix, row-major, `dim × dim`.
    p: Vec<f64>,
    lambda: f64,
    delta: f64,
    intercept: bool,
    inputs: usize,
    updates: usize,
}

impl RlsState {
    pub fn new(inputs: usize, lambda: f64, delta: f64, intercept: bool) -> Result<Self, LearnError> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(LearnError::InvalidHyperparameter(format!(
                "forgetting factor must lie in (0, 1], got {lambda}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(LearnError::InvalidHyperparameter(format!(
                "regularization must be positive, got {delta}"
            )));
        }
        let dim = inputs + intercept as usize;
        let mut p = vec![0.0; dim * dim];
        for i in 0..dim {
            p[i * dim + i] = 1.0 / delta;
        }
        Ok(RlsState {
            weights: vec![0.0; dim],
            p,
            lambda,
            delta,
            intercept,
            inputs,
            updates: 0,
        })
    }

    fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Slope weights, without the intercept.
    pub fn weights(&self) -> &[f64] {
        &self.weights[..self.inputs]
    }

    pub fn intercept(&self) -> f64 {
        if self.intercept {
            self.weights[self.inputs]
        } else {
            0.0
        }
    }

    fn regressor(&self, input: &[f64]) -> Result<Vec<f64>, LearnError> {
        if input.len() != self.inputs {
            return Err(LearnError::DimensionMismatch {
                expected: self.inputs,
                found: input.len(),
            });
        }
        let mut z = input.to_vec();
        if self.intercept {
            z.push(1.0);
        }
        Ok(z)
    }

    pub fn predict(&self, input: &[f64]) -> Result<f64, LearnError> {
        let z = self.regressor(input)?;
        Ok(z.iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }

    /// `zᵀ P z` for the regressor of `input`: proportional to the predictive
    /// variance of the current estimate at that point.
    pub fn uncertainty(&self, input: &[f64]) -> Result<f64, LearnError> {
        let z = self.regressor(input)?;
        let pz = self.mul_p(&z);
        Ok(z.iter().zip(&pz).map(|(a, b)| a * b).sum())
    }

    fn mul_p(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|j| self.p[i * d + j] * z[j]).sum())
            .collect()
    }

    /// Folds one observation into the estimate.
    pub fn update(&mut self, input: &[f64], target: f64) -> Result<(), LearnError> {
        let z = self.regressor(input)?;
        let d = self.dim();
        let pz = self.mul_p(&z);
        let denom = self.lambda + z.iter().zip(&pz).map(|(a, b)| a * b).sum::<f64>();
        let gain: Vec<f64> = pz.iter().map(|v| v / denom).collect();
        let error = target - z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        for (w, k) in self.weights.iter_mut().zip(&gain) {
            *w += k * error;
        }
        for i in 0..d {
            for j in 0..d {
                self.p[i * d + j] = (self.p[i * d + j] - gain[i] * pz[j]) / self.lambda;
            }
        }
        for i in 0..d {
            for j in i + 1..d {
                let avg = 0.5 * (self.p[i * d + j] + self.p[j * d + i]);
                self.p[i * d + j] = avg;
                self.p[j * d + i] = avg;
            }
        }
        self.updates += 1;
        Ok(())
    }

    pub fn is_symmetric(&self, tolerance: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| (self.p[i * d + j] - self.p[j * d + i]).abs() <= tolerance))
    }

    /// Snapshot of the current estimate as a linear model.
    pub fn finalize(&self, input_names: Vec<String>, output_name: impl Into<String>) -> Result<LinearModel, LearnError> {
        if self.updates == 0 {
            return Err(LearnError::NeverUpdated);
        }
        LinearModel::new(input_names, output_name, self.weights().to_vec(), self.intercept())
    }
}

/// Incremental linear regression backed by [`RlsState`], with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalLinear {
    lambda: f64,
    delta: f64,
    state: Option<(RlsState, Vec<String>, String)>,
}

impl IncrementalLinear {
    pub const DEFAULT_LAMBDA: f64 = 1.0;
    pub const DEFAULT_DELTA: f64 = 1e-8;

    pub fn new(lambda: f64, delta: f64) -> Result<Self, LearnError> {
        RlsState::new(0, lambda, delta, false)?;
        Ok(IncrementalLinear {
            lambda,
            delta,
            state: None,
        })
    }

    pub fn state(&self) -> Option<&RlsState> {
        self.state.as_ref().map(|(s, _, _)| s)
    }
}

impl Default for IncrementalLinear {
    fn default() -> Self {
        IncrementalLinear {
            lambda: Self::DEFAULT_LAMBDA,
            delta: Self::DEFAULT_DELTA,
            state: None,
        }
    }
}

impl IncrementalLearner for IncrementalLinear {
    type Model = LinearModel;

    fn update(&mut self, inputs: &Dataset, outputs: &Dataset) -> Result<(), Error> {
        let (columns, target) = training_data(inputs, outputs)?;
        let (state, names, output) = match &mut self.state {
            Some(s) => s,
            None => self.state.insert((
                RlsState::new(inputs.column_count(), self.lambda, self.delta, true)?,
                inputs.names().to_vec(),
                outputs.names()[0].clone(),
            )),
        };
        if inputs.names() != names.as_slice() || outputs.names()[0] != *output {
            return Err(LearnError::SchemaMismatch {
                expected: names.clone(),
                found: inputs.names().to_vec(),
            }
            .into());
        }
        let mut row = vec![0.0; columns.len()];
        for (r, y) in target.iter().enumerate() {
            for (v, c) in row.iter_mut().zip(&columns) {
                *v = c[r];
            }
            state.update(&row, *y)?;
        }
        Ok(())
    }

    fn finalize(&self) -> Result<LinearModel, Error> {
        let (state, names, output) = self.state.as_ref().ok_or(LearnError::NeverUpdated)?;
        Ok(state.finalize(names.clone(), output.clone())?)
    }
}
