//! Ordinary least squares with an intercept, solved by Householder QR.

use serde::{Deserialize, Serialize};

use super::{input_rows, single_output, training_data, LearnError, Model, OfflineLearner};
use crate::data::Dataset;
use crate::Error;

pub(crate) const KIND: &str = "linear";

/// A column whose remaining norm after orthogonalization drops below this
/// fraction of its original norm is treated as linearly dependent.
const RANK_TOLERANCE: f64 = 1e-10;

/// `y = intercept + Σ weights[j] · x[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    input_names: Vec<String>,
    output_name: String,
    weights: Vec<f64>,
    intercept: f64,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct LinearParams {
    weights: Vec<f64>,
    intercept: f64,
}

impl LinearModel {
    pub fn new(
        input_names: Vec<String>,
        output_name: impl Into<String>,
        weights: Vec<f64>,
        intercept: f64,
    ) -> Result<Self, LearnError> {
        if weights.len() != input_names.len() {
            return Err(LearnError::DimensionMismatch {
                expected: input_names.len(),
                found: weights.len(),
            });
        }
        Ok(LinearModel {
            input_names,
            output_name: output_name.into(),
            weights,
            intercept,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut y = self.intercept;
        for (w, x) in self.weights.iter().zip(row) {
            y += w * x;
        }
        y
    }

    pub(crate) fn params(&self) -> LinearParams {
        LinearParams {
            weights: self.weights.clone(),
            intercept: self.intercept,
        }
    }

    pub(crate) fn from_params(inputs: Vec<String>, output: String, p: LinearParams) -> Result<Self, LearnError> {
        Self::new(inputs, output, p.weights, p.intercept)
    }
}

impl Model for LinearModel {
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
        let rows = input_rows(&self.input_names, inputs)?;
        let y = rows.iter().map(|r| self.predict_row(r)).collect();
        Ok(single_output(&self.output_name, y)?)
    }
}

/// Fits `outputs ≈ inputs · w + b` by least squares.
///
/// Rank-deficient designs (fewer rows than parameters, collinear or
/// constant inputs) fail with [`LearnError::SingularDesign`] rather than
/// being silently regularized.
pub fn fit_linear(inputs: &Dataset, outputs: &Dataset) -> Result<LinearModel, LearnError> {
    let (columns, y) = training_data(inputs, outputs)?;
    let n = y.len();
    let p = columns.len() + 1;
    if n < p {
        return Err(LearnError::SingularDesign);
    }
    // Design matrix stored by column; the intercept column comes last.
    let mut design = columns;
    design.push(vec![1.0; n]);
    let beta = least_squares_qr(design, y)?;
    let intercept = beta[p - 1];
    LinearModel::new(
        inputs.names().to_vec(),
        outputs.names()[0].clone(),
        beta[..p - 1].to_vec(),
        intercept,
    )
}

/// Solves `min ‖A·β − b‖` for a column-major `A` with full column rank.
fn least_squares_qr(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, LearnError> {
    let n = b.len();
    let p = a.len();
    let norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    let mut diag = vec![0.0; p];

    for k in 0..p {
        let tail_norm = norm(&a[k][k..]);
        if tail_norm <= RANK_TOLERANCE * norms[k] || tail_norm == 0.0 {
            return Err(LearnError::SingularDesign);
        }
        let alpha = if a[k][k] > 0.0 { -tail_norm } else { tail_norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;
        if vv > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                reflect(&v, vv, &mut col[k..]);
            }
            reflect(&v, vv, &mut b[k..]);
        }
        // column k is now alpha·e_k; only the diagonal is needed below
        a[k][k] = alpha;
        for r in a[k].iter_mut().skip(k + 1).take(n - k - 1) {
            *r = 0.0;
        }
    }

    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = b[k];
        for j in k + 1..p {
            s -= a[j][k] * beta[j];
        }
        beta[k] = s / diag[k];
    }
    if beta.iter().any(|x| !x.is_finite()) {
        return Err(LearnError::SingularDesign);
    }
    Ok(beta)
}

fn norm(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

// x ← (I − 2·v·vᵀ / vᵀv)·x
fn reflect(v: &[f64], vv: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vv;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

/// Offline learner wrapping [`fit_linear`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinearLearner;

impl OfflineLearner for LinearLearner {
    type Model = LinearModel;

    fn learn(&self, inputs: &Dataset, outputs: &Dataset) -> Result<LinearModel, Error> {
        Ok(fit_linear(inputs, outputs)?)
    }
}
