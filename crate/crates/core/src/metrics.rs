//! Scalar scores comparing predictions with observed values.

use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("predicted has {predicted} values but actual has {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("metric input is empty")]
    EmptyInput,
    #[error("R² is undefined: actual values are constant and predictions differ from them")]
    ConstantActuals,
    #[error("value {value} at index {index} is not binary (0 or 1)")]
    NonBinaryValue { index: usize, value: f64 },
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// A metric value, flagged when it fell back to 0 because of a zero
/// denominator (no predicted or no actual positives).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub zero_division: bool,
}

impl Score {
    fn exact(value: f64) -> Self {
        Score {
            value,
            zero_division: false,
        }
    }
}

fn check(predicted: &[f64], actual: &[f64]) -> Result<usize, MetricError> {
    if predicted.len() != actual.len() {
        return Err(MetricError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(predicted.len())
}

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    let n = check(predicted, actual)?;
    let mut sum = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        sum += (p - a).abs();
    }
    Ok(sum / n as f64)
}

pub fn mse(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    let n = check(predicted, actual)?;
    let mut sum = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        let d = p - a;
        sum += d * d;
    }
    Ok(sum / n as f64)
}

pub fn max_error(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    check(predicted, actual)?;
    let mut worst: f64 = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        worst = worst.max((p - a).abs());
    }
    Ok(worst)
}

/// Coefficient of determination. Constant actuals are only accepted when the
/// predictions match them exactly (score 1).
pub fn r2(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    let n = check(predicted, actual)?;
    let mut total = 0.0;
    for a in actual {
        total += a;
    }
    let mean = total / n as f64;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for (p, a) in predicted.iter().zip(actual) {
        ss_tot += (a - mean) * (a - mean);
        ss_res += (a - p) * (a - p);
    }
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { Ok(1.0) } else { Err(MetricError::ConstantActuals) };
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Counts of a binary confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl ConfusionMatrix {
    pub fn from_binary(predicted: &[f64], actual: &[f64]) -> Result<Self, MetricError> {
        check(predicted, actual)?;
        let mut m = ConfusionMatrix::default();
        for (i, (&p, &a)) in predicted.iter().zip(actual).enumerate() {
            let p = binary(p, i)?;
            let a = binary(a, i)?;
            match (p, a) {
                (true, true) => m.true_positive += 1,
                (true, false) => m.false_positive += 1,
                (false, true) => m.false_negative += 1,
                (false, false) => m.true_negative += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positive + self.true_negative) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> Score {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    pub fn recall(&self) -> Score {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn f_beta(&self, beta: f64) -> Score {
        let p = self.precision();
        let r = self.recall();
        let zero_division = p.zero_division || r.zero_division;
        if p.value == 0.0 && r.value == 0.0 {
            return Score {
                value: 0.0,
                zero_division,
            };
        }
        let b2 = beta * beta;
        Score {
            value: (1.0 + b2) * p.value * r.value / (b2 * p.value + r.value),
            zero_division,
        }
    }
}

fn binary(v: f64, index: usize) -> Result<bool, MetricError> {
    if v == 1.0 {
        Ok(true)
    } else if v == 0.0 {
        Ok(false)
    } else {
        Err(MetricError::NonBinaryValue { index, value: v })
    }
}

fn ratio(num: usize, den: usize) -> Score {
    if den == 0 {
        Score {
            value: 0.0,
            zero_division: true,
        }
    } else {
        Score::exact(num as f64 / den as f64)
    }
}

pub fn accuracy(predicted: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    Ok(ConfusionMatrix::from_binary(predicted, actual)?.accuracy())
}

pub fn precision(predicted: &[f64], actual: &[f64]) -> Result<Score, MetricError> {
    Ok(ConfusionMatrix::from_binary(predicted, actual)?.precision())
}

pub fn recall(predicted: &[f64], actual: &[f64]) -> Result<Score, MetricError> {
    Ok(ConfusionMatrix::from_binary(predicted, actual)?.recall())
}

pub fn f_beta(predicted: &[f64], actual: &[f64], beta: f64) -> Result<Score, MetricError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(MetricError::InvalidBeta(beta));
    }
    Ok(ConfusionMatrix::from_binary(predicted, actual)?.f_beta(beta))
}

/// A metric selectable by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Mae,
    Mse,
    MaxError,
    R2,
    Accuracy,
    Precision,
    Recall,
    FBeta(f64),
}

impl Metric {
    pub const NAMES: [&'static str; 8] = [
        "mae",
        "mse",
        "max_error",
        "r2",
        "accuracy",
        "precision",
        "recall",
        "f_beta",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Mse => "mse",
            Metric::MaxError => "max_error",
            Metric::R2 => "r2",
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::FBeta(_) => "f_beta",
        }
    }

    /// Parses a metric name; `f_beta` uses β = 1.
    pub fn from_name(name: &str) -> Result<Metric, MetricError> {
        Ok(match name {
            "mae" => Metric::Mae,
            "mse" => Metric::Mse,
            "max_error" => Metric::MaxError,
            "r2" => Metric::R2,
            "accuracy" => Metric::Accuracy,
            "precision" => Metric::Precision,
            "recall" => Metric::Recall,
            "f_beta" => Metric::FBeta(1.0),
            other => return Err(MetricError::UnknownMetric(other.to_owned())),
        })
    }

    pub fn evaluate(&self, predicted: &[f64], actual: &[f64]) -> Result<Score, MetricError> {
        match self {
            Metric::Mae => mae(predicted, actual).map(Score::exact),
            Metric::Mse => mse(predicted, actual).map(Score::exact),
            Metric::MaxError => max_error(predicted, actual).map(Score::exact),
            Metric::R2 => r2(predicted, actual).map(Score::exact),
            Metric::Accuracy => accuracy(predicted, actual).map(Score::exact),
            Metric::Precision => precision(predicted, actual),
            Metric::Recall => recall(predicted, actual),
            Metric::FBeta(beta) => f_beta(predicted, actual, *beta),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
