//! CART regression trees.
//!
//! Splits are chosen greedily to minimize the summed squared error of the
//! two children. Candidate thresholds are midpoints between consecutive
//! distinct feature values; a row goes left when `x[feature] <= threshold`.
//! Ties (within [`TIE_TOLERANCE`]) keep the lower feature index, then the
//! lower threshold.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{input_rows, single_output, training_data, LearnError, Model, OfflineLearner};
use crate::data::Dataset;
use crate::Error;

pub(crate) const KIND: &str = "regression_tree";

pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

/// A fitted tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTreeModel {
    input_names: Vec<String>,
    output_name: String,
    nodes: Vec<Node>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct TreeParams {
    nodes: Vec<Node>,
}

impl RegressionTreeModel {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, samples } => Some((value, samples)),
            Node::Split { .. } => None,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub(crate) fn params(&self) -> TreeParams {
        TreeParams {
            nodes: self.nodes.clone(),
        }
    }

    pub(crate) fn from_params(inputs: Vec<String>, output: String, p: TreeParams) -> Result<Self, LearnError> {
        if p.nodes.is_empty() {
            return Err(LearnError::Document("tree has no nodes".into()));
        }
        for (i, n) in p.nodes.iter().enumerate() {
            if let Node::Split {
                feature, left, right, ..
            } = *n
            {
                // children always follow their parent, which also rules out cycles
                if feature >= inputs.len() || left <= i || right <= i || left >= p.nodes.len() || right >= p.nodes.len()
                {
                    return Err(LearnError::Document(format!("malformed split node {i}")));
                }
            }
        }
        Ok(RegressionTreeModel {
            input_names: inputs,
            output_name: output,
            nodes: p.nodes,
        })
    }
}

impl Model for RegressionTreeModel {
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

/// Hyperparameters of the tree learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLearner {
    max_depth: usize,
    min_samples_leaf: usize,
}

impl TreeLearner {
    pub fn new(max_depth: usize, min_samples_leaf: usize) -> Result<Self, LearnError> {
        if min_samples_leaf == 0 {
            return Err(LearnError::InvalidHyperparameter("min_samples_leaf must be positive".into()));
        }
        Ok(TreeLearner {
            max_depth,
            min_samples_leaf,
        })
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn min_samples_leaf(&self) -> usize {
        self.min_samples_leaf
    }
}

impl OfflineLearner for TreeLearner {
    type Model = RegressionTreeModel;

    fn learn(&self, inputs: &Dataset, outputs: &Dataset) -> Result<RegressionTreeModel, Error> {
        Ok(fit_tree(inputs, outputs, self.max_depth, self.min_samples_leaf)?)
    }
}

pub fn fit_tree(
    inputs: &Dataset,
    outputs: &Dataset,
    max_depth: usize,
    min_samples_leaf: usize,
) -> Result<RegressionTreeModel, LearnError> {
    if min_samples_leaf == 0 {
        return Err(LearnError::InvalidHyperparameter("min_samples_leaf must be positive".into()));
    }
    let (features, target) = training_data(inputs, outputs)?;
    let needed = 2 * min_samples_leaf;
    if target.len() < needed {
        return Err(LearnError::TooFewSamples {
            rows: target.len(),
            needed,
        });
    }
    let builder = Builder {
        features: &features,
        target: &target,
        max_depth,
        min_leaf: min_samples_leaf,
    };
    let mut nodes = Vec::new();
    builder.grow((0..target.len()).collect(), 0, &mut nodes);
    Ok(RegressionTreeModel {
        input_names: inputs.names().to_vec(),
        output_name: outputs.names()[0].clone(),
        nodes,
    })
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Summed squared error of both children.
    pub score: f64,
}

struct Builder<'a> {
    features: &'a [Vec<f64>],
    target: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
}

impl Builder<'_> {
    fn grow(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        nodes.push(self.leaf(&rows));
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return id;
        }
        let first = self.target[rows[0]];
        if rows.iter().all(|&r| self.target[r] == first) {
            return id;
        }
        let Some((split, node_sse)) = self.best_split(&rows) else {
            return id;
        };
        if split.score >= node_sse {
            return id;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.features[split.feature][r] <= split.threshold);
        let left = self.grow(left_rows, depth + 1, nodes);
        let right = self.grow(right_rows, depth + 1, nodes);
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn leaf(&self, rows: &[usize]) -> Node {
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in rows {
            let y = self.target[r];
            sum += y;
            lo = lo.min(y);
            hi = hi.max(y);
        }
        Node::Leaf {
            value: (sum / rows.len() as f64).clamp(lo, hi),
            samples: rows.len(),
        }
    }

    /// Returns the best admissible split and the node's own squared error.
    fn best_split(&self, rows: &[usize]) -> Option<(SplitChoice, f64)> {
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.target[r]).sum::<f64>() / n as f64;
        // centred targets keep the running sums well conditioned
        let centred: Vec<f64> = rows.iter().map(|&r| self.target[r] - mean).collect();
        let total: f64 = centred.iter().sum();
        let total_sq: f64 = centred.iter().map(|c| c * c).sum();
        let node_sse = total_sq - total * total / n as f64;

        let mut best: Option<SplitChoice> = None;
        let mut order: Vec<usize> = (0..n).collect();
        for (f, column) in self.features.iter().enumerate() {
            order.sort_by(|&a, &b| {
                column[rows[a]]
                    .partial_cmp(&column[rows[b]])
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for i in 1..n {
                let c = centred[order[i - 1]];
                left_sum += c;
                left_sq += c * c;
                if i < self.min_leaf || n - i < self.min_leaf {
                    continue;
                }
                let lo = column[rows[order[i - 1]]];
                let hi = column[rows[order[i]]];
                if !(lo < hi) {
                    continue;
                }
                let right_sum = total - left_sum;
                let right_sq = total_sq - left_sq;
                let score = (left_sq - left_sum * left_sum / i as f64)
                    + (right_sq - right_sum * right_sum / (n - i) as f64);
                let better = match best {
                    None => true,
                    Some(b) => score < b.score - TIE_TOLERANCE,
                };
                if better {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold: midpoint(lo, hi),
                        score,
                    });
                }
            }
        }
        best.map(|b| (b, node_sse))
    }
}

/// Midpoint of `lo < hi` that still separates them.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}
