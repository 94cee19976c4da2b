//! Epsilon-greedy, uncertainty-seeking exploration of an active environment.
//!
//! The policy keeps a linear surrogate of the one-step dynamics
//! `(observation ⊕ action) → next target value`, refitted with RLS after every
//! transition. When not exploring at random it picks the grid action where
//! the surrogate is least certain, measured by `zᵀ P z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ActiveLearner, LearnError, LinearModel, RlsState};
use crate::data::Dataset;
use crate::environments::ActionSpace;
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivePolicyConfig {
    /// Probability of a uniformly random grid action.
    pub epsilon: f64,
    pub grid_points: usize,
    /// Observation columns fed to the surrogate.
    pub features: Vec<String>,
    /// Observation column the surrogate predicts one step ahead.
    pub target: String,
    pub lambda: f64,
    pub delta: f64,
    pub seed: u64,
}

impl ActivePolicyConfig {
    pub fn new(features: Vec<String>, target: impl Into<String>, seed: u64) -> Self {
        ActivePolicyConfig {
            epsilon: 0.3,
            grid_points: 11,
            features,
            target: target.into(),
            lambda: 1.0,
            delta: 1e-4,
            seed,
        }
    }
}

/// One observed step of the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: f64,
    pub next: f64,
}

#[derive(Debug, Clone)]
pub struct ActivePolicy {
    config: ActivePolicyConfig,
    action_name: String,
    grid: Vec<f64>,
    surrogate: RlsState,
    rng: ChaCha8Rng,
    buffer: Vec<Transition>,
}

impl ActivePolicy {
    pub fn new(config: ActivePolicyConfig, space: &ActionSpace) -> Result<Self, LearnError> {
        if !(0.0..=1.0).contains(&config.epsilon) {
            return Err(LearnError::InvalidHyperparameter(format!(
                "epsilon must lie in [0, 1], got {}",
                config.epsilon
            )));
        }
        if config.grid_points == 0 {
            return Err(LearnError::InvalidHyperparameter("action grid needs at least one point".into()));
        }
        if config.features.is_empty() {
            return Err(LearnError::InvalidHyperparameter("surrogate needs at least one feature".into()));
        }
        let surrogate = RlsState::new(config.features.len() + 1, config.lambda, config.delta, true)?;
        Ok(ActivePolicy {
            grid: space.grid(config.grid_points),
            action_name: space.name.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            surrogate,
            buffer: Vec::new(),
            config,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.buffer
    }

    pub fn surrogate(&self) -> &RlsState {
        &self.surrogate
    }

    /// Names of the finalized model's inputs: the features, then the action.
    pub fn model_inputs(&self) -> Vec<String> {
        let mut names = self.config.features.clone();
        names.push(self.action_name.clone());
        names
    }

    pub fn model_output(&self) -> String {
        format!("{}_next", self.config.target)
    }

    fn features(&self, observation: &Dataset) -> Result<Vec<f64>, LearnError> {
        if observation.row_count() != 1 {
            return Err(LearnError::ShapeMismatch(format!(
                "observation must be a single row, got {}",
                observation.row_count()
            )));
        }
        self.config
            .features
            .iter()
            .map(|f| Ok(observation.f64_column(f)?[0]))
            .collect()
    }

    fn greedy(&self, features: &[f64]) -> Result<f64, LearnError> {
        if self.surrogate.updates() == 0 {
            return Ok(self.grid[0]);
        }
        let mut z = features.to_vec();
        z.push(0.0);
        let last = z.len() - 1;
        let mut best = (self.grid[0], f64::NEG_INFINITY);
        for &a in &self.grid {
            z[last] = a;
            let score = self.surrogate.uncertainty(&z)?;
            if score > best.1 {
                best = (a, score);
            }
        }
        Ok(best.0)
    }
}

impl ActiveLearner for ActivePolicy {
    type Model = LinearModel;

    fn propose_action(&mut self, observation: &Dataset) -> Result<f64, Error> {
        let features = self.features(observation)?;
        let explore = self.rng.gen::<f64>() < self.config.epsilon;
        if explore {
            let i = self.rng.gen_range(0..self.grid.len());
            return Ok(self.grid[i]);
        }
        Ok(self.greedy(&features)?)
    }

    fn learn_transition(&mut self, observation: &Dataset, action: f64, next: &Dataset) -> Result<(), Error> {
        let features = self.features(observation)?;
        if next.row_count() != 1 {
            return Err(LearnError::ShapeMismatch("next observation must be a single row".into()).into());
        }
        let target = next.f64_column(&self.config.target)?[0];
        let mut z = features.clone();
        z.push(action);
        self.surrogate.update(&z, target)?;
        self.buffer.push(Transition {
            observation: features,
            action,
            next: target,
        });
        Ok(())
    }

    fn finalize(&self) -> Result<LinearModel, Error> {
        Ok(self.surrogate.finalize(self.model_inputs(), self.model_output())?)
    }
}
