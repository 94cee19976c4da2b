use super::ode::{integrate, Inflow, OdeState, WaterTank, DEFAULT_SUBSTEP};
use super::{ActiveEnvironment, EnvError};
use crate::data::{Column, Dataset};

/// A closed interval of admissible scalar actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl ActionSpace {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Result<Self, EnvError> {
        if !(low.is_finite() && high.is_finite() && low <= high) {
            return Err(EnvError::InvalidParameter(format!("invalid action interval [{low}, {high}]")));
        }
        Ok(ActionSpace {
            name: name.into(),
            low,
            high,
        })
    }

    pub fn contains(&self, action: f64) -> bool {
        action >= self.low && action <= self.high
    }

    /// `points` evenly spaced actions including both ends.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        match points {
            0 => Vec::new(),
            1 => vec![self.low],
            _ => {
                let step = (self.high - self.low) / (points - 1) as f64;
                (0..points)
                    .map(|i| if i + 1 == points { self.high } else { self.low + i as f64 * step })
                    .collect()
            }
        }
    }
}

/// The water tank driven by a chosen inflow `V ∈ [0, 1]`, held constant
/// over each step. Observations are `{t, x}`; an advance without a pending
/// action uses `V = 0`.
#[derive(Debug, Clone)]
pub struct WaterTankEnvironment {
    tank: WaterTank,
    level: f64,
    steps: u64,
    dt: f64,
    substep: f64,
    pending: Option<f64>,
    space: ActionSpace,
}

impl WaterTankEnvironment {
    pub fn new(tank: WaterTank, initial_level: f64, dt: f64) -> Result<Self, EnvError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EnvError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(initial_level >= 0.0 && initial_level.is_finite()) {
            return Err(EnvError::InvalidParameter(format!("invalid initial level {initial_level}")));
        }
        Ok(WaterTankEnvironment {
            tank,
            level: initial_level,
            steps: 0,
            dt,
            substep: DEFAULT_SUBSTEP,
            pending: None,
            space: ActionSpace::new("V", 0.0, 1.0)?,
        })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Applies `actions` one per step and records each transition as
    /// `{t, x, V, x_next}`.
    pub fn rollout(&mut self, actions: &[f64]) -> Result<Dataset, EnvError> {
        let n = actions.len();
        let (mut t, mut x, mut v, mut next) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for &action in actions {
            t.push(self.time());
            x.push(self.level);
            v.push(action);
            self.act(action)?;
            self.advance()?;
            next.push(self.level);
        }
        Ok(Dataset::new(vec![
            ("t", Column::Float64(t)),
            ("x", Column::Float64(x)),
            ("V", Column::Float64(v)),
            ("x_next", Column::Float64(next)),
        ])?)
    }
}

impl ActiveEnvironment for WaterTankEnvironment {
    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn observe(&self) -> Result<Dataset, EnvError> {
        Ok(Dataset::new(vec![
            ("t", Column::Float64(vec![self.time()])),
            ("x", Column::Float64(vec![self.level])),
        ])?)
    }

    fn act(&mut self, action: f64) -> Result<(), EnvError> {
        if !self.space.contains(action) {
            return Err(EnvError::ActionOutOfRange {
                action,
                low: self.space.low,
                high: self.space.high,
            });
        }
        self.pending = Some(action);
        Ok(())
    }

    fn advance(&mut self) -> Result<(), EnvError> {
        let inflow = self.pending.take().unwrap_or(0.0);
        let system = self.tank.with_inflow(Inflow::Constant(inflow));
        let start = OdeState {
            t: self.time(),
            x: vec![self.level],
        };
        let end = integrate(&system, &start, self.dt, self.substep)?;
        self.level = end.x[0];
        self.steps += 1;
        Ok(())
    }

    fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }
}
