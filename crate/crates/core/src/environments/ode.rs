//! Fixed-step simulation of ordinary differential equations and the
//! water-tank benchmark system.

use std::f64::consts::PI;

use super::{EnvError, OfflineEnvironment};
use crate::data::{Column, Dataset};
use crate::transforms::{Transform, TransformChain};

/// Internal integration step between output samples, in seconds.
pub const DEFAULT_SUBSTEP: f64 = 1e-3;

/// A system `ẋ = f(t, x)` with named state and input signals.
pub trait OdeSystem {
    fn state_names(&self) -> Vec<String>;

    fn input_names(&self) -> Vec<String> {
        Vec::new()
    }

    /// Exogenous inputs at time `t`, in [`OdeSystem::input_names`] order.
    fn inputs(&self, _t: f64) -> Vec<f64> {
        Vec::new()
    }

    fn derivative(&self, t: f64, state: &[f64], out: &mut [f64]);

    /// Maps a state back into the admissible set after each step.
    fn project(&self, _state: &mut [f64]) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub x: Vec<f64>,
}

/// One classical fourth-order Runge-Kutta step of size `h`.
pub fn rk4_step<S: OdeSystem + ?Sized>(system: &S, state: &OdeState, h: f64) -> Result<OdeState, EnvError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(EnvError::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let n = state.x.len();
    let t = state.t;
    let x = &state.x;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    system.derivative(t, x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    system.derivative(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    system.derivative(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    system.derivative(t + h, &tmp, &mut k4);

    let mut next: Vec<f64> = (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    system.project(&mut next);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(EnvError::NonFiniteState { t: t + h });
    }
    Ok(OdeState { t: t + h, x: next })
}

/// Advances `state` by `duration` using equal RK4 substeps no longer than
/// `max_substep`.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    state: &OdeState,
    duration: f64,
    max_substep: f64,
) -> Result<OdeState, EnvError> {
    if !(max_substep > 0.0 && max_substep.is_finite()) {
        return Err(EnvError::InvalidParameter(format!("substep must be positive, got {max_substep}")));
    }
    if duration == 0.0 {
        return Ok(state.clone());
    }
    let steps = (duration / max_substep - 1e-9).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut current = state.clone();
    for i in 0..steps {
        current.t = state.t + i as f64 * h;
        current = rk4_step(system, &current, h)?;
    }
    current.t = state.t + duration;
    Ok(current)
}

/// Inflow signal of the water tank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inflow {
    /// `max(0, sin(2πt / period))`.
    ClippedSine { period: f64 },
    Constant(f64),
}

impl Inflow {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Inflow::ClippedSine { period } => (2.0 * PI * t / period).sin().max(0.0),
            Inflow::Constant(v) => v,
        }
    }
}

/// Single tank with inflow `b·V(t)` and level-dependent outflow `a·√x`:
/// `ẋ = (b·V(t) − a·√x) / A`.
///
/// The level is clamped at zero before the root is taken and after every
/// step, since a tank cannot hold a negative volume.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterTank {
    area: f64,
    outflow: f64,
    inflow_gain: f64,
    inflow: Inflow,
}

impl WaterTank {
    pub fn new(area: f64, outflow: f64, inflow_gain: f64, inflow: Inflow) -> Result<Self, EnvError> {
        if !(area > 0.0 && area.is_finite()) {
            return Err(EnvError::InvalidParameter(format!("tank area must be positive, got {area}")));
        }
        if !outflow.is_finite() || !inflow_gain.is_finite() {
            return Err(EnvError::InvalidParameter("tank coefficients must be finite".into()));
        }
        Ok(WaterTank {
            area,
            outflow,
            inflow_gain,
            inflow,
        })
    }

    /// A = 5, a = 0.5, b = 2 with a clipped sine inflow of period 10 s.
    pub fn reference() -> Self {
        WaterTank {
            area: 5.0,
            outflow: 0.5,
            inflow_gain: 2.0,
            inflow: Inflow::ClippedSine { period: 10.0 },
        }
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn outflow(&self) -> f64 {
        self.outflow
    }

    pub fn inflow_gain(&self) -> f64 {
        self.inflow_gain
    }

    pub fn inflow(&self) -> Inflow {
        self.inflow
    }

    pub fn with_inflow(&self, inflow: Inflow) -> Self {
        WaterTank {
            inflow,
            ..self.clone()
        }
    }

    pub fn level_rate(&self, t: f64, level: f64) -> f64 {
        (self.inflow_gain * self.inflow.at(t) - self.outflow * level.max(0.0).sqrt()) / self.area
    }
}

impl OdeSystem for WaterTank {
    fn state_names(&self) -> Vec<String> {
        vec!["x".into()]
    }

    fn input_names(&self) -> Vec<String> {
        vec!["V".into()]
    }

    fn inputs(&self, t: f64) -> Vec<f64> {
        vec![self.inflow.at(t)]
    }

    fn derivative(&self, t: f64, state: &[f64], out: &mut [f64]) {
        out[0] = self.level_rate(t, state[0]);
    }

    fn project(&self, state: &mut [f64]) {
        state[0] = state[0].max(0.0);
    }
}

/// Samples an [`OdeSystem`] at a fixed rate, producing columns
/// `t`, the inputs, then the states.
#[derive(Debug, Clone)]
pub struct OdeEnvironment<S> {
    system: S,
    initial: OdeState,
    dt: f64,
    substep: f64,
    samples: usize,
    transforms: TransformChain,
}

impl<S: OdeSystem> OdeEnvironment<S> {
    pub fn new(system: S, initial: OdeState, dt: f64, samples: usize) -> Result<Self, EnvError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EnvError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if samples == 0 {
            return Err(EnvError::InvalidParameter("sample count must be at least 1".into()));
        }
        if initial.x.len() != system.state_names().len() {
            return Err(EnvError::InvalidParameter("initial state has the wrong dimension".into()));
        }
        Ok(OdeEnvironment {
            system,
            initial,
            dt,
            substep: DEFAULT_SUBSTEP,
            samples,
            transforms: TransformChain::new(),
        })
    }

    pub fn with_substep(mut self, substep: f64) -> Result<Self, EnvError> {
        if !(substep > 0.0 && substep.is_finite()) {
            return Err(EnvError::InvalidParameter(format!("substep must be positive, got {substep}")));
        }
        self.substep = substep;
        Ok(self)
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transforms.push(transform);
        self
    }

    pub fn system(&self) -> &S {
        &self.system
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `n` samples at `t0, t0 + dt, …, t0 + (n−1)·dt`.
    pub fn sample_trajectory(&self, n: usize) -> Result<Dataset, EnvError> {
        if n == 0 {
            return Err(EnvError::InvalidParameter("sample count must be at least 1".into()));
        }
        let input_names = self.system.input_names();
        let state_names = self.system.state_names();
        let mut times = Vec::with_capacity(n);
        let mut inputs = vec![Vec::with_capacity(n); input_names.len()];
        let mut states = vec![Vec::with_capacity(n); state_names.len()];

        let t0 = self.initial.t;
        let mut current = self.initial.clone();
        for i in 0..n {
            let t = t0 + i as f64 * self.dt;
            current.t = t;
            times.push(t);
            for (col, v) in inputs.iter_mut().zip(self.system.inputs(t)) {
                col.push(v);
            }
            for (col, v) in states.iter_mut().zip(&current.x) {
                col.push(*v);
            }
            if i + 1 < n {
                current = integrate(&self.system, &current, self.dt, self.substep)?;
            }
        }

        let mut columns = vec![("t".to_owned(), Column::Float64(times))];
        columns.extend(input_names.into_iter().zip(inputs.into_iter().map(Column::Float64)));
        columns.extend(state_names.into_iter().zip(states.into_iter().map(Column::Float64)));
        Ok(Dataset::new(columns)?)
    }
}

impl<S: OdeSystem> OfflineEnvironment for OdeEnvironment<S> {
    fn observe(&mut self) -> Result<Dataset, EnvError> {
        let raw = self.sample_trajectory(self.samples)?;
        Ok(self.transforms.fit_apply(&raw)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tank_env(samples: usize) -> OdeEnvironment<WaterTank> {
        OdeEnvironment::new(WaterTank::reference(), OdeState { t: 0.0, x: vec![1.0] }, 0.1, samples).unwrap()
    }

    fn closed_form(t: f64) -> f64 {
        // √x(t) = √x0 − a·t / (2A) with x0 = 1, a = 0.5, A = 5
        let r = 1.0 - 0.5 * t / (2.0 * 5.0);
        r * r
    }

    #[test]
    fn derivative_at_start() {
        let tank = WaterTank::reference();
        assert!((tank.level_rate(0.0, 1.0) - (-0.1)).abs() < 1e-15);
    }

    #[test]
    fn clipped_sine_inflow() {
        let v = Inflow::ClippedSine { period: 10.0 };
        assert!((v.at(2.5) - 1.0).abs() < 1e-15);
        assert_eq!(v.at(7.5), 0.0);
        assert_eq!(v.at(0.0), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(WaterTank::new(0.0, 0.5, 2.0, Inflow::Constant(0.0)).is_err());
        assert!(OdeEnvironment::new(WaterTank::reference(), OdeState { t: 0.0, x: vec![1.0] }, 0.0, 5).is_err());
        assert!(rk4_step(&WaterTank::reference(), &OdeState { t: 0.0, x: vec![1.0] }, -1.0).is_err());
    }

    #[test]
    fn case_study_trajectory_shape() {
        let d = tank_env(250).sample_trajectory(250).unwrap();
        assert_eq!(d.row_count(), 250);
        assert_eq!(d.names(), &["t".to_string(), "V".to_string(), "x".to_string()]);
        assert_eq!(d.to_row_major().unwrap()[0], vec![0.0, 0.0, 1.0]);
        let t = d.f64_column("t").unwrap();
        assert!((t[249] - 24.9).abs() < 1e-12);
        assert!(d.f64_column("x").unwrap().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn single_sample_is_initial_condition() {
        let d = tank_env(1).sample_trajectory(1).unwrap();
        assert_eq!(d.to_row_major().unwrap(), vec![vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn zero_inflow_matches_closed_form() {
        let tank = WaterTank::reference().with_inflow(Inflow::Constant(0.0));
        let env = OdeEnvironment::new(tank, OdeState { t: 0.0, x: vec![1.0] }, 0.1, 101).unwrap();
        let d = env.sample_trajectory(101).unwrap();
        let t = d.f64_column("t").unwrap();
        let x = d.f64_column("x").unwrap();
        assert!((x[100] - 0.25).abs() < 1e-4);
        for (t, x) in t.iter().zip(&x) {
            assert!((x - closed_form(*t)).abs() < 1e-4, "t={t}");
        }
    }

    #[test]
    fn drained_tank_stays_empty() {
        let tank = WaterTank::reference().with_inflow(Inflow::Constant(0.0));
        let env = OdeEnvironment::new(tank, OdeState { t: 0.0, x: vec![1.0] }, 0.5, 80).unwrap();
        let x = env.sample_trajectory(80).unwrap().f64_column("x").unwrap();
        assert!(x.iter().all(|&v| v >= 0.0));
        assert!(x[79] < 1e-6);
    }

    #[test]
    fn halving_the_step_reduces_error() {
        let tank = WaterTank::reference().with_inflow(Inflow::Constant(0.0));
        let start = OdeState { t: 0.0, x: vec![1.0] };
        let errors: Vec<f64> = [2.0, 1.0, 0.5, 0.25]
            .iter()
            .map(|&h| {
                let end = integrate(&tank, &start, 18.0, h).unwrap();
                (end.x[0] - closed_form(18.0)).abs()
            })
            .collect();
        for pair in errors.windows(2) {
            assert!(pair[1] < pair[0], "{errors:?}");
        }
        // fourth order: halving h shrinks the error by roughly 16
        let order = (errors[1] / errors[2]).log2();
        assert!(order > 3.0, "observed order {order}, errors {errors:?}");
    }
}
