//! Data sources for learning and evaluation.
//!
//! Three kinds exist, matching how data becomes available:
//!
//! - [`OfflineEnvironment`]: the whole dataset in one observation.
//! - [`IncrementalEnvironment`]: a stream of batches ending in exhaustion.
//! - [`ActiveEnvironment`]: a system the learner acts on and advances.

mod active;
mod ode;

pub use active::{ActionSpace, WaterTankEnvironment};
pub use ode::{rk4_step, integrate, Inflow, OdeEnvironment, OdeState, OdeSystem, WaterTank, DEFAULT_SUBSTEP};

use std::path::PathBuf;

use crate::data::{self, CsvOptions, DataError, Dataset};
use crate::transforms::{Transform, TransformChain, TransformError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("action {action} is outside [{low}, {high}]")]
    ActionOutOfRange { action: f64, low: f64, high: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A source observed once that yields all of its data as one batch.
pub trait OfflineEnvironment {
    fn observe(&mut self) -> Result<Dataset, EnvError>;
}

/// A source yielding data batch by batch. `Ok(None)` signals exhaustion
/// and repeats on every later call.
pub trait IncrementalEnvironment {
    fn next_batch(&mut self) -> Result<Option<Dataset>, EnvError>;
}

/// An interactive system. Actions take effect on the next [`advance`].
///
/// [`advance`]: ActiveEnvironment::advance
pub trait ActiveEnvironment {
    fn action_space(&self) -> &ActionSpace;
    /// Current observation as a single-row dataset. Must not change state.
    fn observe(&self) -> Result<Dataset, EnvError>;
    fn act(&mut self, action: f64) -> Result<(), EnvError>;
    fn advance(&mut self) -> Result<(), EnvError>;
    /// Internal simulation time.
    fn time(&self) -> f64;
}

impl<E: OfflineEnvironment + ?Sized> OfflineEnvironment for &mut E {
    fn observe(&mut self) -> Result<Dataset, EnvError> {
        (**self).observe()
    }
}

impl<E: IncrementalEnvironment + ?Sized> IncrementalEnvironment for &mut E {
    fn next_batch(&mut self) -> Result<Option<Dataset>, EnvError> {
        (**self).next_batch()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    InMemory(Dataset),
    Csv { path: PathBuf, options: CsvOptions },
    Json(PathBuf),
}

impl DataSource {
    fn load(&self) -> Result<Dataset, DataError> {
        match self {
            DataSource::InMemory(d) => Ok(d.clone()),
            DataSource::Csv { path, options } => data::load_csv(path, *options),
            DataSource::Json(path) => data::load_json(path),
        }
    }
}

/// A file-backed or in-memory dataset with optional attached transforms.
///
/// Adaptive transforms that are not yet fitted get fitted on the first
/// observation; later observations reuse that state.
#[derive(Debug, Clone, PartialEq)]
pub struct Offline {
    source: DataSource,
    transforms: TransformChain,
}

impl Offline {
    pub fn new(source: DataSource) -> Self {
        Offline {
            source,
            transforms: TransformChain::new(),
        }
    }

    pub fn from_dataset(data: Dataset) -> Self {
        Self::new(DataSource::InMemory(data))
    }

    pub fn from_csv(path: impl Into<PathBuf>, options: CsvOptions) -> Self {
        Self::new(DataSource::Csv {
            path: path.into(),
            options,
        })
    }

    pub fn from_json(path: impl Into<PathBuf>) -> Self {
        Self::new(DataSource::Json(path.into()))
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transforms.push(transform);
        self
    }

    pub fn with_transforms(mut self, chain: TransformChain) -> Self {
        for t in chain.transforms() {
            self.transforms.push(t.clone());
        }
        self
    }

    pub fn transforms(&self) -> &TransformChain {
        &self.transforms
    }
}

impl OfflineEnvironment for Offline {
    fn observe(&mut self) -> Result<Dataset, EnvError> {
        let raw = self.source.load()?;
        Ok(self.transforms.fit_apply(&raw)?)
    }
}

/// Replays a dataset as consecutive batches of at most `batch_size` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    data: Dataset,
    batch_size: usize,
    cursor: usize,
}

impl Replay {
    pub fn new(data: Dataset, batch_size: usize) -> Result<Self, EnvError> {
        if batch_size == 0 {
            return Err(EnvError::InvalidParameter("batch_size must be positive".into()));
        }
        Ok(Replay {
            data,
            batch_size,
            cursor: 0,
        })
    }

    /// Number of batches handed out so far.
    pub fn consumed(&self) -> usize {
        self.cursor.div_ceil(self.batch_size)
    }
}

impl IncrementalEnvironment for Replay {
    fn next_batch(&mut self) -> Result<Option<Dataset>, EnvError> {
        let rows = self.data.row_count();
        if self.cursor >= rows {
            return Ok(None);
        }
        let end = (self.cursor + self.batch_size).min(rows);
        let batch = self.data.slice_rows(self.cursor, end);
        self.cursor = end;
        Ok(Some(batch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use proptest::prelude::*;

    fn fig4() -> Dataset {
        Dataset::new(vec![
            ("V", Column::from(vec![1.0, 2.0, 3.0, 4.0, 5.0])),
            ("x", Column::from(vec![10.0, 20.0, 30.0, 40.0, 50.0])),
        ])
        .unwrap()
    }

    fn counting(n: usize) -> Dataset {
        Dataset::new(vec![("a", Column::from((0..n).map(|i| i as f64).collect::<Vec<_>>()))]).unwrap()
    }

    #[test]
    fn offline_identity_and_idempotence() {
        let mut env = Offline::from_dataset(fig4());
        let first = env.observe().unwrap();
        assert_eq!(first, fig4());
        assert_eq!(env.observe().unwrap(), first);
    }

    #[test]
    fn offline_with_window() {
        let mut env = Offline::from_dataset(fig4()).with_transform(Transform::sliding_window(3).unwrap());
        let out = env.observe().unwrap();
        assert_eq!(out.row_count(), 3);
        assert_eq!(out.to_row_major().unwrap()[0], vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0]);
    }

    #[test]
    fn offline_missing_file() {
        let mut env = Offline::from_csv("/no/such/file.csv", CsvOptions::default());
        assert!(matches!(env.observe(), Err(EnvError::Data(DataError::FileNotFound(_)))));
    }

    #[test]
    fn offline_fits_attached_standardize_once() {
        let mut env = Offline::from_dataset(fig4()).with_transform(Transform::standardize(["x"]));
        let a = env.observe().unwrap();
        assert!(env.transforms().is_fitted());
        assert_eq!(env.observe().unwrap(), a);
    }

    #[test]
    fn replay_batches() {
        let mut env = Replay::new(counting(10), 4).unwrap();
        let sizes: Vec<usize> = std::iter::from_fn(|| env.next_batch().unwrap())
            .map(|b| b.row_count())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(env.next_batch().unwrap(), None);
        assert_eq!(env.next_batch().unwrap(), None);
        assert_eq!(env.consumed(), 3);

        let mut env = Replay::new(counting(3), 1).unwrap();
        for _ in 0..3 {
            assert_eq!(env.next_batch().unwrap().unwrap().row_count(), 1);
        }
        assert_eq!(env.next_batch().unwrap(), None);
        assert!(Replay::new(counting(3), 0).is_err());
    }

    proptest! {
        #[test]
        fn replay_concatenation_reproduces_source(n in 1usize..60, batch in 1usize..20) {
            let source = counting(n);
            let mut env = Replay::new(source.clone(), batch).unwrap();
            let mut joined: Option<Dataset> = None;
            while let Some(b) = env.next_batch().unwrap() {
                prop_assert!(b.row_count() >= 1 && b.row_count() <= batch);
                joined = Some(match joined {
                    None => b,
                    Some(j) => j.vstack(&b).unwrap(),
                });
            }
            prop_assert_eq!(joined.unwrap(), source);
        }
    }
}
