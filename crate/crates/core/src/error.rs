use crate::data::DataError;
use crate::environments::EnvError;
use crate::learners::LearnError;
use crate::metrics::MetricError;
use crate::remote::RemoteError;
use crate::strategies::StrategyError;
use crate::transforms::TransformError;

/// Any failure raised while running a pipeline, tagged by the module it
/// came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Environment(#[from] EnvError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

impl Error {
    /// Name of the module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Data(_) => "data",
            Error::Environment(_) => "environments",
            Error::Transform(_) => "transforms",
            Error::Learn(_) => "learners",
            Error::Metric(_) => "metrics",
            Error::Remote(_) => "remote",
            Error::Strategy(_) => "strategies",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
