use thiserror::Error;

use crate::dataset::DatasetError;
use crate::design::DesignError;
use crate::mnl::EstimationError;
use crate::numerics::NumericsError;
use crate::postest::PostestError;
use crate::schema::SchemaError;
use crate::simulate::SimError;

/// Any failure the crate can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Postest(#[from] PostestError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
