use thiserror::Error;

use crate::beamform::BeamformError;
use crate::covdesign::CovError;
use crate::dofopt::DofError;
use crate::model::ModelError;
use crate::rate::RateError;
use crate::scheduling::ScheduleError;

/// Crate-wide error, wrapping the per-module error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dof(#[from] DofError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Beamform(#[from] BeamformError),
    #[error(transparent)]
    Covariance(#[from] CovError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),
    #[error("{failed} of {total} realizations failed (limit 20%); first failure: {first}")]
    FailureBudgetExceeded {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
