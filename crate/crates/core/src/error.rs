use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::inference::InferenceError;
use crate::io::DataError;
use crate::model::ModelError;
use crate::priors::PriorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl Error {
    /// True for failures caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Data(_) | Error::Prior(_) => true,
            Error::Model(e) => !matches!(e, ModelError::DegenerateMean { .. }),
            Error::Inference(e) => matches!(e, InferenceError::InvalidConfig(_) | InferenceError::EmptyData),
            Error::Diagnostics(e) => !matches!(e, DiagnosticsError::ZeroWithinVariance | DiagnosticsError::RankDeficient(_)),
        }
    }
}
