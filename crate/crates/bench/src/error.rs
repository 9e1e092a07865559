use std::path::PathBuf;

use demorph_core::biometric::BiometricError;
use demorph_core::dataset::DatasetError;
use demorph_core::image::ImageError;
use demorph_core::iqa::IqaError;
use demorph_core::pairing::PairingError;
use thiserror::Error;

/// Process exit codes of the CLI.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const VALIDATION: u8 = 1;
    pub const IO: u8 = 2;
    pub const SANITY: u8 = 3;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error("morph `{morph_id}`: {source}")]
    Record {
        morph_id: String,
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Iqa(#[from] IqaError),
    #[error(transparent)]
    Biometric(#[from] BiometricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sanity check failed: {0}")]
    SanityFailed(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub fn exit_code(&self) -> u8 {
        fn image_code(e: &ImageError) -> u8 {
            match e {
                ImageError::FileNotFound(_) | ImageError::Io(_) => exit::IO,
                _ => exit::VALIDATION,
            }
        }
        match self {
            HarnessError::Io { .. } => exit::IO,
            HarnessError::SanityFailed(_) => exit::SANITY,
            HarnessError::Record { source, .. } => source.exit_code(),
            HarnessError::Dataset(DatasetError::Io { .. }) => exit::IO,
            HarnessError::Image(e) => image_code(e),
            HarnessError::Iqa(IqaError::Image(e)) => image_code(e),
            HarnessError::Pairing(PairingError::Image { source, .. }) => image_code(source),
            HarnessError::Pairing(PairingError::Iqa(IqaError::Image(e))) => image_code(e),
            _ => exit::VALIDATION,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
