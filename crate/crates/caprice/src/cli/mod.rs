//! Command-line front end: configuration, logging, subcommands, and the
//! process exit-code contract (0 success, 1 usage or configuration, 2 data,
//! 3 numeric failure).

mod commands;
mod config;
mod logging;

pub use commands::{
    run_classify, run_encode, run_evaluate, run_generate, run_gradcheck, run_ingest, run_train,
};
pub use config::{parse_config, ConfigError, RunConfig};
pub use logging::init_logging;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::discriminator::DiscriminatorError;
use crate::features::FeatureError;
use crate::generate::GenerateError;
use crate::midi_io::MidiError;
use crate::neural::NeuralError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<MidiError> for CliError {
    fn from(err: MidiError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(err: CorpusError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(err: FeatureError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<NeuralError> for CliError {
    fn from(err: NeuralError) -> Self {
        match err {
            NeuralError::BadMagic
            | NeuralError::VersionMismatch(_)
            | NeuralError::CorruptPayload(_) => CliError::Data(err.to_string()),
            NeuralError::InvalidConfig(_) => CliError::Usage(err.to_string()),
            _ => CliError::Numeric(err.to_string()),
        }
    }
}

impl From<GenerateError> for CliError {
    fn from(err: GenerateError) -> Self {
        match err {
            GenerateError::InvalidConfig(_) => CliError::Usage(err.to_string()),
            GenerateError::DegenerateDistribution { .. } => CliError::Numeric(err.to_string()),
            GenerateError::Neural(inner) => inner.into(),
            GenerateError::Corpus(inner) => inner.into(),
            GenerateError::Io(inner) => CliError::Data(inner.to_string()),
        }
    }
}

impl From<DiscriminatorError> for CliError {
    fn from(err: DiscriminatorError) -> Self {
        match err {
            DiscriminatorError::InvalidProtocol(_) => CliError::Usage(err.to_string()),
            DiscriminatorError::NonFiniteFeature(_) => CliError::Numeric(err.to_string()),
            _ => CliError::Data(err.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::from(ConfigError::UnknownKey("x".into())).exit_code(), 1);
        assert_eq!(CliError::Usage("bad flag".into()).exit_code(), 1);
        assert_eq!(CliError::from(MidiError::BadHeader).exit_code(), 2);
        assert_eq!(CliError::from(CorpusError::EmptyInput).exit_code(), 2);
        assert_eq!(CliError::from(NeuralError::NonFiniteLoss(3)).exit_code(), 3);
        assert_eq!(CliError::from(NeuralError::BadMagic).exit_code(), 2);
        assert_eq!(
            CliError::from(GenerateError::DegenerateDistribution { step: 0 }).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(DiscriminatorError::InvalidProtocol("rounds".into())).exit_code(),
            1
        );
        assert_eq!(CliError::from(DiscriminatorError::EmptyPool).exit_code(), 2);
    }
}
