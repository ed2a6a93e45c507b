//! Flat `key = value` run configuration.
//!
//! Values resolve in precedence order: built-in defaults, then the config
//! file, then `--set key=value` overrides. Unknown keys are rejected rather
//! than ignored so typos surface immediately.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::discriminator::{DatasetMode, EvalProtocol, SvmHyper};
use crate::features::{EncodingMode, DEFAULT_FEATURE_WIDTH};
use crate::generate::SamplerConfig;
use crate::neural::ModelConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?} expects {expected}, got {value:?}")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("required key {0:?} is not set")]
    MissingRequired(&'static str),
    #[error("line {line} is not a `key = value` assignment: {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("override {0:?} is not a `key=value` assignment")]
    MalformedOverride(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub corpus_dir: Option<PathBuf>,
    pub store_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub split: String,
    pub seed: u64,
    pub pitch_embed_dim: usize,
    pub duration_embed_dim: usize,
    pub hidden_dim: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub checkpoint_every: usize,
    pub stop_at_loss: Option<f64>,
    pub temperature: f64,
    pub total_notes: Option<usize>,
    pub segment_len: usize,
    pub reset_between_segments: bool,
    pub lambda: f64,
    pub svm_epochs: usize,
    pub standardize: bool,
    pub rounds: usize,
    pub train_fraction: f64,
    pub width: usize,
    pub encoding: EncodingMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_dir: None,
            store_path: None,
            output_dir: PathBuf::from("out"),
            split: "Paganini".into(),
            seed: 42,
            pitch_embed_dim: 64,
            duration_embed_dim: 64,
            hidden_dim: 256,
            seq_len: 32,
            learning_rate: 0.001,
            epochs: 250,
            batch_size: 32,
            checkpoint_every: 0,
            stop_at_loss: None,
            temperature: 1.0,
            total_notes: None,
            segment_len: 32,
            reset_between_segments: false,
            lambda: 1e-3,
            svm_epochs: 200,
            standardize: true,
            rounds: 100,
            train_fraction: 0.8,
            width: DEFAULT_FEATURE_WIDTH,
            encoding: EncodingMode::Additive,
        }
    }
}

impl RunConfig {
    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(
            key: &str,
            value: &str,
            expected: &'static str,
        ) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::TypeMismatch {
                key: key.to_string(),
                expected,
                value: value.to_string(),
            })
        }

        match key {
            "corpus_dir" => self.corpus_dir = Some(PathBuf::from(value)),
            "store_path" => self.store_path = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "split" => self.split = value.to_string(),
            "seed" => self.seed = parse(key, value, "an unsigned integer")?,
            "pitch_embed_dim" => self.pitch_embed_dim = parse(key, value, "a positive integer")?,
            "duration_embed_dim" => {
                self.duration_embed_dim = parse(key, value, "a positive integer")?;
            }
            "hidden_dim" => self.hidden_dim = parse(key, value, "a positive integer")?,
            "seq_len" => self.seq_len = parse(key, value, "a positive integer")?,
            "learning_rate" => self.learning_rate = parse(key, value, "a number")?,
            "epochs" => self.epochs = parse(key, value, "a positive integer")?,
            "batch_size" => self.batch_size = parse(key, value, "a positive integer")?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value, "an integer")?,
            "stop_at_loss" => self.stop_at_loss = Some(parse(key, value, "a number")?),
            "temperature" => self.temperature = parse(key, value, "a number")?,
            "total_notes" => self.total_notes = Some(parse(key, value, "a positive integer")?),
            "segment_len" => self.segment_len = parse(key, value, "a positive integer")?,
            "reset_between_segments" => {
                self.reset_between_segments = parse(key, value, "true or false")?;
            }
            "lambda" => self.lambda = parse(key, value, "a number")?,
            "svm_epochs" => self.svm_epochs = parse(key, value, "a positive integer")?,
            "standardize" => self.standardize = parse(key, value, "true or false")?,
            "rounds" => self.rounds = parse(key, value, "a positive integer")?,
            "train_fraction" => self.train_fraction = parse(key, value, "a number")?,
            "width" => self.width = parse(key, value, "a positive integer")?,
            "encoding" => {
                self.encoding = match value {
                    "additive" => EncodingMode::Additive,
                    "concatenated" => EncodingMode::Concatenated,
                    _ => {
                        return Err(ConfigError::TypeMismatch {
                            key: key.to_string(),
                            expected: "additive or concatenated",
                            value: value.to_string(),
                        })
                    }
                };
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn require_corpus_dir(&self) -> Result<&Path, ConfigError> {
        self.corpus_dir.as_deref().ok_or(ConfigError::MissingRequired("corpus_dir"))
    }

    pub fn require_store_path(&self) -> Result<&Path, ConfigError> {
        self.store_path.as_deref().ok_or(ConfigError::MissingRequired("store_path"))
    }

    pub fn model_config(&self, pitch_vocab_size: usize, duration_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            pitch_vocab_size,
            duration_vocab_size,
            pitch_embed_dim: self.pitch_embed_dim,
            duration_embed_dim: self.duration_embed_dim,
            hidden_dim: self.hidden_dim,
            num_lstm_layers: 2,
            seq_len: self.seq_len,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            checkpoint_every: self.checkpoint_every,
            stop_at_loss: self.stop_at_loss,
            seed: self.seed,
        }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        let mut sampler = SamplerConfig::new(seed);
        sampler.temperature = self.temperature;
        sampler.total_notes = self.total_notes;
        sampler.segment_len = self.segment_len;
        sampler.reset_between_segments = self.reset_between_segments;
        sampler
    }

    pub fn svm_hyper(&self) -> SvmHyper {
        SvmHyper {
            lambda: self.lambda,
            epochs: self.svm_epochs,
            seed: self.seed,
            standardize: self.standardize,
        }
    }

    pub fn protocol(&self, dataset_mode: DatasetMode) -> EvalProtocol {
        EvalProtocol {
            rounds: self.rounds,
            train_fraction: self.train_fraction,
            dataset_mode,
            seed: self.seed,
        }
    }

    /// Every key and its resolved value, in declaration order.
    pub fn resolved_pairs(&self) -> Vec<(&'static str, String)> {
        fn opt<T: std::fmt::Display>(value: &Option<T>) -> String {
            value.as_ref().map_or_else(|| "none".into(), T::to_string)
        }
        vec![
            ("corpus_dir", opt(&self.corpus_dir.as_ref().map(|p| p.display().to_string()))),
            ("store_path", opt(&self.store_path.as_ref().map(|p| p.display().to_string()))),
            ("output_dir", self.output_dir.display().to_string()),
            ("split", self.split.clone()),
            ("seed", self.seed.to_string()),
            ("pitch_embed_dim", self.pitch_embed_dim.to_string()),
            ("duration_embed_dim", self.duration_embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("seq_len", self.seq_len.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("stop_at_loss", opt(&self.stop_at_loss)),
            ("temperature", self.temperature.to_string()),
            ("total_notes", opt(&self.total_notes)),
            ("segment_len", self.segment_len.to_string()),
            ("reset_between_segments", self.reset_between_segments.to_string()),
            ("lambda", self.lambda.to_string()),
            ("svm_epochs", self.svm_epochs.to_string()),
            ("standardize", self.standardize.to_string()),
            ("rounds", self.rounds.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("width", self.width.to_string()),
            ("encoding", self.encoding.to_string()),
        ]
    }

    pub fn log_resolved(&self) {
        let line: Vec<String> =
            self.resolved_pairs().iter().map(|(k, v)| format!("{k}={v}")).collect();
        log::info!("event=config {}", line.join(" "));
    }
}

/// Parse a config file body plus `key=value` override strings.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::MalformedLine {
            line: idx + 1,
            text: raw.to_string(),
        })?;
        config.apply(key.trim(), value.trim())?;
    }
    for raw in overrides {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| ConfigError::MalformedOverride(raw.clone()))?;
        config.apply(key.trim(), value.trim())?;
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_yields_all_defaults() {
        let config = parse_config("", &[]).unwrap();
        assert_eq!(config, RunConfig::default());
        assert_eq!(config.seed, 42);
        assert_eq!(config.epochs, 250);
        assert_eq!(config.width, 1200);
        assert_eq!(config.split, "Paganini");
    }

    #[test]
    fn overrides_beat_file_values_beat_defaults() {
        let text = "epochs = 250\nseed = 7\n";
        let config = parse_config(text, &["epochs=10".into()]).unwrap();
        assert_eq!(config.epochs, 10);
        assert_eq!(config.seed, 7);
        assert_eq!(config.batch_size, 32);
    }

    #[test]
    fn unknown_key_names_the_offender() {
        let err = parse_config("temprature = 1.0\n", &[]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("temprature".into()));
    }

    #[test]
    fn type_mismatch_reports_key_and_value() {
        let err = parse_config("epochs = fast\n", &[]).unwrap_err();
        assert_eq!(
            err,
            ConfigError::TypeMismatch {
                key: "epochs".into(),
                expected: "a positive integer",
                value: "fast".into(),
            }
        );
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# run settings\n\n  # indented comment\nhidden_dim = 128\n";
        let config = parse_config(text, &[]).unwrap();
        assert_eq!(config.hidden_dim, 128);
    }

    #[test]
    fn malformed_line_and_override_are_rejected() {
        let err = parse_config("epochs\n", &[]).unwrap_err();
        assert_eq!(err, ConfigError::MalformedLine { line: 1, text: "epochs".into() });
        let err = parse_config("", &["epochs".into()]).unwrap_err();
        assert_eq!(err, ConfigError::MalformedOverride("epochs".into()));
    }

    #[test]
    fn optional_keys_become_some() {
        let config =
            parse_config("stop_at_loss = 0.05\ntotal_notes = 500\n", &[]).unwrap();
        assert_eq!(config.stop_at_loss, Some(0.05));
        assert_eq!(config.total_notes, Some(500));
    }

    #[test]
    fn paths_are_optional_until_a_command_needs_them() {
        let config = parse_config("", &[]).unwrap();
        assert_eq!(
            config.require_corpus_dir().unwrap_err(),
            ConfigError::MissingRequired("corpus_dir")
        );
        assert_eq!(
            config.require_store_path().unwrap_err(),
            ConfigError::MissingRequired("store_path")
        );
        let config = parse_config("corpus_dir = corpus\nstore_path = store.bin\n", &[]).unwrap();
        assert_eq!(config.require_corpus_dir().unwrap(), Path::new("corpus"));
        assert_eq!(config.require_store_path().unwrap(), Path::new("store.bin"));
    }

    #[test]
    fn encoding_accepts_both_modes_only() {
        let config = parse_config("encoding = concatenated\n", &[]).unwrap();
        assert_eq!(config.encoding, EncodingMode::Concatenated);
        let err = parse_config("encoding = octal\n", &[]).unwrap_err();
        assert!(matches!(err, ConfigError::TypeMismatch { .. }));
    }

    #[test]
    fn domain_configs_inherit_the_shared_seed() {
        let config = parse_config("seed = 9\nlambda = 0.1\nrounds = 25\n", &[]).unwrap();
        let model = config.model_config(30, 12);
        assert_eq!(model.pitch_vocab_size, 30);
        assert_eq!(model.seed, 9);
        assert_eq!(model.epochs, 250);
        let hyper = config.svm_hyper();
        assert_eq!(hyper.lambda, 0.1);
        assert_eq!(hyper.seed, 9);
        let protocol = config.protocol(DatasetMode::Full);
        assert_eq!(protocol.rounds, 25);
        assert_eq!(protocol.seed, 9);
        let sampler = config.sampler_config(17);
        assert_eq!(sampler.seed, 17);
        assert_eq!(sampler.temperature, 1.0);
    }

    #[test]
    fn resolved_pairs_cover_every_key() {
        let config = RunConfig::default();
        let pairs = config.resolved_pairs();
        assert_eq!(pairs.len(), 25);
        assert!(pairs.contains(&("seed", "42".into())));
        assert!(pairs.contains(&("corpus_dir", "none".into())));
        assert!(pairs.contains(&("encoding", "additive".into())));
        for (key, value) in &pairs {
            let mut probe = RunConfig::default();
            if *value != "none" {
                probe.apply(key, value).unwrap();
            }
        }
    }
}
