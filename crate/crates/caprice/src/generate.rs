//! Sampling new pieces from a trained model.
//!
//! Generation slides an L-token context window one step at a time: run the
//! forward pass, sample a pitch and a duration from the two heads, append,
//! slide. Work proceeds in fixed-length segments for bookkeeping (each
//! boundary is logged); by default no state is reset at a boundary since the
//! window itself carries all state, but [`SamplerConfig::reset_between_segments`]
//! clears the window to start-padding for comparison runs.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::corpus::{detokenize, CorpusError, TokenizedPiece, Vocabulary, START_ID};
use crate::midi_io::ScoreElement;
use crate::neural::{forward, ModelConfig, ModelParams, NeuralError};

/// Bounds for the piece length drawn when [`SamplerConfig::total_notes`] is unset.
pub const TOTAL_NOTES_RANGE: std::ops::RangeInclusive<usize> = 400..=1200;

/// Default number of notes written per segment.
pub const DEFAULT_SEGMENT_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("sampling distribution at step {step} places all mass on the start token")]
    DegenerateDistribution { step: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("diagnostics write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// After masking the start token no probability mass remains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("sampling distribution places all mass on the start token")]
pub struct DegenerateDistribution;

/// Knobs for one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Sampling temperature; 1.0 draws from the model distribution as-is.
    pub temperature: f64,
    /// Piece length in notes. Drawn uniformly from [`TOTAL_NOTES_RANGE`] when unset.
    pub total_notes: Option<usize>,
    /// Notes per segment; boundaries are logged.
    pub segment_len: usize,
    pub seed: u64,
    /// Optional (pitch ids, duration ids) prefix placed right-aligned in the
    /// initial context window.
    pub seed_tokens: Option<(Vec<u32>, Vec<u32>)>,
    /// Clear the context window to start-padding at each segment boundary.
    pub reset_between_segments: bool,
}

impl SamplerConfig {
    pub fn new(seed: u64) -> Self {
        SamplerConfig {
            temperature: 1.0,
            total_notes: None,
            segment_len: DEFAULT_SEGMENT_LEN,
            seed,
            seed_tokens: None,
            reset_between_segments: false,
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(GenerateError::InvalidConfig(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.total_notes == Some(0) {
            return Err(GenerateError::InvalidConfig(
                "total_notes must be at least 1".into(),
            ));
        }
        if self.segment_len == 0 {
            return Err(GenerateError::InvalidConfig(
                "segment_len must be at least 1".into(),
            ));
        }
        if let Some((p, d)) = &self.seed_tokens {
            if p.len() != d.len() {
                return Err(GenerateError::InvalidConfig(format!(
                    "seed_tokens pitch/duration lengths differ: {} vs {}",
                    p.len(),
                    d.len()
                )));
            }
        }
        Ok(())
    }
}

/// One sampled piece plus everything needed for the diagnostic plots.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPiece {
    pub elements: Vec<ScoreElement>,
    /// Row per step: the pitch head's distribution before sampling.
    pub pitch_distributions: Vec<Vec<f64>>,
    /// Row per step: the duration head's distribution before sampling.
    pub duration_distributions: Vec<Vec<f64>>,
    /// Row per step: attention weights over the L context positions.
    pub attention_matrix: Vec<Vec<f64>>,
    pub config: SamplerConfig,
    pub checkpoint_id: String,
}

/// Draw a token id from `probs` re-sharpened to `temperature`.
///
/// Equivalent to softmax(ln probs / T) with the start token masked to
/// probability 0 and the rest renormalized, i.e. weights p_i^(1/T) over the
/// masked support. The largest supported probability anchors the exponentials
/// so the arg-max never underflows, even at T near 0. `probs` must sum to 1
/// and `temperature` must be positive.
pub fn sample_token(
    probs: &[f64],
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<u32, DegenerateDistribution> {
    debug_assert!(temperature > 0.0, "temperature must be positive");
    let start = START_ID as usize;
    let anchor = probs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != start)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    if anchor <= 0.0 {
        return Err(DegenerateDistribution);
    }
    let ln_anchor = anchor.ln();
    let weights: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if i == start || p <= 0.0 {
                0.0
            } else {
                ((p.ln() - ln_anchor) / temperature).exp()
            }
        })
        .collect();
    let index = WeightedIndex::new(&weights)
        .map_err(|_| DegenerateDistribution)?
        .sample(rng);
    Ok(index as u32)
}

/// Sample a complete piece from trained parameters.
///
/// Bit-reproducible for a fixed (params, vocabularies, config) triple. The
/// returned matrices have one row per generated note.
pub fn generate(
    params: &ModelParams,
    model_config: &ModelConfig,
    pitch_vocab: &Vocabulary,
    duration_vocab: &Vocabulary,
    checkpoint_id: &str,
    sampler: &SamplerConfig,
) -> Result<GeneratedPiece, GenerateError> {
    sampler.validate()?;
    let window = model_config.seq_len;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let total = match sampler.total_notes {
        Some(n) => n,
        None => rng.gen_range(TOTAL_NOTES_RANGE),
    };

    let mut pitch_ctx = vec![START_ID; window];
    let mut duration_ctx = vec![START_ID; window];
    if let Some((pp, dp)) = &sampler.seed_tokens {
        for &id in pp {
            if id as usize >= pitch_vocab.len() {
                return Err(GenerateError::InvalidConfig(format!(
                    "seed pitch id {id} outside vocabulary of {}",
                    pitch_vocab.len()
                )));
            }
        }
        for &id in dp {
            if id as usize >= duration_vocab.len() {
                return Err(GenerateError::InvalidConfig(format!(
                    "seed duration id {id} outside vocabulary of {}",
                    duration_vocab.len()
                )));
            }
        }
        let keep = pp.len().min(window);
        let start = window - keep;
        pitch_ctx[start..].copy_from_slice(&pp[pp.len() - keep..]);
        duration_ctx[start..].copy_from_slice(&dp[dp.len() - keep..]);
    }

    let mut pitch_ids = Vec::with_capacity(total);
    let mut duration_ids = Vec::with_capacity(total);
    let mut pitch_distributions = Vec::with_capacity(total);
    let mut duration_distributions = Vec::with_capacity(total);
    let mut attention_matrix = Vec::with_capacity(total);

    for step in 0..total {
        if step % sampler.segment_len == 0 {
            log::info!(
                "event=segment segment={} step={} total={total}",
                step / sampler.segment_len,
                step
            );
            if sampler.reset_between_segments && step > 0 {
                pitch_ctx.fill(START_ID);
                duration_ctx.fill(START_ID);
            }
        }
        let trace = forward(params, &pitch_ctx, &duration_ctx)?;
        let pitch = sample_token(&trace.pitch_probs, sampler.temperature, &mut rng)
            .map_err(|_| GenerateError::DegenerateDistribution { step })?;
        let duration = sample_token(&trace.duration_probs, sampler.temperature, &mut rng)
            .map_err(|_| GenerateError::DegenerateDistribution { step })?;
        pitch_distributions.push(trace.pitch_probs);
        duration_distributions.push(trace.duration_probs);
        attention_matrix.push(trace.alpha);
        pitch_ids.push(pitch);
        duration_ids.push(duration);
        pitch_ctx.remove(0);
        pitch_ctx.push(pitch);
        duration_ctx.remove(0);
        duration_ctx.push(duration);
    }

    let piece = TokenizedPiece {
        piece_id: format!("generated-{}", sampler.seed),
        pitch_ids,
        duration_ids,
    };
    let elements = detokenize(&piece, pitch_vocab, duration_vocab)?;

    Ok(GeneratedPiece {
        elements,
        pitch_distributions,
        duration_distributions,
        attention_matrix,
        config: sampler.clone(),
        checkpoint_id: checkpoint_id.to_string(),
    })
}

fn write_matrix_csv(
    path: &Path,
    header: Option<String>,
    rows: &[Vec<f64>],
) -> Result<(), std::io::Error> {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h);
        out.push('\n');
    }
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Write `distributions.csv` (pitch head, header = vocabulary tokens) and
/// `attention.csv` (no header, L columns) under `out_dir`.
///
/// Values carry 9 significant digits; output is deterministic for a given
/// piece, so re-exporting after a checkpoint round trip is byte-identical.
pub fn export_diagnostics(
    piece: &GeneratedPiece,
    pitch_vocab: &Vocabulary,
    out_dir: &Path,
) -> Result<(), GenerateError> {
    std::fs::create_dir_all(out_dir)?;
    write_matrix_csv(
        &out_dir.join("distributions.csv"),
        Some(pitch_vocab.tokens().join(",")),
        &piece.pitch_distributions,
    )?;
    write_matrix_csv(&out_dir.join("attention.csv"), None, &piece.attention_matrix)?;
    Ok(())
}
