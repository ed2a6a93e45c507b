//! Classification-rate protocols.
//!
//! A generated piece's rate is the percentage of K independently resampled
//! discriminators that label it "not by the composer": each round draws a
//! train_fraction of the corpus rows and of the other generated pieces,
//! trains a fresh SVM, and classifies the held-out target. Below 50% means
//! the discriminator is fooled more often than not.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{predict, train_svm, DiscriminatorError, SvmHyper};
use crate::corpus::{detokenize, CorpusStore, SplitRegistry};
use crate::features::{
    encode_piece, EncodingMode, FeatureRow, FeatureTable, DEFAULT_FEATURE_WIDTH,
};
use crate::midi_io::ScoreElement;
use crate::neural::caprice_number;
use crate::par::maybe_par_map;

/// Which corpus pieces count as positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetMode {
    /// Every piece in the store.
    Full,
    /// Only the pieces of the split under evaluation.
    Individual,
}

impl std::fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetMode::Full => "full",
            DatasetMode::Individual => "individual",
        })
    }
}

/// Monte-Carlo resampling parameters for [`classification_rate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub rounds: usize,
    pub train_fraction: f64,
    pub dataset_mode: DatasetMode,
    pub seed: u64,
}

impl EvalProtocol {
    pub fn new(dataset_mode: DatasetMode, seed: u64) -> Self {
        EvalProtocol {
            rounds: 100,
            train_fraction: 0.8,
            dataset_mode,
            seed,
        }
    }

    fn validate(&self) -> Result<(), DiscriminatorError> {
        if self.rounds < 1 {
            return Err(DiscriminatorError::InvalidProtocol(
                "rounds must be at least 1".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(DiscriminatorError::InvalidProtocol(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Everything [`evaluate_split`] needs besides the data.
#[derive(Debug, Clone)]
pub struct EvalRequest<'a> {
    pub split_name: &'a str,
    pub checkpoint_id: &'a str,
    pub encoding: EncodingMode,
    /// Feature row width pieces are padded or truncated to.
    pub width: usize,
    pub protocol: EvalProtocol,
    pub hyper: SvmHyper,
}

impl<'a> EvalRequest<'a> {
    pub fn new(
        split_name: &'a str,
        checkpoint_id: &'a str,
        dataset_mode: DatasetMode,
        seed: u64,
    ) -> Self {
        EvalRequest {
            split_name,
            checkpoint_id,
            encoding: EncodingMode::Additive,
            width: DEFAULT_FEATURE_WIDTH,
            protocol: EvalProtocol::new(dataset_mode, seed),
            hyper: SvmHyper::new(seed),
        }
    }
}

/// Per-piece rates for one split under one mode and encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split_name: String,
    pub dataset_mode: DatasetMode,
    pub encoding: EncodingMode,
    pub checkpoint_id: String,
    /// (piece id, rate in percent), in input order.
    pub rates: Vec<(String, f64)>,
    pub mean_rate: f64,
}

/// Mean-rate difference between a Full-mode and an Individual-mode report.
pub fn full_vs_individual_delta(full: &EvalReport, individual: &EvalReport) -> f64 {
    full.mean_rate - individual.mean_rate
}

/// Flatten reports to `piece_id,mode,encoding,rate_percent` CSV.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("piece_id,mode,encoding,checkpoint,rate_percent\n");
    for report in reports {
        for (id, rate) in &report.rates {
            out.push_str(&format!(
                "{id},{},{},{},{rate}\n",
                report.dataset_mode, report.encoding, report.checkpoint_id
            ));
        }
    }
    out
}

fn sample_rows(rows: &[FeatureRow], fraction: f64, rng: &mut ChaCha8Rng) -> Vec<FeatureRow> {
    let keep = ((rows.len() as f64 * fraction) as usize).max(1);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(rng);
    order.truncate(keep);
    order.sort_unstable();
    order.into_iter().map(|i| rows[i].clone()).collect()
}

fn check_labels(table: &FeatureTable, expected: i8) -> Result<(), DiscriminatorError> {
    for row in table.rows() {
        if row.label != expected {
            return Err(DiscriminatorError::MislabeledRow {
                piece_id: row.piece_id.clone(),
                label: row.label,
                expected,
            });
        }
    }
    Ok(())
}

/// Percentage of `protocol.rounds` resampled discriminators that classify
/// `target` as generated (label -1).
pub fn classification_rate(
    corpus_rows: &FeatureTable,
    generated_pool: &FeatureTable,
    target: &FeatureRow,
    protocol: &EvalProtocol,
    hyper: &SvmHyper,
) -> Result<f64, DiscriminatorError> {
    protocol.validate()?;
    if corpus_rows.rows().is_empty() || generated_pool.rows().is_empty() {
        return Err(DiscriminatorError::EmptyPool);
    }
    if generated_pool.width() != corpus_rows.width() {
        return Err(DiscriminatorError::WidthMismatch {
            expected: corpus_rows.width(),
            got: generated_pool.width(),
        });
    }
    if target.values.len() != corpus_rows.width() {
        return Err(DiscriminatorError::WidthMismatch {
            expected: corpus_rows.width(),
            got: target.values.len(),
        });
    }
    check_labels(corpus_rows, 1)?;
    check_labels(generated_pool, -1)?;
    if generated_pool
        .rows()
        .iter()
        .any(|r| r.piece_id == target.piece_id)
    {
        return Err(DiscriminatorError::TargetInPool(target.piece_id.clone()));
    }

    let round_seeds: Vec<u64> = (0..protocol.rounds as u64)
        .map(|r| protocol.seed ^ r.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .collect();
    let outcomes = maybe_par_map(&round_seeds, |&seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = sample_rows(corpus_rows.rows(), protocol.train_fraction, &mut rng);
        rows.extend(sample_rows(
            generated_pool.rows(),
            protocol.train_fraction,
            &mut rng,
        ));
        let table = FeatureTable::new(corpus_rows.width(), rows)?;
        let model = train_svm(&table, hyper)?;
        Ok::<bool, DiscriminatorError>(predict(&model, target)?.0 == -1)
    });
    let mut negatives = 0usize;
    for outcome in outcomes {
        if outcome? {
            negatives += 1;
        }
    }
    Ok(100.0 * negatives as f64 / protocol.rounds as f64)
}

/// Score every generated piece against the corpus positives selected by the
/// request's dataset mode, using the remaining generated pieces as the
/// negative pool.
pub fn evaluate_split(
    store: &CorpusStore,
    registry: &SplitRegistry,
    generated: &[(String, Vec<ScoreElement>)],
    request: &EvalRequest,
) -> Result<EvalReport, DiscriminatorError> {
    let numbers = registry.resolve(request.split_name)?;
    if generated.is_empty() {
        return Err(DiscriminatorError::EmptyPool);
    }

    let mut corpus_rows = Vec::new();
    for piece in &store.pieces {
        let keep = match request.protocol.dataset_mode {
            DatasetMode::Full => true,
            DatasetMode::Individual => {
                caprice_number(&piece.piece_id).is_some_and(|n| numbers.contains(&n))
            }
        };
        if keep {
            let elements = detokenize(piece, &store.pitch_vocab, &store.duration_vocab)?;
            corpus_rows.push(encode_piece(
                &elements,
                request.width,
                &piece.piece_id,
                1,
                request.encoding,
            )?);
        }
    }
    if corpus_rows.is_empty() {
        return Err(DiscriminatorError::EmptySplit(request.split_name.into()));
    }
    let corpus_table = FeatureTable::new(request.width, corpus_rows)?;

    let generated_rows: Vec<FeatureRow> = generated
        .iter()
        .map(|(id, elements)| encode_piece(elements, request.width, id, -1, request.encoding))
        .collect::<Result<_, _>>()?;

    let mut rates = Vec::with_capacity(generated_rows.len());
    for (i, target) in generated_rows.iter().enumerate() {
        let pool: Vec<FeatureRow> = generated_rows
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, row)| row.clone())
            .collect();
        if pool.is_empty() {
            return Err(DiscriminatorError::EmptyPool);
        }
        let pool_table = FeatureTable::new(request.width, pool)?;
        let rate = classification_rate(
            &corpus_table,
            &pool_table,
            target,
            &request.protocol,
            &request.hyper,
        )?;
        log::info!(
            "event=classification_rate piece_id={} mode={} encoding={} rate_percent={rate:.2}",
            target.piece_id,
            request.protocol.dataset_mode,
            request.encoding
        );
        rates.push((target.piece_id.clone(), rate));
    }
    let mean_rate = rates.iter().map(|(_, r)| r).sum::<f64>() / rates.len() as f64;

    Ok(EvalReport {
        split_name: request.split_name.to_string(),
        dataset_mode: request.protocol.dataset_mode,
        encoding: request.encoding,
        checkpoint_id: request.checkpoint_id.to_string(),
        rates,
        mean_rate,
    })
}
