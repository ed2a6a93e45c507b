//! Linear SVM discriminator.
//!
//! Trained on Note.Duration feature rows by hinge-loss subgradient descent
//! with the 1/(λt) step schedule: cheap, dependency-free, and deterministic
//! for a fixed seed. The bias is unregularized and feature columns are
//! standardized by default because raw values mix magnitudes (a lone note
//! near 60 against chord products in the hundreds of thousands).

mod eval;

pub use eval::{
    classification_rate, evaluate_split, full_vs_individual_delta, reports_to_csv, DatasetMode,
    EvalProtocol, EvalReport, EvalRequest,
};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::features::{FeatureError, FeatureRow, FeatureTable};

#[derive(Debug, Error)]
pub enum DiscriminatorError {
    #[error("training rows must contain both labels")]
    SingleClassInput,
    #[error("non-finite feature in {0}")]
    NonFiniteFeature(String),
    #[error("row width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("evaluation pool is empty")]
    EmptyPool,
    #[error("target piece {0} appears in the pool")]
    TargetInPool(String),
    #[error("row {piece_id} carries label {label}, expected {expected}")]
    MislabeledRow {
        piece_id: String,
        label: i8,
        expected: i8,
    },
    #[error("split {0} selects no corpus pieces")]
    EmptySplit(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("not a discriminator model file")]
    BadMagic,
    #[error("unsupported model version {0}")]
    VersionMismatch(u16),
    #[error("corrupt model payload: {0}")]
    CorruptPayload(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    /// Regularization strength λ in λ/2·|w|² + mean hinge loss.
    pub lambda: f64,
    /// Full passes over the shuffled training rows.
    pub epochs: usize,
    pub seed: u64,
    /// Scale columns to mean 0 / stdev 1 (fit on the training rows).
    pub standardize: bool,
}

impl SvmHyper {
    pub fn new(seed: u64) -> Self {
        SvmHyper {
            lambda: 1e-3,
            epochs: 200,
            seed,
            standardize: true,
        }
    }
}

/// A trained linear discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-column centering; all zeros when standardization was off.
    pub means: Vec<f64>,
    /// Per-column scale; zero-variance columns get 1, all ones when off.
    pub stdevs: Vec<f64>,
    pub hyper: SvmHyper,
    pub positive_rows: usize,
    pub negative_rows: usize,
}

fn standardized(row: &[f64], means: &[f64], stdevs: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(means)
        .zip(stdevs)
        .map(|((&x, &m), &s)| (x - m) / s)
        .collect()
}

/// Minimize λ/2·|w|² + mean hinge loss over the table by seeded-shuffle
/// subgradient descent with step 1/(λt); the bias is left unregularized.
pub fn train_svm(table: &FeatureTable, hyper: &SvmHyper) -> Result<SvmModel, DiscriminatorError> {
    let rows = table.rows();
    let width = table.width();
    let positive_rows = rows.iter().filter(|r| r.label == 1).count();
    let negative_rows = rows.len() - positive_rows;
    if positive_rows == 0 || negative_rows == 0 {
        return Err(DiscriminatorError::SingleClassInput);
    }

    let (means, stdevs) = if hyper.standardize {
        let m = rows.len() as f64;
        let mut means = vec![0.0; width];
        let mut stdevs = vec![1.0; width];
        for j in 0..width {
            let column = rows.iter().map(|r| r.values[j]);
            let min = column.clone().fold(f64::INFINITY, f64::min);
            let max = column.clone().fold(f64::NEG_INFINITY, f64::max);
            if min == max {
                // Constant column: center it but leave the scale at 1.
                means[j] = min;
                continue;
            }
            let mean = column.clone().sum::<f64>() / m;
            let variance = column.map(|x| (x - mean) * (x - mean)).sum::<f64>() / m;
            means[j] = mean;
            stdevs[j] = variance.sqrt();
        }
        (means, stdevs)
    } else {
        (vec![0.0; width], vec![1.0; width])
    };

    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| standardized(&r.values, &means, &stdevs))
        .collect();
    let labels: Vec<f64> = rows.iter().map(|r| f64::from(r.label)).collect();

    let mut w = vec![0.0; width];
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut t = 0u64;
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (hyper.lambda * t as f64);
            let margin = labels[i] * (dot(&w, &scaled[i]) + b);
            let shrink = 1.0 - eta * hyper.lambda;
            for wj in &mut w {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, &xj) in w.iter_mut().zip(&scaled[i]) {
                    *wj += eta * labels[i] * xj;
                }
                b += eta * labels[i];
            }
        }
    }

    Ok(SvmModel {
        weights: w,
        bias: b,
        means,
        stdevs,
        hyper: hyper.clone(),
        positive_rows,
        negative_rows,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Classify one row: label is the sign of the score with 0 mapped to +1,
/// the margin is the raw score.
pub fn predict(model: &SvmModel, row: &FeatureRow) -> Result<(i8, f64), DiscriminatorError> {
    if row.values.len() != model.weights.len() {
        return Err(DiscriminatorError::WidthMismatch {
            expected: model.weights.len(),
            got: row.values.len(),
        });
    }
    if row.values.iter().any(|v| !v.is_finite()) {
        return Err(DiscriminatorError::NonFiniteFeature(row.piece_id.clone()));
    }
    let x = standardized(&row.values, &model.means, &model.stdevs);
    let score = dot(&model.weights, &x) + model.bias;
    Ok((if score >= 0.0 { 1 } else { -1 }, score))
}

/// λ/2·|w|² + mean hinge loss of the model on the table, in the model's
/// (possibly standardized) feature space.
pub fn objective(model: &SvmModel, table: &FeatureTable) -> f64 {
    let reg = 0.5 * model.hyper.lambda * dot(&model.weights, &model.weights);
    let hinge: f64 = table
        .rows()
        .iter()
        .map(|r| {
            let x = standardized(&r.values, &model.means, &model.stdevs);
            let score = dot(&model.weights, &x) + model.bias;
            (1.0 - f64::from(r.label) * score).max(0.0)
        })
        .sum();
    reg + hinge / table.rows().len() as f64
}

const MAGIC: &[u8; 4] = b"PGNS";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    hyper: SvmHyper,
    positive_rows: usize,
    negative_rows: usize,
    width: usize,
}

fn put_vec(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&u32::try_from(values.len()).expect("desk-scale width").to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize a model to the "PGNS" container.
pub fn save_svm(model: &SvmModel) -> Vec<u8> {
    let meta = serde_json::to_vec(&ModelMeta {
        hyper: model.hyper.clone(),
        positive_rows: model.positive_rows,
        negative_rows: model.negative_rows,
        width: model.weights.len(),
    })
    .expect("meta serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(meta.len()).expect("small meta").to_le_bytes());
    out.extend_from_slice(&meta);
    put_vec(&mut out, &model.weights);
    out.extend_from_slice(&model.bias.to_le_bytes());
    put_vec(&mut out, &model.means);
    put_vec(&mut out, &model.stdevs);
    out
}

struct Reader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DiscriminatorError> {
        if self.at + n > self.data.len() {
            return Err(DiscriminatorError::CorruptPayload(format!(
                "truncated at byte {}",
                self.at
            )));
        }
        let slice = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, DiscriminatorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DiscriminatorError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec(&mut self, expected: usize) -> Result<Vec<f64>, DiscriminatorError> {
        let len = self.u32()? as usize;
        if len != expected {
            return Err(DiscriminatorError::CorruptPayload(format!(
                "vector length {len}, expected {expected}"
            )));
        }
        (0..len).map(|_| self.f64()).collect()
    }
}

/// Inverse of [`save_svm`] with shape and finiteness validation.
pub fn load_svm(data: &[u8]) -> Result<SvmModel, DiscriminatorError> {
    let mut r = Reader { data, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(DiscriminatorError::BadMagic);
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(DiscriminatorError::VersionMismatch(version));
    }
    let meta_len = r.u32()? as usize;
    let meta: ModelMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| DiscriminatorError::CorruptPayload(format!("meta: {e}")))?;
    let weights = r.vec(meta.width)?;
    let bias = r.f64()?;
    let means = r.vec(meta.width)?;
    let stdevs = r.vec(meta.width)?;
    if r.at != data.len() {
        return Err(DiscriminatorError::CorruptPayload(format!(
            "{} trailing bytes",
            data.len() - r.at
        )));
    }
    if weights.iter().chain(&means).chain(&stdevs).any(|v| !v.is_finite()) || !bias.is_finite() {
        return Err(DiscriminatorError::CorruptPayload(
            "non-finite parameter".into(),
        ));
    }
    if stdevs.iter().any(|&s| s <= 0.0) {
        return Err(DiscriminatorError::CorruptPayload(
            "non-positive stdev".into(),
        ));
    }
    Ok(SvmModel {
        weights,
        bias,
        means,
        stdevs,
        hyper: meta.hyper,
        positive_rows: meta.positive_rows,
        negative_rows: meta.negative_rows,
    })
}

/// Two seeded Gaussian blobs as a labeled feature table: positives around
/// `positive_mean`, negatives around `negative_mean`, both with the given
/// per-coordinate spread.
pub fn gaussian_blobs(
    seed: u64,
    per_class: usize,
    positive_mean: (f64, f64),
    negative_mean: (f64, f64),
    sigma: f64,
) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, sigma).expect("finite sigma");
    let mut rows = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        rows.push(FeatureRow {
            piece_id: format!("pos_{i}"),
            label: 1,
            values: vec![
                positive_mean.0 + normal.sample(&mut rng),
                positive_mean.1 + normal.sample(&mut rng),
            ],
        });
    }
    for i in 0..per_class {
        rows.push(FeatureRow {
            piece_id: format!("neg_{i}"),
            label: -1,
            values: vec![
                negative_mean.0 + normal.sample(&mut rng),
                negative_mean.1 + normal.sample(&mut rng),
            ],
        });
    }
    FeatureTable::new(2, rows).expect("blob coordinates are positive at desk-scale means")
}
