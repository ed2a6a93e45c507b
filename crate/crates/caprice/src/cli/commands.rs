//! Subcommand implementations.
//!
//! Every command resolves its configuration, does its work, and drops a
//! `manifest-<command>.json` in the output directory recording the resolved
//! config, SHA-256 digests of every input file, and the files it wrote, so
//! any artifact can be traced back to exactly what produced it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::CliError;
use crate::corpus::{
    deserialize_store, detokenize, serialize_store, tokenize, CorpusStore, SplitRegistry,
};
use crate::discriminator::{
    classification_rate, evaluate_split, full_vs_individual_delta, reports_to_csv, DatasetMode,
    EvalRequest,
};
use crate::features::{encode_piece, read_feature_csv, write_feature_csv, FeatureRow, FeatureTable};
use crate::generate::{export_diagnostics, generate};
use crate::midi_io::{
    elements_to_midi, extract_elements, parse_midi, write_midi, ScoreElement, DEFAULT_GRID,
};
use crate::neural::{
    checkpoint_id, gradient_check_detailed, load_checkpoint, save_checkpoint, train_with_callback,
    Checkpoint, ModelConfig,
};

const GENERATED_TPQ: u16 = 480;
const GENERATED_TEMPO: u32 = 500_000;
const HISTORY_TAIL_LEN: usize = 32;
const GRADCHECK_SEED: u64 = 13;
const GRADCHECK_SAMPLES: usize = 16;
const GRADCHECK_LIMIT: f64 = 1e-4;

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
}

fn sha256_hex(data: &[u8]) -> String {
    let digest = Sha256::digest(data);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let data = read_bytes(path)?;
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&data) })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, data: &[u8]) -> Result<(), CliError> {
    fs::write(path, data).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_manifest(
    config: &RunConfig,
    command: &str,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
) -> Result<(), CliError> {
    ensure_dir(&config.output_dir)?;
    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs,
        outputs,
    };
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
    let path = config.output_dir.join(format!("manifest-{command}.json"));
    write_bytes(&path, body.as_bytes())?;
    log::info!("event=manifest command={command} path={}", path.display());
    Ok(())
}

fn read_store(config: &RunConfig) -> Result<CorpusStore, CliError> {
    let path = config.require_store_path()?;
    Ok(deserialize_store(&read_bytes(path)?)?)
}

/// File-stem identifier restricted to `[A-Za-z0-9_-]`.
fn sanitize_id(stem: &str) -> String {
    let cleaned: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    if cleaned.is_empty() {
        "piece".into()
    } else {
        cleaned
    }
}

struct LoadedPiece {
    id: String,
    elements: Vec<ScoreElement>,
    digest: FileDigest,
}

/// Parse every `.mid`/`.midi` file in `dir`, sorted by file name.
fn load_midi_dir(dir: &Path) -> Result<Vec<LoadedPiece>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|entry| entry.path())
        .filter(|path| {
            path.extension()
                .and_then(|ext| ext.to_str())
                .is_some_and(|ext| ext.eq_ignore_ascii_case("mid") || ext.eq_ignore_ascii_case("midi"))
        })
        .collect();
    paths.sort();
    let mut pieces = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = read_bytes(&path)?;
        let doc = parse_midi(&bytes)?;
        let elements = extract_elements(&doc, DEFAULT_GRID)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("piece");
        let id = sanitize_id(stem);
        if pieces.iter().any(|p: &LoadedPiece| p.id == id) {
            return Err(CliError::Data(format!("duplicate piece id {id:?} in {}", dir.display())));
        }
        pieces.push(LoadedPiece {
            id,
            elements,
            digest: FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) },
        });
    }
    Ok(pieces)
}

/// Build the token store from the corpus directory.
///
/// `corpus_dir/manifest.csv` maps pieces to files, one `caprice_number,filename`
/// per line; `#` comments and blank lines are skipped.
pub fn run_ingest(config: &RunConfig) -> Result<(), CliError> {
    let corpus_dir = config.require_corpus_dir()?;
    let store_path = config.require_store_path()?;
    let manifest_path = corpus_dir.join("manifest.csv");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?;

    let mut store = CorpusStore::new(DEFAULT_GRID);
    let mut inputs = vec![FileDigest {
        path: manifest_path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    }];
    let mut seen = std::collections::BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (number, filename) = line.split_once(',').ok_or_else(|| {
            CliError::Data(format!(
                "{} line {}: expected `caprice_number,filename`",
                manifest_path.display(),
                idx + 1
            ))
        })?;
        let number: u8 = number.trim().parse().map_err(|_| {
            CliError::Data(format!(
                "{} line {}: bad caprice number {number:?}",
                manifest_path.display(),
                idx + 1
            ))
        })?;
        if !seen.insert(number) {
            return Err(CliError::Data(format!("caprice number {number} listed twice")));
        }
        let path = corpus_dir.join(filename.trim());
        let bytes = read_bytes(&path)?;
        let doc = parse_midi(&bytes)?;
        let elements = extract_elements(&doc, store.grid)?;
        let piece_id = format!("caprice_{number:02}");
        let piece = tokenize(
            &piece_id,
            &elements,
            &mut store.pitch_vocab,
            &mut store.duration_vocab,
            true,
        )?;
        log::info!(
            "event=ingest piece_id={piece_id} file={} elements={} tokens={}",
            path.display(),
            elements.len(),
            piece.pitch_ids.len()
        );
        inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        store.pieces.push(piece);
    }
    if store.pieces.is_empty() {
        return Err(CliError::Data(format!("{} lists no pieces", manifest_path.display())));
    }

    let bytes = serialize_store(&store);
    if let Some(parent) = store_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_bytes(store_path, &bytes)?;
    log::info!(
        "event=ingest_done pieces={} pitch_vocab={} duration_vocab={} store={}",
        store.pieces.len(),
        store.pitch_vocab.len(),
        store.duration_vocab.len(),
        store_path.display()
    );
    write_manifest(config, "ingest", inputs, vec![store_path.display().to_string()])
}

/// Train on the configured split, writing periodic and final checkpoints.
pub fn run_train(config: &RunConfig) -> Result<(), CliError> {
    let store_path = config.require_store_path()?;
    let store = read_store(config)?;
    let registry = SplitRegistry::new();
    let split = registry.resolve(&config.split)?.clone();
    let model_config = config.model_config(store.pitch_vocab.len(), store.duration_vocab.len());
    ensure_dir(&config.output_dir)?;

    let mut outputs = Vec::new();
    let mut tail: Vec<f64> = Vec::new();
    let mut save_error: Option<CliError> = None;
    let (params, history) = train_with_callback(&store, &split, &model_config, |report| {
        tail.push(report.mean_loss);
        if tail.len() > HISTORY_TAIL_LEN {
            tail.remove(0);
        }
        let due = config.checkpoint_every > 0
            && (report.epoch + 1) % config.checkpoint_every == 0;
        if due && save_error.is_none() {
            let snapshot = Checkpoint {
                config: model_config.clone(),
                epoch: report.epoch,
                history_tail: tail.clone(),
                params: report.params.clone(),
            };
            let bytes = save_checkpoint(&snapshot);
            let path = config.output_dir.join(format!("checkpoint-{:05}.bin", report.epoch + 1));
            match fs::write(&path, &bytes) {
                Ok(()) => {
                    log::info!(
                        "event=checkpoint epoch={} id={} path={}",
                        report.epoch,
                        checkpoint_id(&bytes),
                        path.display()
                    );
                    outputs.push(path.display().to_string());
                }
                Err(e) => {
                    log::error!("event=checkpoint_error path={} error={e:?}", path.display());
                    save_error = Some(CliError::Data(format!("{}: {e}", path.display())));
                }
            }
        }
        Ok(())
    })?;
    if let Some(err) = save_error {
        return Err(err);
    }

    let final_epoch = history.len().saturating_sub(1);
    let final_tail: Vec<f64> =
        history.iter().rev().take(HISTORY_TAIL_LEN).rev().copied().collect();
    let snapshot = Checkpoint {
        config: model_config,
        epoch: final_epoch,
        history_tail: final_tail,
        params,
    };
    let bytes = save_checkpoint(&snapshot);
    let id = checkpoint_id(&bytes);
    let final_path = config.output_dir.join("checkpoint-final.bin");
    write_bytes(&final_path, &bytes)?;
    outputs.push(final_path.display().to_string());
    let final_loss = history.last().copied().unwrap_or(f64::NAN);
    log::info!(
        "event=train_done epochs={} final_loss={final_loss:.6} id={id} path={}",
        history.len(),
        final_path.display()
    );
    println!("{id}");

    let inputs = vec![digest_file(store_path)?];
    write_manifest(config, "train", inputs, outputs)
}

/// Sample `count` pieces from a checkpoint into MIDI files plus diagnostics.
pub fn run_generate(config: &RunConfig, checkpoint: &Path, count: usize) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let store_path = config.require_store_path()?;
    let store = read_store(config)?;
    let bytes = read_bytes(checkpoint)?;
    let id = checkpoint_id(&bytes);
    let loaded = load_checkpoint(&bytes)?;
    if loaded.config.pitch_vocab_size != store.pitch_vocab.len()
        || loaded.config.duration_vocab_size != store.duration_vocab.len()
    {
        return Err(CliError::Data(format!(
            "checkpoint vocabularies ({}, {}) do not match store ({}, {})",
            loaded.config.pitch_vocab_size,
            loaded.config.duration_vocab_size,
            store.pitch_vocab.len(),
            store.duration_vocab.len()
        )));
    }
    ensure_dir(&config.output_dir)?;

    let mut outputs = Vec::new();
    for index in 0..count {
        let sampler = config.sampler_config(config.seed.wrapping_add(index as u64));
        let piece = generate(
            &loaded.params,
            &loaded.config,
            &store.pitch_vocab,
            &store.duration_vocab,
            &id,
            &sampler,
        )?;
        let piece_id = format!("generated-{}", sampler.seed);
        let doc = elements_to_midi(&piece.elements, GENERATED_TPQ, GENERATED_TEMPO)?;
        let midi_path = config.output_dir.join(format!("{piece_id}.mid"));
        write_bytes(&midi_path, &write_midi(&doc)?)?;
        let diag_dir = config.output_dir.join("diagnostics").join(&piece_id);
        export_diagnostics(&piece, &store.pitch_vocab, &diag_dir)?;
        log::info!(
            "event=generate piece_id={piece_id} notes={} temperature={} path={}",
            piece.elements.len(),
            sampler.temperature,
            midi_path.display()
        );
        outputs.push(midi_path.display().to_string());
        outputs.push(diag_dir.display().to_string());
    }

    let inputs = vec![digest_file(checkpoint)?, digest_file(store_path)?];
    write_manifest(config, "generate", inputs, outputs)
}

/// Encode store pieces (label +1) and optional generated MIDI (label -1)
/// into one feature CSV.
pub fn run_encode(config: &RunConfig, generated: Option<&Path>) -> Result<(), CliError> {
    let store_path = config.require_store_path()?;
    let store = read_store(config)?;
    let mut rows: Vec<FeatureRow> = Vec::new();
    for piece in &store.pieces {
        let elements = detokenize(piece, &store.pitch_vocab, &store.duration_vocab)?;
        rows.push(encode_piece(&elements, config.width, &piece.piece_id, 1, config.encoding)?);
    }
    let mut inputs = vec![digest_file(store_path)?];
    if let Some(dir) = generated {
        for piece in load_midi_dir(dir)? {
            rows.push(encode_piece(&piece.elements, config.width, &piece.id, -1, config.encoding)?);
            inputs.push(piece.digest);
        }
    }
    let table = FeatureTable::new(config.width, rows)?;
    ensure_dir(&config.output_dir)?;
    let csv_path = config.output_dir.join("features.csv");
    write_feature_csv(&table, &csv_path)?;
    log::info!(
        "event=encode rows={} width={} encoding={} path={}",
        table.rows().len(),
        config.width,
        config.encoding,
        csv_path.display()
    );
    write_manifest(config, "encode", inputs, vec![csv_path.display().to_string()])
}

/// Rows of one label from a feature CSV, so a single mixed file can serve as
/// both the corpus table and the pool.
fn labeled_rows(path: &Path, label: i8) -> Result<FeatureTable, CliError> {
    let table = read_feature_csv(path)?;
    let width = table.width();
    let rows: Vec<FeatureRow> =
        table.rows().iter().filter(|r| r.label == label).cloned().collect();
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{} has no label {label} rows",
            path.display()
        )));
    }
    Ok(FeatureTable::new(width, rows)?)
}

/// Score one MIDI piece against corpus and pool feature tables.
pub fn run_classify(
    config: &RunConfig,
    features: &Path,
    pool: &Path,
    target: &Path,
) -> Result<(), CliError> {
    let corpus = labeled_rows(features, 1)?;
    let pool_table = labeled_rows(pool, -1)?;
    let bytes = read_bytes(target)?;
    let doc = parse_midi(&bytes)?;
    let elements = extract_elements(&doc, DEFAULT_GRID)?;
    let stem = target.file_stem().and_then(|s| s.to_str()).unwrap_or("piece");
    let id = sanitize_id(stem);
    let row = encode_piece(&elements, corpus.width(), &id, -1, config.encoding)?;

    let rate = classification_rate(
        &corpus,
        &pool_table,
        &row,
        &config.protocol(DatasetMode::Full),
        &config.svm_hyper(),
    )?;
    log::info!("event=classify target={id} rounds={} rate_percent={rate:.2}", config.rounds);
    println!("{rate:.2}");

    let inputs = vec![
        digest_file(features)?,
        digest_file(pool)?,
        FileDigest { path: target.display().to_string(), sha256: sha256_hex(&bytes) },
    ];
    write_manifest(config, "classify", inputs, Vec::new())
}

/// Run the resampled-discriminator protocol in both dataset modes and write
/// the per-piece rates as CSV.
pub fn run_evaluate(
    config: &RunConfig,
    generated: &Path,
    checkpoint: Option<&Path>,
) -> Result<(), CliError> {
    let store_path = config.require_store_path()?;
    let store = read_store(config)?;
    let registry = SplitRegistry::new();
    let loaded = load_midi_dir(generated)?;
    let mut inputs = vec![digest_file(store_path)?];
    let checkpoint_label = match checkpoint {
        Some(path) => {
            let bytes = read_bytes(path)?;
            inputs.push(FileDigest {
                path: path.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
            checkpoint_id(&bytes)
        }
        None => "unspecified".into(),
    };
    let pieces: Vec<(String, Vec<ScoreElement>)> =
        loaded.iter().map(|p| (p.id.clone(), p.elements.clone())).collect();
    inputs.extend(loaded.into_iter().map(|p| p.digest));

    let mut reports = Vec::new();
    for mode in [DatasetMode::Full, DatasetMode::Individual] {
        let request = EvalRequest {
            split_name: &config.split,
            checkpoint_id: &checkpoint_label,
            encoding: config.encoding,
            width: config.width,
            protocol: config.protocol(mode),
            hyper: config.svm_hyper(),
        };
        reports.push(evaluate_split(&store, &registry, &pieces, &request)?);
    }
    let delta = full_vs_individual_delta(&reports[0], &reports[1]);
    log::info!(
        "event=evaluate split={} pieces={} full_mean={:.2} individual_mean={:.2} delta={:.2}",
        config.split,
        pieces.len(),
        reports[0].mean_rate,
        reports[1].mean_rate,
        delta
    );
    println!(
        "full={:.2} individual={:.2} delta={:.2}",
        reports[0].mean_rate, reports[1].mean_rate, delta
    );

    ensure_dir(&config.output_dir)?;
    let csv_path = config.output_dir.join("evaluation.csv");
    write_bytes(&csv_path, reports_to_csv(&reports).as_bytes())?;
    write_manifest(config, "evaluate", inputs, vec![csv_path.display().to_string()])
}

/// Compare analytic gradients against central finite differences on a small
/// fixed configuration; exits non-zero when any group drifts past 1e-4.
pub fn run_gradcheck(config: &RunConfig) -> Result<(), CliError> {
    let tiny = ModelConfig {
        pitch_vocab_size: 5,
        duration_vocab_size: 4,
        pitch_embed_dim: 3,
        duration_embed_dim: 3,
        hidden_dim: 6,
        num_lstm_layers: 2,
        seq_len: 4,
        learning_rate: 0.001,
        epochs: 1,
        batch_size: 1,
        checkpoint_every: 0,
        stop_at_loss: None,
        seed: 0,
    };
    let groups = gradient_check_detailed(&tiny, GRADCHECK_SEED, GRADCHECK_SAMPLES);
    let mut worst = 0.0f64;
    for (group, err) in &groups {
        log::info!("event=gradcheck group={group} max_rel_err={err:.3e}");
        worst = worst.max(*err);
    }
    println!("{worst:.3e}");
    write_manifest(config, "gradcheck", Vec::new(), Vec::new())?;
    if worst >= GRADCHECK_LIMIT {
        return Err(CliError::Numeric(format!(
            "gradient check failed: max relative error {worst:.3e} >= {GRADCHECK_LIMIT:.0e}"
        )));
    }
    Ok(())
}
