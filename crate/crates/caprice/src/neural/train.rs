//! Epoch loop: seeded shuffling, mini-batch gradient averaging, Adam
//! updates, and per-epoch loss history.

use super::adam::{apply_update, OptimizerState};
use super::backward::backward;
use super::forward::{forward, loss};
use super::{init_params, ModelConfig, ModelParams, NeuralError};
use crate::corpus::{make_windows, CorpusStore, TrainingWindow};
use crate::par::maybe_par_map;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::collections::BTreeSet;

/// Snapshot handed to the epoch callback.
pub struct EpochReport<'a> {
    /// Zero-based epoch index.
    pub epoch: usize,
    pub mean_loss: f64,
    pub params: &'a ModelParams,
}

/// Caprice number encoded in a piece id, read as its trailing digits
/// (`caprice_07` → 7).
pub fn caprice_number(piece_id: &str) -> Option<u8> {
    let digits: Vec<char> = piece_id
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect();
    let number: String = digits.into_iter().rev().collect();
    number.parse().ok()
}

/// Train on the pieces selected by `split`. Returns the final parameters
/// and one mean loss per epoch.
pub fn train(
    store: &CorpusStore,
    split: &BTreeSet<u8>,
    config: &ModelConfig,
) -> Result<(ModelParams, Vec<f64>), NeuralError> {
    train_with_callback(store, split, config, |_| Ok(()))
}

/// [`train`] with a per-epoch callback, called after each epoch's updates;
/// the caller decides whether to write checkpoints.
pub fn train_with_callback(
    store: &CorpusStore,
    split: &BTreeSet<u8>,
    config: &ModelConfig,
    mut on_epoch: impl FnMut(EpochReport) -> Result<(), NeuralError>,
) -> Result<(ModelParams, Vec<f64>), NeuralError> {
    config.validate()?;
    let selected: Vec<_> = store
        .pieces
        .iter()
        .filter(|p| caprice_number(&p.piece_id).is_some_and(|n| split.contains(&n)))
        .collect();
    if selected.is_empty() {
        return Err(NeuralError::EmptySplit);
    }

    let windows: Vec<TrainingWindow> = selected
        .iter()
        .flat_map(|p| make_windows(p, config.seq_len))
        .collect();
    log::info!(
        "event=train_start pieces={} windows={} epochs={} seed={}",
        selected.len(),
        windows.len(),
        config.epochs,
        config.seed
    );

    let mut params = init_params(config, config.seed);
    let mut opt = OptimizerState::new(&params);
    let mut shuffle_rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let results = maybe_par_map(&batch, |w| {
                let trace = forward(&params, &w.pitch_ctx, &w.duration_ctx)?;
                let l = loss(&trace, w.target_pitch, w.target_duration)?;
                let g = backward(&params, &trace, w.target_pitch, w.target_duration)?;
                Ok::<_, NeuralError>((l, g))
            });

            let mut grads = params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for result in results {
                let (l, g) = result?;
                loss_sum += l;
                grads.add_scaled(&g, scale);
            }
            apply_update(&mut params, &grads, &mut opt, config.learning_rate)?;
        }

        let mean_loss = loss_sum / windows.len() as f64;
        if !mean_loss.is_finite() {
            return Err(NeuralError::NonFiniteLoss(epoch));
        }
        history.push(mean_loss);
        log::info!("event=epoch epoch={epoch} mean_loss={mean_loss:.6}");
        on_epoch(EpochReport { epoch, mean_loss, params: &params })?;

        if config.stop_at_loss.is_some_and(|target| mean_loss < target) {
            log::info!("event=early_stop epoch={epoch} mean_loss={mean_loss:.6}");
            break;
        }
    }
    Ok((params, history))
}
