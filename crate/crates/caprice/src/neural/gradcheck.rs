//! Central finite-difference verification of the backward pass.

use super::backward::backward;
use super::forward::{forward, loss};
use super::{init_params, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

/// Maximum relative error per parameter group, in declaration order.
///
/// Samples up to `n_per_group` coordinates of every tensor and compares the
/// analytic gradient against `(loss(θ+h) − loss(θ−h)) / 2h`. Relative error
/// is `|a−n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check_detailed(
    config: &ModelConfig,
    seed: u64,
    n_per_group: usize,
) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut params = init_params(config, seed);

    let pitch_ctx: Vec<u32> = (0..config.seq_len)
        .map(|_| rng.gen_range(0..config.pitch_vocab_size as u32))
        .collect();
    let duration_ctx: Vec<u32> = (0..config.seq_len)
        .map(|_| rng.gen_range(0..config.duration_vocab_size as u32))
        .collect();
    let target_pitch = rng.gen_range(1..config.pitch_vocab_size as u32);
    let target_duration = rng.gen_range(1..config.duration_vocab_size as u32);

    let trace = forward(&params, &pitch_ctx, &duration_ctx).expect("forward on check inputs");
    let analytic = backward(&params, &trace, target_pitch, target_duration)
        .expect("backward on check inputs");

    let mut report = Vec::with_capacity(15);
    for group in 0..analytic.tensors().len() {
        let name = analytic.tensors()[group].0;
        let len = analytic.tensors()[group].1.len();
        let mut worst = 0.0f64;
        for _ in 0..n_per_group.min(len) {
            let coord = rng.gen_range(0..len);
            let a = analytic.tensors()[group].1.data()[coord];

            let eval = |params: &super::ModelParams| {
                let t = forward(params, &pitch_ctx, &duration_ctx).unwrap();
                loss(&t, target_pitch, target_duration).unwrap()
            };
            let original = params.tensors()[group].1.data()[coord];
            params.tensors_mut()[group].1.data_mut()[coord] = original + STEP;
            let plus = eval(&params);
            params.tensors_mut()[group].1.data_mut()[coord] = original - STEP;
            let minus = eval(&params);
            params.tensors_mut()[group].1.data_mut()[coord] = original;

            let numeric = (plus - minus) / (2.0 * STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        report.push((name, worst));
    }
    report
}

/// Maximum relative error over every parameter group.
pub fn gradient_check(config: &ModelConfig, seed: u64, n_per_group: usize) -> f64 {
    gradient_check_detailed(config, seed, n_per_group)
        .into_iter()
        .map(|(_, e)| e)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_config() -> ModelConfig {
        let mut c = ModelConfig::new(5, 4);
        c.pitch_embed_dim = 3;
        c.duration_embed_dim = 3;
        c.hidden_dim = 6;
        c.seq_len = 4;
        c
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let max = gradient_check(&check_config(), 12, 8);
        assert!(max < 1e-4, "max relative error {max}");
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let report = gradient_check_detailed(&check_config(), 13, 12);
        for (name, err) in report {
            if name.starts_with("attn_") {
                assert!(err < 1e-4, "{name}: relative error {err}");
            }
        }
    }

    #[test]
    fn every_group_is_checked() {
        let report = gradient_check_detailed(&check_config(), 1, 2);
        assert_eq!(report.len(), 15);
        assert!(report.iter().all(|&(_, e)| e < 1e-4));
    }
}
