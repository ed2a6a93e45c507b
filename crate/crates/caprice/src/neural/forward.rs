//! Forward pass: embeddings, two LSTM layers, additive attention over the
//! second layer's hidden states, and the two softmax heads. Every
//! intermediate needed by the backward pass is cached in the trace.

use super::tensor::{dot, vecmat, Tensor};
use super::{ModelParams, NeuralError};

/// Probabilities are clamped to at least this before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax with temperature.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>, NeuralError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(NeuralError::NonPositiveTemperature(temperature));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFiniteInput("softmax"));
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations for one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub gate_i: Vec<Vec<f64>>,
    pub gate_f: Vec<Vec<f64>>,
    pub gate_g: Vec<Vec<f64>>,
    pub gate_o: Vec<Vec<f64>>,
    pub tanh_c: Vec<Vec<f64>>,
}

impl LayerTrace {
    fn with_capacity(steps: usize) -> Self {
        let v = || Vec::with_capacity(steps);
        LayerTrace {
            h: v(),
            c: v(),
            gate_i: v(),
            gate_f: v(),
            gate_g: v(),
            gate_o: v(),
            tanh_c: v(),
        }
    }

    fn step(&mut self, x: &[f64], w: &Tensor, u: &Tensor, b: &Tensor) {
        let hidden = b.len() / 4;
        let zeros = vec![0.0; hidden];
        let h_prev = self.h.last().unwrap_or(&zeros);
        let c_prev = self.c.last().unwrap_or(&zeros);

        let mut pre = vec![0.0; 4 * hidden];
        vecmat(x, w, &mut pre);
        let mut rec = vec![0.0; 4 * hidden];
        vecmat(h_prev, u, &mut rec);
        for ((p, r), bias) in pre.iter_mut().zip(&rec).zip(b.data()) {
            *p += r + bias;
        }

        let gate_i: Vec<f64> = pre[..hidden].iter().map(|&a| sigmoid(a)).collect();
        let gate_f: Vec<f64> = pre[hidden..2 * hidden].iter().map(|&a| sigmoid(a)).collect();
        let gate_g: Vec<f64> = pre[2 * hidden..3 * hidden].iter().map(|&a| a.tanh()).collect();
        let gate_o: Vec<f64> = pre[3 * hidden..].iter().map(|&a| sigmoid(a)).collect();

        let c: Vec<f64> = (0..hidden)
            .map(|j| gate_f[j] * c_prev[j] + gate_i[j] * gate_g[j])
            .collect();
        let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
        let h: Vec<f64> = (0..hidden).map(|j| gate_o[j] * tanh_c[j]).collect();

        self.h.push(h);
        self.c.push(c);
        self.gate_i.push(gate_i);
        self.gate_f.push(gate_f);
        self.gate_g.push(gate_g);
        self.gate_o.push(gate_o);
        self.tanh_c.push(tanh_c);
    }
}

/// Everything the forward pass computed, step by step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub pitch_ctx: Vec<u32>,
    pub duration_ctx: Vec<u32>,
    pub inputs: Vec<Vec<f64>>,
    pub layer1: LayerTrace,
    pub layer2: LayerTrace,
    /// tanh(W_a h_t + b_a) per step.
    pub attn_tanh: Vec<Vec<f64>>,
    /// Alignment scores e_t.
    pub scores: Vec<f64>,
    /// Attention weights; non-negative, sums to 1.
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
    pub pitch_logits: Vec<f64>,
    pub pitch_probs: Vec<f64>,
    pub duration_logits: Vec<f64>,
    pub duration_probs: Vec<f64>,
}

/// Run the model over one context window.
pub fn forward(
    params: &ModelParams,
    pitch_ctx: &[u32],
    duration_ctx: &[u32],
) -> Result<ForwardTrace, NeuralError> {
    if pitch_ctx.len() != duration_ctx.len() || pitch_ctx.is_empty() {
        return Err(NeuralError::ShapeMismatch(format!(
            "context lengths {} and {} (both must be equal and nonzero)",
            pitch_ctx.len(),
            duration_ctx.len()
        )));
    }
    let steps = pitch_ctx.len();
    let hidden = params.attn_v.len();

    let mut inputs = Vec::with_capacity(steps);
    let mut layer1 = LayerTrace::with_capacity(steps);
    let mut layer2 = LayerTrace::with_capacity(steps);
    let mut attn_tanh = Vec::with_capacity(steps);
    let mut scores = Vec::with_capacity(steps);

    for t in 0..steps {
        let p = pitch_ctx[t];
        let d = duration_ctx[t];
        if p as usize >= params.pitch_embedding.rows() {
            return Err(NeuralError::InvalidId("pitch vocabulary", p));
        }
        if d as usize >= params.duration_embedding.rows() {
            return Err(NeuralError::InvalidId("duration vocabulary", d));
        }
        let mut x = params.pitch_embedding.row(p as usize).to_vec();
        x.extend_from_slice(params.duration_embedding.row(d as usize));
        layer1.step(&x, &params.w1, &params.u1, &params.b1);
        inputs.push(x);
        layer2.step(&layer1.h[t], &params.w2, &params.u2, &params.b2);

        let mut pre = vec![0.0; hidden];
        vecmat(&layer2.h[t], &params.attn_w, &mut pre);
        for (a, b) in pre.iter_mut().zip(params.attn_b.data()) {
            *a = (*a + b).tanh();
        }
        scores.push(dot(params.attn_v.data(), &pre));
        attn_tanh.push(pre);
    }

    let alpha = softmax(&scores, 1.0)?;
    let mut context = vec![0.0; hidden];
    for (a, h) in alpha.iter().zip(&layer2.h) {
        for (cj, hj) in context.iter_mut().zip(h) {
            *cj += a * hj;
        }
    }

    let head = |w: &Tensor, b: &Tensor| -> Result<(Vec<f64>, Vec<f64>), NeuralError> {
        let mut logits = vec![0.0; b.len()];
        vecmat(&context, w, &mut logits);
        for (l, bias) in logits.iter_mut().zip(b.data()) {
            *l += bias;
        }
        let probs = softmax(&logits, 1.0)?;
        Ok((logits, probs))
    };
    let (pitch_logits, pitch_probs) = head(&params.w_pitch, &params.b_pitch)?;
    let (duration_logits, duration_probs) = head(&params.w_dur, &params.b_dur)?;

    Ok(ForwardTrace {
        pitch_ctx: pitch_ctx.to_vec(),
        duration_ctx: duration_ctx.to_vec(),
        inputs,
        layer1,
        layer2,
        attn_tanh,
        scores,
        alpha,
        context,
        pitch_logits,
        pitch_probs,
        duration_logits,
        duration_probs,
    })
}

/// Summed cross-entropy of the two heads against their targets.
pub fn loss(trace: &ForwardTrace, target_pitch: u32, target_duration: u32) -> Result<f64, NeuralError> {
    let p = trace
        .pitch_probs
        .get(target_pitch as usize)
        .ok_or(NeuralError::InvalidId("pitch vocabulary", target_pitch))?;
    let d = trace
        .duration_probs
        .get(target_duration as usize)
        .ok_or(NeuralError::InvalidId("duration vocabulary", target_duration))?;
    Ok(-p.max(PROB_FLOOR).ln() - d.max(PROB_FLOOR).ln())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop, clippy::excessive_precision)]
mod tests {
    use super::super::{init_params, ModelConfig};
    use super::*;

    pub(crate) fn tiny_config() -> ModelConfig {
        let mut c = ModelConfig::new(3, 3);
        c.pitch_embed_dim = 2;
        c.duration_embed_dim = 2;
        c.hidden_dim = 4;
        c.seq_len = 3;
        c
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0], 1.0).unwrap(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn softmax_analytic_two_class() {
        let p = softmax(&[2.0f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_high_precision_oracle() {
        // Reference values computed with 50-digit arithmetic.
        let p = softmax(&[3.1, -0.7, 1.2], 0.5).unwrap();
        let expected = [
            0.9776401732995760876088723,
            0.0004892614261168999080446507,
            0.02187056527430701248308303,
        ];
        for (got, want) in p.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert_eq!(
            softmax(&[0.0], 0.0).unwrap_err(),
            NeuralError::NonPositiveTemperature(0.0)
        );
        assert_eq!(
            softmax(&[0.0], -1.0).unwrap_err(),
            NeuralError::NonPositiveTemperature(-1.0)
        );
        assert_eq!(
            softmax(&[f64::NAN], 1.0).unwrap_err(),
            NeuralError::NonFiniteInput("softmax")
        );
    }

    #[test]
    fn softmax_survives_extreme_logits() {
        let p = softmax(&[1000.0, 0.0], 1.0).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn single_step_attention_is_forced() {
        let params = init_params(&tiny_config(), 5);
        let trace = forward(&params, &[1], &[2]).unwrap();
        assert_eq!(trace.alpha, vec![1.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let params = init_params(&tiny_config(), 5);
        let a = forward(&params, &[0, 1, 2], &[0, 2, 1]).unwrap();
        let b = forward(&params, &[0, 1, 2], &[0, 2, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probability_rows_are_stochastic() {
        for seed in 0..20 {
            let params = init_params(&tiny_config(), seed);
            let trace = forward(&params, &[0, 1, 2], &[2, 1, 0]).unwrap();
            for probs in [&trace.pitch_probs, &trace.duration_probs, &trace.alpha] {
                let sum: f64 = probs.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(probs.iter().all(|&p| p >= 0.0));
            }
            assert!(trace.pitch_probs.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn forward_rejects_bad_contexts() {
        let params = init_params(&tiny_config(), 5);
        assert!(matches!(
            forward(&params, &[0, 1], &[0]).unwrap_err(),
            NeuralError::ShapeMismatch(_)
        ));
        assert!(matches!(
            forward(&params, &[], &[]).unwrap_err(),
            NeuralError::ShapeMismatch(_)
        ));
        assert_eq!(
            forward(&params, &[3], &[0]).unwrap_err(),
            NeuralError::InvalidId("pitch vocabulary", 3)
        );
        assert_eq!(
            forward(&params, &[0], &[9]).unwrap_err(),
            NeuralError::InvalidId("duration vocabulary", 9)
        );
    }

    #[test]
    fn loss_of_uniform_heads_is_two_ln_vocab() {
        // Zero parameters give exactly uniform heads.
        let config = {
            let mut c = ModelConfig::new(4, 4);
            c.pitch_embed_dim = 2;
            c.duration_embed_dim = 2;
            c.hidden_dim = 3;
            c
        };
        let params = super::super::ModelParams::zeros(&config);
        let trace = forward(&params, &[0, 1], &[0, 1]).unwrap();
        let l = loss(&trace, 2, 3).unwrap();
        assert!((l - 2.0 * 4.0f64.ln()).abs() < 1e-12, "{l}");
    }

    #[test]
    fn certain_prediction_has_zero_loss() {
        let config = tiny_config();
        let mut params = super::super::ModelParams::zeros(&config);
        // Saturate both heads on class 1.
        params.b_pitch.data_mut()[1] = 1000.0;
        params.b_dur.data_mut()[1] = 1000.0;
        let trace = forward(&params, &[0], &[0]).unwrap();
        assert_eq!(trace.pitch_probs[1], 1.0);
        assert_eq!(loss(&trace, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn loss_rejects_out_of_range_targets() {
        let params = init_params(&tiny_config(), 5);
        let trace = forward(&params, &[0], &[0]).unwrap();
        assert_eq!(
            loss(&trace, 3, 0).unwrap_err(),
            NeuralError::InvalidId("pitch vocabulary", 3)
        );
    }

    /// Fill every tensor with a cheap deterministic pattern so the scalar
    /// oracle below can rebuild identical weights without sharing code.
    fn patterned_params(config: &ModelConfig) -> super::super::ModelParams {
        let mut params = super::super::ModelParams::zeros(config);
        for (k, (_, t)) in params.tensors_mut().into_iter().enumerate() {
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v = pattern(k, j);
            }
        }
        params
    }

    fn pattern(k: usize, j: usize) -> f64 {
        ((k * 31 + j * 17) % 23) as f64 / 23.0 - 0.5
    }

    /// Plain-scalar reimplementation of the whole forward pass, written with
    /// explicit index loops and no shared helpers.
    fn scalar_forward(
        config: &ModelConfig,
        pitch_ctx: &[u32],
        duration_ctx: &[u32],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = config.hidden_dim;
        let (pe_dim, de_dim) = (config.pitch_embed_dim, config.duration_embed_dim);
        let input = pe_dim + de_dim;
        let steps = pitch_ctx.len();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());

        // Tensor order: pe(0) de(1) w1(2) u1(3) b1(4) w2(5) u2(6) b2(7)
        // attn_w(8) attn_v(9) attn_b(10) w_pitch(11) b_pitch(12) w_dur(13) b_dur(14).
        let mut h1 = vec![vec![0.0; h]; steps + 1];
        let mut c1 = vec![vec![0.0; h]; steps + 1];
        let mut h2 = vec![vec![0.0; h]; steps + 1];
        let mut c2 = vec![vec![0.0; h]; steps + 1];

        for t in 0..steps {
            let mut x = vec![0.0; input];
            for e in 0..pe_dim {
                x[e] = pattern(0, pitch_ctx[t] as usize * pe_dim + e);
            }
            for e in 0..de_dim {
                x[pe_dim + e] = pattern(1, duration_ctx[t] as usize * de_dim + e);
            }

            for (layer, (wk, uk, bk)) in [(2, 3, 4), (5, 6, 7)].into_iter().enumerate() {
                let (inp, in_dim, h_prev, c_prev): (&[f64], usize, &[f64], &[f64]) = if layer == 0 {
                    (&x, input, &h1[t], &c1[t])
                } else {
                    (&h1[t + 1], h, &h2[t], &c2[t])
                };
                let mut pre = vec![0.0; 4 * h];
                for (j, p) in pre.iter_mut().enumerate() {
                    let mut acc = pattern(bk, j);
                    for i in 0..in_dim {
                        acc += inp[i] * pattern(wk, i * 4 * h + j);
                    }
                    for i in 0..h {
                        acc += h_prev[i] * pattern(uk, i * 4 * h + j);
                    }
                    *p = acc;
                }
                let mut new_h = vec![0.0; h];
                let mut new_c = vec![0.0; h];
                for j in 0..h {
                    let gi = sig(pre[j]);
                    let gf = sig(pre[h + j]);
                    let gg = pre[2 * h + j].tanh();
                    let go = sig(pre[3 * h + j]);
                    new_c[j] = gf * c_prev[j] + gi * gg;
                    new_h[j] = go * new_c[j].tanh();
                }
                if layer == 0 {
                    h1[t + 1] = new_h;
                    c1[t + 1] = new_c;
                } else {
                    h2[t + 1] = new_h;
                    c2[t + 1] = new_c;
                }
            }
        }

        let mut scores = vec![0.0; steps];
        for t in 0..steps {
            let mut e = 0.0;
            for j in 0..h {
                let mut pre = pattern(10, j);
                for i in 0..h {
                    pre += h2[t + 1][i] * pattern(8, i * h + j);
                }
                e += pattern(9, j) * pre.tanh();
            }
            scores[t] = e;
        }
        let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let alpha: Vec<f64> = exps.iter().map(|e| e / z).collect();

        let mut ctx = vec![0.0; h];
        for t in 0..steps {
            for j in 0..h {
                ctx[j] += alpha[t] * h2[t + 1][j];
            }
        }

        let head = |wk: usize, bk: usize, n: usize| -> Vec<f64> {
            let mut logits = vec![0.0; n];
            for (j, l) in logits.iter_mut().enumerate() {
                let mut acc = pattern(bk, j);
                for i in 0..h {
                    acc += ctx[i] * pattern(wk, i * n + j);
                }
                *l = acc;
            }
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.iter().map(|e| e / z).collect()
        };
        let pitch_probs = head(11, 12, config.pitch_vocab_size);
        let duration_probs = head(13, 14, config.duration_vocab_size);
        (pitch_probs, duration_probs, alpha)
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let config = tiny_config();
        let params = patterned_params(&config);
        let pitch_ctx = [0u32, 2, 1];
        let duration_ctx = [1u32, 0, 2];
        let trace = forward(&params, &pitch_ctx, &duration_ctx).unwrap();
        let (pp, dp, alpha) = scalar_forward(&config, &pitch_ctx, &duration_ctx);
        for (got, want) in trace
            .pitch_probs
            .iter()
            .chain(&trace.duration_probs)
            .chain(&trace.alpha)
            .zip(pp.iter().chain(&dp).chain(&alpha))
        {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }
}
