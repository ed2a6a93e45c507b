//! Exact reverse-mode differentiation of `loss(forward(..))` with respect to
//! every parameter, by backpropagation through time over the cached trace.

use super::forward::{ForwardTrace, LayerTrace, PROB_FLOOR};
use super::tensor::{add_matvec, add_outer, add_assign, dot, Tensor};
use super::{ModelParams, NeuralError};

/// Gradient of the summed cross-entropy with respect to all parameters.
/// The result has the same shapes as `params`.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    target_pitch: u32,
    target_duration: u32,
) -> Result<ModelParams, NeuralError> {
    let steps = trace.alpha.len();
    let hidden = params.attn_v.len();
    if trace.layer2.h.len() != steps || trace.context.len() != hidden {
        return Err(NeuralError::ShapeMismatch(
            "trace does not match parameter shapes".into(),
        ));
    }
    if target_pitch as usize >= trace.pitch_probs.len() {
        return Err(NeuralError::InvalidId("pitch vocabulary", target_pitch));
    }
    if target_duration as usize >= trace.duration_probs.len() {
        return Err(NeuralError::InvalidId("duration vocabulary", target_duration));
    }

    let mut grads = params.zeros_like();

    // Softmax + cross-entropy collapse to probs − onehot, unless the target
    // probability sits at the floor, where the clamped loss is flat.
    let head_delta = |probs: &[f64], target: u32| -> Vec<f64> {
        if probs[target as usize] <= PROB_FLOOR {
            return vec![0.0; probs.len()];
        }
        let mut d = probs.to_vec();
        d[target as usize] -= 1.0;
        d
    };
    let d_pitch_logits = head_delta(&trace.pitch_probs, target_pitch);
    let d_dur_logits = head_delta(&trace.duration_probs, target_duration);

    add_outer(&mut grads.w_pitch, &trace.context, &d_pitch_logits);
    add_assign(grads.b_pitch.data_mut(), &d_pitch_logits);
    add_outer(&mut grads.w_dur, &trace.context, &d_dur_logits);
    add_assign(grads.b_dur.data_mut(), &d_dur_logits);

    let mut d_context = vec![0.0; hidden];
    add_matvec(&params.w_pitch, &d_pitch_logits, &mut d_context);
    add_matvec(&params.w_dur, &d_dur_logits, &mut d_context);

    // Attention: context = Σ_t α_t h_t with α = softmax(e).
    let d_alpha: Vec<f64> = (0..steps).map(|t| dot(&d_context, &trace.layer2.h[t])).collect();
    let alpha_dot: f64 = trace.alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    let d_scores: Vec<f64> = (0..steps)
        .map(|t| trace.alpha[t] * (d_alpha[t] - alpha_dot))
        .collect();

    // Per-step gradient flowing into layer-2 hidden states.
    let mut d_h2: Vec<Vec<f64>> = vec![vec![0.0; hidden]; steps];
    for t in 0..steps {
        for (slot, dc) in d_h2[t].iter_mut().zip(&d_context) {
            *slot = trace.alpha[t] * dc;
        }
        let u = &trace.attn_tanh[t];
        // e_t = v · u_t, u_t = tanh(W h_t + b)
        let mut d_pre = vec![0.0; hidden];
        for j in 0..hidden {
            grads.attn_v.data_mut()[j] += d_scores[t] * u[j];
            d_pre[j] = d_scores[t] * params.attn_v.data()[j] * (1.0 - u[j] * u[j]);
        }
        add_outer(&mut grads.attn_w, &trace.layer2.h[t], &d_pre);
        add_assign(grads.attn_b.data_mut(), &d_pre);
        add_matvec(&params.attn_w, &d_pre, &mut d_h2[t]);
    }

    // Layer 2, then layer 1, walking time backwards.
    let d_h1 = bptt_layer(
        &mut LayerGrads {
            w: &mut grads.w2,
            u: &mut grads.u2,
            b: &mut grads.b2,
        },
        &params.w2,
        &params.u2,
        &trace.layer2,
        |t| &trace.layer1.h[t],
        d_h2,
    );
    let d_x = bptt_layer(
        &mut LayerGrads {
            w: &mut grads.w1,
            u: &mut grads.u1,
            b: &mut grads.b1,
        },
        &params.w1,
        &params.u1,
        &trace.layer1,
        |t| &trace.inputs[t],
        d_h1,
    );

    let pe_dim = params.pitch_embedding.cols();
    for ((&p, &d), dx) in trace.pitch_ctx.iter().zip(&trace.duration_ctx).zip(&d_x) {
        add_assign(grads.pitch_embedding.row_mut(p as usize), &dx[..pe_dim]);
        add_assign(grads.duration_embedding.row_mut(d as usize), &dx[pe_dim..]);
    }

    Ok(grads)
}

struct LayerGrads<'a> {
    w: &'a mut Tensor,
    u: &'a mut Tensor,
    b: &'a mut Tensor,
}

/// Backpropagate one LSTM layer through all steps. `d_h` carries the
/// gradient arriving at each step's hidden output from above; the return
/// value is the gradient with respect to each step's layer input.
fn bptt_layer<'a>(
    grads: &mut LayerGrads,
    w: &Tensor,
    u: &Tensor,
    layer: &LayerTrace,
    input_at: impl Fn(usize) -> &'a [f64],
    mut d_h: Vec<Vec<f64>>,
) -> Vec<Vec<f64>> {
    let steps = d_h.len();
    let hidden = layer.h[0].len();
    let mut d_inputs = vec![vec![0.0; w.rows()]; steps];
    let mut d_c_next = vec![0.0; hidden];

    for t in (0..steps).rev() {
        let (i, f, g, o) = (
            &layer.gate_i[t],
            &layer.gate_f[t],
            &layer.gate_g[t],
            &layer.gate_o[t],
        );
        let tanh_c = &layer.tanh_c[t];
        let dh = &d_h[t];

        // h = o ∘ tanh(c); c = f ∘ c_prev + i ∘ g.
        let mut d_pre = vec![0.0; 4 * hidden];
        let mut d_c = vec![0.0; hidden];
        for j in 0..hidden {
            let d_o = dh[j] * tanh_c[j];
            let dc = d_c_next[j] + dh[j] * o[j] * (1.0 - tanh_c[j] * tanh_c[j]);
            let d_i = dc * g[j];
            let d_f = dc * if t > 0 { layer.c[t - 1][j] } else { 0.0 };
            let d_g = dc * i[j];
            d_pre[j] = d_i * i[j] * (1.0 - i[j]);
            d_pre[hidden + j] = d_f * f[j] * (1.0 - f[j]);
            d_pre[2 * hidden + j] = d_g * (1.0 - g[j] * g[j]);
            d_pre[3 * hidden + j] = d_o * o[j] * (1.0 - o[j]);
            d_c[j] = dc;
        }

        add_outer(grads.w, input_at(t), &d_pre);
        if t > 0 {
            add_outer(grads.u, &layer.h[t - 1], &d_pre);
        }
        add_assign(grads.b.data_mut(), &d_pre);

        add_matvec(w, &d_pre, &mut d_inputs[t]);
        if t > 0 {
            add_matvec(u, &d_pre, &mut d_h[t - 1]);
        }
        for j in 0..hidden {
            d_c_next[j] = d_c[j] * f[j];
        }
    }
    d_inputs
}
