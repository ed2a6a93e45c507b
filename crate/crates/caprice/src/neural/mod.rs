//! Two-layer LSTM with additive attention and separate pitch/duration
//! softmax heads, trained by exact backpropagation through time with Adam.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
pub mod tensor;
mod train;

pub use adam::OptimizerState;
pub use backward::backward;
pub use checkpoint::{checkpoint_id, load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{forward, loss, softmax, ForwardTrace, PROB_FLOOR};
pub use gradcheck::{gradient_check, gradient_check_detailed};
pub use train::{caprice_number, train, train_with_callback, EpochReport};

use serde::{Deserialize, Serialize};
use tensor::Tensor;

pub const NUM_LSTM_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),
    #[error("temperature {0} is not positive")]
    NonPositiveTemperature(f64),
    #[error("id {1} is out of range for {0}")]
    InvalidId(&'static str, u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("split selects no pieces")]
    EmptySplit,
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint data does not begin with magic PGNW")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u16),
    #[error("corrupt checkpoint: {0}")]
    CorruptPayload(String),
}

/// Model and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pitch_vocab_size: usize,
    pub duration_vocab_size: usize,
    #[serde(default = "default_embed_dim")]
    pub pitch_embed_dim: usize,
    #[serde(default = "default_embed_dim")]
    pub duration_embed_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_num_lstm_layers")]
    pub num_lstm_layers: usize,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub stop_at_loss: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_embed_dim() -> usize {
    64
}
fn default_hidden_dim() -> usize {
    256
}
fn default_num_lstm_layers() -> usize {
    NUM_LSTM_LAYERS
}
fn default_seq_len() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    0.001
}
fn default_epochs() -> usize {
    250
}
fn default_batch_size() -> usize {
    32
}

impl ModelConfig {
    /// Config with default hyperparameters for the given vocabulary sizes.
    pub fn new(pitch_vocab_size: usize, duration_vocab_size: usize) -> Self {
        ModelConfig {
            pitch_vocab_size,
            duration_vocab_size,
            pitch_embed_dim: default_embed_dim(),
            duration_embed_dim: default_embed_dim(),
            hidden_dim: default_hidden_dim(),
            num_lstm_layers: NUM_LSTM_LAYERS,
            seq_len: default_seq_len(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            checkpoint_every: 0,
            stop_at_loss: None,
            seed: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.pitch_embed_dim + self.duration_embed_dim
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |msg: String| Err(NeuralError::InvalidConfig(msg));
        for (name, value) in [
            ("pitch_vocab_size", self.pitch_vocab_size),
            ("duration_vocab_size", self.duration_vocab_size),
            ("pitch_embed_dim", self.pitch_embed_dim),
            ("duration_embed_dim", self.duration_embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("seq_len", self.seq_len),
            ("batch_size", self.batch_size),
        ] {
            if value < 1 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.num_lstm_layers != NUM_LSTM_LAYERS {
            return bad(format!("num_lstm_layers is fixed at {NUM_LSTM_LAYERS}"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if let Some(target) = self.stop_at_loss {
            if !target.is_finite() {
                return bad("stop_at_loss must be finite".into());
            }
        }
        Ok(())
    }
}

/// All learnable tensors. Gate blocks along the `4·hidden` axis are ordered
/// input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub pitch_embedding: Tensor,
    pub duration_embedding: Tensor,
    pub w1: Tensor,
    pub u1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub u2: Tensor,
    pub b2: Tensor,
    pub attn_w: Tensor,
    pub attn_v: Tensor,
    pub attn_b: Tensor,
    pub w_pitch: Tensor,
    pub b_pitch: Tensor,
    pub w_dur: Tensor,
    pub b_dur: Tensor,
}

impl ModelParams {
    /// All-zero tensors with the shapes demanded by `config`; also the
    /// gradient container.
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden_dim;
        let input = config.input_dim();
        ModelParams {
            pitch_embedding: Tensor::zeros(&[config.pitch_vocab_size, config.pitch_embed_dim]),
            duration_embedding: Tensor::zeros(&[
                config.duration_vocab_size,
                config.duration_embed_dim,
            ]),
            w1: Tensor::zeros(&[input, 4 * h]),
            u1: Tensor::zeros(&[h, 4 * h]),
            b1: Tensor::zeros(&[4 * h]),
            w2: Tensor::zeros(&[h, 4 * h]),
            u2: Tensor::zeros(&[h, 4 * h]),
            b2: Tensor::zeros(&[4 * h]),
            attn_w: Tensor::zeros(&[h, h]),
            attn_v: Tensor::zeros(&[h]),
            attn_b: Tensor::zeros(&[h]),
            w_pitch: Tensor::zeros(&[h, config.pitch_vocab_size]),
            b_pitch: Tensor::zeros(&[config.pitch_vocab_size]),
            w_dur: Tensor::zeros(&[h, config.duration_vocab_size]),
            b_dur: Tensor::zeros(&[config.duration_vocab_size]),
        }
    }

    /// Tensors with their names, in declaration order.
    pub fn tensors(&self) -> [(&'static str, &Tensor); 15] {
        [
            ("pitch_embedding", &self.pitch_embedding),
            ("duration_embedding", &self.duration_embedding),
            ("w1", &self.w1),
            ("u1", &self.u1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("u2", &self.u2),
            ("b2", &self.b2),
            ("attn_w", &self.attn_w),
            ("attn_v", &self.attn_v),
            ("attn_b", &self.attn_b),
            ("w_pitch", &self.w_pitch),
            ("b_pitch", &self.b_pitch),
            ("w_dur", &self.w_dur),
            ("b_dur", &self.b_dur),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 15] {
        [
            ("pitch_embedding", &mut self.pitch_embedding),
            ("duration_embedding", &mut self.duration_embedding),
            ("w1", &mut self.w1),
            ("u1", &mut self.u1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("u2", &mut self.u2),
            ("b2", &mut self.b2),
            ("attn_w", &mut self.attn_w),
            ("attn_v", &mut self.attn_v),
            ("attn_b", &mut self.attn_b),
            ("w_pitch", &mut self.w_pitch),
            ("b_pitch", &mut self.b_pitch),
            ("w_dur", &mut self.w_dur),
            ("b_dur", &mut self.b_dur),
        ]
    }

    /// All-zero tensors shaped like `self`.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            pitch_embedding: Tensor::zeros(self.pitch_embedding.shape()),
            duration_embedding: Tensor::zeros(self.duration_embedding.shape()),
            w1: Tensor::zeros(self.w1.shape()),
            u1: Tensor::zeros(self.u1.shape()),
            b1: Tensor::zeros(self.b1.shape()),
            w2: Tensor::zeros(self.w2.shape()),
            u2: Tensor::zeros(self.u2.shape()),
            b2: Tensor::zeros(self.b2.shape()),
            attn_w: Tensor::zeros(self.attn_w.shape()),
            attn_v: Tensor::zeros(self.attn_v.shape()),
            attn_b: Tensor::zeros(self.attn_b.shape()),
            w_pitch: Tensor::zeros(self.w_pitch.shape()),
            b_pitch: Tensor::zeros(self.b_pitch.shape()),
            w_dur: Tensor::zeros(self.w_dur.shape()),
            b_dur: Tensor::zeros(self.b_dur.shape()),
        }
    }

    /// Accumulate `other` scaled by `factor` into `self`.
    pub fn add_scaled(&mut self, other: &ModelParams, factor: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (ai, bi) in a.data_mut().iter_mut().zip(b.data()) {
                *ai += factor * bi;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }
}

/// Deterministic Xavier-uniform initialization: every weight matrix is drawn
/// uniform in `±sqrt(6/(fan_in+fan_out))`, biases start at zero except the
/// forget-gate blocks, which start at 1.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(config);
    let h = config.hidden_dim;

    for (name, t) in params.tensors_mut() {
        let (fan_in, fan_out) = match t.shape() {
            [rows, cols] => (*rows, *cols),
            // attn_v maps the hidden vector to a scalar score.
            [len] if name == "attn_v" => (*len, 1),
            _ => continue,
        };
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in t.data_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    for bias in [&mut params.b1, &mut params.b2] {
        bias.data_mut()[h..2 * h].fill(1.0);
    }
    params
}
