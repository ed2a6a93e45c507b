//! Token-level view of the corpus: vocabularies, tokenized pieces, training
//! windows, the binary store, and named caprice splits.

mod splits;
mod store;

pub use splits::SplitRegistry;
pub use store::{deserialize_store, serialize_store};

use crate::midi_io::ScoreElement;
use crate::ql::QuarterLength;
use std::collections::HashMap;

/// Reserved id for the left-padding token.
pub const START_ID: u32 = 0;
pub const START_TOKEN: &str = "<START>";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown {0:?} token {1:?}")]
    UnknownToken(VocabKind, String),
    #[error("empty input")]
    EmptyInput,
    #[error("id {1} is not valid in the {0:?} vocabulary")]
    InvalidId(VocabKind, u32),
    #[error("store data does not begin with magic PGNC")]
    BadMagic,
    #[error("unsupported store version {0}")]
    VersionMismatch(u16),
    #[error("corrupt store payload: {0}")]
    CorruptPayload(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("invalid split definition: {0}")]
    InvalidSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabKind {
    Pitch,
    Duration,
}

/// Bijective token/id map. Id 0 is always the START padding token; real
/// tokens get contiguous ids in insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    kind: VocabKind,
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub fn new(kind: VocabKind) -> Self {
        let mut v = Vocabulary {
            kind,
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        v.intern(START_TOKEN);
        v
    }

    /// Rebuild a vocabulary from tokens listed in id order.
    pub fn from_tokens(kind: VocabKind, tokens: &[String]) -> Result<Self, CorpusError> {
        if tokens.first().map(String::as_str) != Some(START_TOKEN) {
            return Err(CorpusError::CorruptPayload(format!(
                "{kind:?} vocabulary does not start with {START_TOKEN}"
            )));
        }
        let mut v = Vocabulary::new(kind);
        for token in &tokens[1..] {
            if v.lookup(token).is_some() {
                return Err(CorpusError::CorruptPayload(format!(
                    "duplicate {kind:?} token {token:?}"
                )));
            }
            v.intern(token);
        }
        Ok(v)
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    /// Id for `token`, inserting it if new.
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.id_to_token.push(token.to_string());
        self.token_to_id.insert(token.to_string(), id);
        id
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Tokens in id order.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Number of tokens including START; never zero.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }
}

/// Parallel pitch/duration id sequences for one piece.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPiece {
    pub piece_id: String,
    pub pitch_ids: Vec<u32>,
    pub duration_ids: Vec<u32>,
}

/// One supervised example: `seq_len` ids of context per stream and the pair
/// of ids that follows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingWindow {
    pub pitch_ctx: Vec<u32>,
    pub duration_ctx: Vec<u32>,
    pub target_pitch: u32,
    pub target_duration: u32,
}

/// Vocabularies, pieces, and the quantization grid they were made with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStore {
    pub pitch_vocab: Vocabulary,
    pub duration_vocab: Vocabulary,
    pub pieces: Vec<TokenizedPiece>,
    pub grid: QuarterLength,
    pub created_with_version: String,
}

impl CorpusStore {
    pub fn new(grid: QuarterLength) -> Self {
        CorpusStore {
            pitch_vocab: Vocabulary::new(VocabKind::Pitch),
            duration_vocab: Vocabulary::new(VocabKind::Duration),
            pieces: Vec::new(),
            grid,
            created_with_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn total_tokens(&self) -> usize {
        self.pieces.iter().map(|p| p.pitch_ids.len()).sum()
    }
}

/// Pitch token for one element: decimal MIDI number, dot-joined ascending
/// chord, or `rest`.
pub fn pitch_token(element: &ScoreElement) -> String {
    match element {
        ScoreElement::Rest { .. } => "rest".to_string(),
        _ => element
            .pitches()
            .iter()
            .map(u8::to_string)
            .collect::<Vec<_>>()
            .join("."),
    }
}

/// Map elements to parallel id sequences. With `extend` set, unseen tokens
/// are added to the vocabularies; otherwise they are an error.
pub fn tokenize(
    piece_id: &str,
    elements: &[ScoreElement],
    pitch_vocab: &mut Vocabulary,
    duration_vocab: &mut Vocabulary,
    extend: bool,
) -> Result<TokenizedPiece, CorpusError> {
    if elements.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut pitch_ids = Vec::with_capacity(elements.len());
    let mut duration_ids = Vec::with_capacity(elements.len());
    for el in elements {
        let pt = pitch_token(el);
        let dt = el.duration().token();
        for (vocab, token, ids) in [
            (&mut *pitch_vocab, pt, &mut pitch_ids),
            (&mut *duration_vocab, dt, &mut duration_ids),
        ] {
            let id = if extend {
                vocab.intern(&token)
            } else {
                vocab
                    .lookup(&token)
                    .ok_or_else(|| CorpusError::UnknownToken(vocab.kind, token.clone()))?
            };
            ids.push(id);
        }
    }
    Ok(TokenizedPiece {
        piece_id: piece_id.to_string(),
        pitch_ids,
        duration_ids,
    })
}

/// Exact inverse of [`tokenize`] on its image.
pub fn detokenize(
    piece: &TokenizedPiece,
    pitch_vocab: &Vocabulary,
    duration_vocab: &Vocabulary,
) -> Result<Vec<ScoreElement>, CorpusError> {
    let mut elements = Vec::with_capacity(piece.pitch_ids.len());
    for (&pid, &did) in piece.pitch_ids.iter().zip(&piece.duration_ids) {
        let pt = pitch_vocab
            .token(pid)
            .ok_or(CorpusError::InvalidId(VocabKind::Pitch, pid))?;
        let dt = duration_vocab
            .token(did)
            .ok_or(CorpusError::InvalidId(VocabKind::Duration, did))?;
        let duration: QuarterLength = dt
            .parse()
            .map_err(|_| CorpusError::InvalidId(VocabKind::Duration, did))?;
        elements.push(if pt == "rest" {
            ScoreElement::Rest { duration }
        } else {
            let pitches: Vec<u8> = pt
                .split('.')
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(|_| CorpusError::InvalidId(VocabKind::Pitch, pid))?;
            if pitches.len() == 1 {
                ScoreElement::Note { pitch: pitches[0], duration }
            } else {
                ScoreElement::Chord { pitches, duration }
            }
        });
    }
    Ok(elements)
}

/// Cut one window per token position, left-padding short contexts with START.
pub fn make_windows(piece: &TokenizedPiece, seq_len: usize) -> Vec<TrainingWindow> {
    assert!(seq_len >= 1, "window length must be at least 1");
    let n = piece.pitch_ids.len();
    let mut windows = Vec::with_capacity(n);
    for i in 0..n {
        let ctx = |ids: &[u32]| {
            let mut c = vec![START_ID; seq_len.saturating_sub(i)];
            c.extend_from_slice(&ids[i.saturating_sub(seq_len)..i]);
            c
        };
        windows.push(TrainingWindow {
            pitch_ctx: ctx(&piece.pitch_ids),
            duration_ctx: ctx(&piece.duration_ids),
            target_pitch: piece.pitch_ids[i],
            target_duration: piece.duration_ids[i],
        });
    }
    windows
}
