//! Binary corpus store.
//!
//! Layout: magic `PGNC`, u16 LE version, u32 LE metadata length + UTF-8 JSON
//! metadata (grid, writer version, vocab tokens in id order), u32 LE piece
//! count, then per piece: length-prefixed id, u32 LE token count, pitch ids
//! and duration ids as u32 LE arrays. Serialization is deterministic, so
//! equal stores produce identical bytes.

use super::{CorpusError, CorpusStore, TokenizedPiece, VocabKind, Vocabulary};
use crate::ql::QuarterLength;
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"PGNC";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct StoreMeta {
    grid_numer: i64,
    grid_denom: i64,
    created_with_version: String,
    pitch_tokens: Vec<String>,
    duration_tokens: Vec<String>,
}

pub fn serialize_store(store: &CorpusStore) -> Vec<u8> {
    let meta = StoreMeta {
        grid_numer: store.grid.numer(),
        grid_denom: store.grid.denom(),
        created_with_version: store.created_with_version.clone(),
        pitch_tokens: store.pitch_vocab.tokens().to_vec(),
        duration_tokens: store.duration_vocab.tokens().to_vec(),
    };
    let meta_json = serde_json::to_vec(&meta).expect("store metadata serializes");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&(store.pieces.len() as u32).to_le_bytes());
    for piece in &store.pieces {
        let id_bytes = piece.piece_id.as_bytes();
        out.extend_from_slice(&(id_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(id_bytes);
        out.extend_from_slice(&(piece.pitch_ids.len() as u32).to_le_bytes());
        for &id in &piece.pitch_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for &id in &piece.duration_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CorpusError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| CorpusError::CorruptPayload(format!("truncated {what}")))?;
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16le(&mut self, what: &str) -> Result<u16, CorpusError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32le(&mut self, what: &str) -> Result<u32, CorpusError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &str) -> Result<String, CorpusError> {
        let len = self.u32le(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CorpusError::CorruptPayload(format!("{what} is not UTF-8")))
    }

    fn id_array(&mut self, len: usize, what: &str) -> Result<Vec<u32>, CorpusError> {
        let bytes = self.take(len * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn deserialize_store(data: &[u8]) -> Result<CorpusStore, CorpusError> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4, "magic").map_err(|_| CorpusError::BadMagic)? != MAGIC {
        return Err(CorpusError::BadMagic);
    }
    let version = r.u16le("version")?;
    if version != VERSION {
        return Err(CorpusError::VersionMismatch(version));
    }
    let meta_json = r.string("metadata")?;
    let meta: StoreMeta = serde_json::from_str(&meta_json)
        .map_err(|e| CorpusError::CorruptPayload(format!("metadata: {e}")))?;
    if meta.grid_denom <= 0 || meta.grid_numer <= 0 {
        return Err(CorpusError::CorruptPayload("nonpositive grid".into()));
    }

    let pitch_vocab = Vocabulary::from_tokens(VocabKind::Pitch, &meta.pitch_tokens)?;
    let duration_vocab = Vocabulary::from_tokens(VocabKind::Duration, &meta.duration_tokens)?;

    let piece_count = r.u32le("piece count")? as usize;
    let mut pieces = Vec::with_capacity(piece_count.min(1 << 16));
    for _ in 0..piece_count {
        let piece_id = r.string("piece id")?;
        let len = r.u32le("piece length")? as usize;
        if len == 0 {
            return Err(CorpusError::CorruptPayload(format!("piece {piece_id:?} is empty")));
        }
        let pitch_ids = r.id_array(len, "pitch ids")?;
        let duration_ids = r.id_array(len, "duration ids")?;
        for (&id, vocab) in pitch_ids
            .iter()
            .map(|id| (id, &pitch_vocab))
            .chain(duration_ids.iter().map(|id| (id, &duration_vocab)))
        {
            if id == super::START_ID || vocab.token(id).is_none() {
                return Err(CorpusError::CorruptPayload(format!(
                    "piece {piece_id:?} has out-of-vocabulary id {id}"
                )));
            }
        }
        pieces.push(TokenizedPiece { piece_id, pitch_ids, duration_ids });
    }
    if r.pos != data.len() {
        return Err(CorpusError::CorruptPayload("trailing bytes".into()));
    }

    Ok(CorpusStore {
        pitch_vocab,
        duration_vocab,
        pieces,
        grid: QuarterLength::new(meta.grid_numer, meta.grid_denom),
        created_with_version: meta.created_with_version,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests_support::random_store;
    use super::*;

    fn empty_store() -> CorpusStore {
        CorpusStore::new(QuarterLength::new(1, 12))
    }

    #[test]
    fn empty_store_round_trips() {
        let store = empty_store();
        let bytes = serialize_store(&store);
        assert_eq!(deserialize_store(&bytes).unwrap(), store);
    }

    #[test]
    fn single_piece_store_round_trips() {
        let mut store = empty_store();
        let a = store.pitch_vocab.intern("60");
        let b = store.duration_vocab.intern("1/2");
        store.pieces.push(TokenizedPiece {
            piece_id: "caprice_01".into(),
            pitch_ids: vec![a, a],
            duration_ids: vec![b, b],
        });
        let bytes = serialize_store(&store);
        assert_eq!(deserialize_store(&bytes).unwrap(), store);
    }

    #[test]
    fn serialization_is_byte_stable() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let store = random_store(&mut rng);
            let bytes = serialize_store(&store);
            let back = deserialize_store(&bytes).unwrap();
            assert_eq!(back, store);
            assert_eq!(serialize_store(&back), bytes);
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = serialize_store(&empty_store());
        bytes[0..4].copy_from_slice(b"NOPE");
        assert_eq!(deserialize_store(&bytes).unwrap_err(), CorpusError::BadMagic);
        assert_eq!(deserialize_store(b"PG").unwrap_err(), CorpusError::BadMagic);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = serialize_store(&empty_store());
        bytes[4..6].copy_from_slice(&9u16.to_le_bytes());
        assert_eq!(deserialize_store(&bytes).unwrap_err(), CorpusError::VersionMismatch(9));
    }

    #[test]
    fn truncation_anywhere_is_corrupt() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let bytes = serialize_store(&random_store(&mut rng));
        for cut in [6, 8, bytes.len() / 2, bytes.len() - 1] {
            let err = deserialize_store(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, CorpusError::CorruptPayload(_)),
                "cut at {cut}: {err:?}"
            );
        }
    }

    #[test]
    fn trailing_bytes_are_corrupt() {
        let mut bytes = serialize_store(&empty_store());
        bytes.push(0);
        assert!(matches!(
            deserialize_store(&bytes).unwrap_err(),
            CorpusError::CorruptPayload(_)
        ));
    }

    #[test]
    fn out_of_vocabulary_ids_are_corrupt() {
        let mut store = empty_store();
        let a = store.pitch_vocab.intern("60");
        let b = store.duration_vocab.intern("1/2");
        store.pieces.push(TokenizedPiece {
            piece_id: "p".into(),
            pitch_ids: vec![a, 99],
            duration_ids: vec![b, b],
        });
        let bytes = serialize_store(&store);
        assert!(matches!(
            deserialize_store(&bytes).unwrap_err(),
            CorpusError::CorruptPayload(_)
        ));
    }
}
