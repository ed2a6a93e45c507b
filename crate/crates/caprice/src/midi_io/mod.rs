//! Standard MIDI File parsing/writing and conversion between timed note
//! events and ordered [`ScoreElement`] streams.
//!
//! The element stream is the common currency of the pipeline: a flat,
//! monophonic-by-onset sequence of notes, chords, and rests with exact
//! rational durations snapped to a quantization grid.

mod smf;

pub use smf::{decode_varlen, encode_varlen, parse_midi, write_midi};

use crate::ql::QuarterLength;
use num_rational::Ratio;

/// Default quantization grid: 1/12 quarter length covers both sixteenth
/// notes and triplets.
pub const DEFAULT_GRID: QuarterLength = QuarterLength(Ratio::new_raw(1, 12));

/// Default ticks-per-quarter for written files; a multiple of the default
/// grid denominator so grid-aligned durations stay integral in ticks.
pub const DEFAULT_TPQ: u16 = 480;

/// Default tempo in microseconds per quarter note (120 bpm).
pub const DEFAULT_TEMPO: u32 = 500_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MidiError {
    #[error("variable-length quantity is truncated")]
    TruncatedVarlen,
    #[error("variable-length quantity longer than four bytes")]
    OverlongVarlen,
    #[error("value {0:#x} exceeds the variable-length range")]
    ValueOutOfRange(u32),
    #[error("missing or malformed MThd header")]
    BadHeader,
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    SmpteTimeDivision,
    #[error("truncated chunk: {0}")]
    TruncatedChunk(&'static str),
    #[error("invalid quantization grid")]
    InvalidGrid,
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("duration {0} is not a whole number of ticks at {1} ticks per quarter")]
    NonRepresentableDuration(QuarterLength, u16),
}

/// One matched note: MIDI pitch, onset and duration in ticks, and the
/// note-on velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: u64,
    pub duration: u64,
    pub velocity: u8,
}

/// Parsed content of one Standard MIDI File.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiDocument {
    /// SMF format, 0 or 1.
    pub format: u16,
    pub ticks_per_quarter: u16,
    /// One `NoteEvent` list per track, each sorted by onset then pitch.
    pub tracks: Vec<Vec<NoteEvent>>,
    /// Tempo from the first set-tempo meta event, else [`DEFAULT_TEMPO`].
    pub tempo_us_per_quarter: u32,
}

impl MidiDocument {
    pub fn new(format: u16, ticks_per_quarter: u16, tracks: Vec<Vec<NoteEvent>>) -> Self {
        MidiDocument {
            format,
            ticks_per_quarter,
            tracks,
            tempo_us_per_quarter: DEFAULT_TEMPO,
        }
    }

    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(Vec::len).sum()
    }

    /// Check the document invariants required before writing.
    pub fn validate(&self) -> Result<(), MidiError> {
        let fail = |msg: String| Err(MidiError::InvariantViolation(msg));
        if self.format > 1 {
            return fail(format!("format {} (only 0 and 1 are writable)", self.format));
        }
        if self.ticks_per_quarter < 24 {
            return fail(format!("ticks_per_quarter {} below 24", self.ticks_per_quarter));
        }
        if self.tracks.is_empty() {
            return fail("document has no tracks".into());
        }
        for (ti, track) in self.tracks.iter().enumerate() {
            let mut prev: Option<&NoteEvent> = None;
            for ev in track {
                if ev.pitch > 127 {
                    return fail(format!("track {ti}: pitch {} out of range", ev.pitch));
                }
                if ev.velocity == 0 || ev.velocity > 127 {
                    return fail(format!("track {ti}: velocity {} out of range", ev.velocity));
                }
                if ev.duration == 0 {
                    return fail(format!("track {ti}: zero-duration note"));
                }
                if let Some(p) = prev {
                    if (ev.onset, ev.pitch) < (p.onset, p.pitch) {
                        return fail(format!("track {ti}: events not sorted by onset then pitch"));
                    }
                }
                prev = Some(ev);
            }
            // Overlapping notes of the same pitch cannot be paired back up
            // unambiguously from on/off messages on a single track.
            let mut by_pitch: std::collections::HashMap<u8, u64> = std::collections::HashMap::new();
            for ev in track {
                if let Some(&end) = by_pitch.get(&ev.pitch) {
                    if ev.onset < end {
                        return fail(format!(
                            "track {ti}: overlapping notes of pitch {} are ambiguous in SMF",
                            ev.pitch
                        ));
                    }
                }
                let end = by_pitch.entry(ev.pitch).or_insert(0);
                *end = (*end).max(ev.onset + ev.duration);
            }
        }
        Ok(())
    }
}

/// A note, chord, or rest with an exact duration in quarter lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreElement {
    Note { pitch: u8, duration: QuarterLength },
    Chord { pitches: Vec<u8>, duration: QuarterLength },
    Rest { duration: QuarterLength },
}

impl ScoreElement {
    pub fn duration(&self) -> QuarterLength {
        match self {
            ScoreElement::Note { duration, .. }
            | ScoreElement::Chord { duration, .. }
            | ScoreElement::Rest { duration } => *duration,
        }
    }

    /// Pitches sounded by this element; empty for a rest.
    pub fn pitches(&self) -> &[u8] {
        match self {
            ScoreElement::Note { pitch, .. } => std::slice::from_ref(pitch),
            ScoreElement::Chord { pitches, .. } => pitches,
            ScoreElement::Rest { .. } => &[],
        }
    }

    pub fn is_rest(&self) -> bool {
        matches!(self, ScoreElement::Rest { .. })
    }
}

/// Flatten all tracks into one ordered element stream.
///
/// Events are merged by quantized onset: coinciding onsets form a chord whose
/// duration is the longest member's, and any grid-sized gap past the previous
/// element's end becomes a rest. Durations snap to the nearest grid multiple
/// with a one-step minimum.
pub fn extract_elements(
    doc: &MidiDocument,
    grid: QuarterLength,
) -> Result<Vec<ScoreElement>, MidiError> {
    if !grid.is_positive() {
        return Err(MidiError::InvalidGrid);
    }
    let tpq = i64::from(doc.ticks_per_quarter);
    if tpq <= 0 {
        return Err(MidiError::InvariantViolation("nonpositive ticks_per_quarter".into()));
    }

    let mut events: Vec<&NoteEvent> = doc.tracks.iter().flatten().collect();
    if events.is_empty() {
        return Ok(Vec::new());
    }
    events.sort_by_key(|e| (e.onset, e.pitch));

    // Quantize onsets and durations to the grid.
    let quantized: Vec<(QuarterLength, u8, QuarterLength)> = events
        .iter()
        .map(|e| {
            let onset = QuarterLength::new(e.onset as i64, tpq).snap_to_grid(grid);
            let mut dur = QuarterLength::new(e.duration as i64, tpq).snap_to_grid(grid);
            if !dur.is_positive() {
                dur = grid;
            }
            (onset, e.pitch, dur)
        })
        .collect();

    let mut elements = Vec::new();
    let mut cursor = QuarterLength::ZERO;
    let mut i = 0;
    while i < quantized.len() {
        let onset = quantized[i].0;
        // Collect every event whose quantized onset coincides.
        let mut pitches = std::collections::BTreeSet::new();
        let mut duration = QuarterLength::ZERO;
        while i < quantized.len() && quantized[i].0 == onset {
            pitches.insert(quantized[i].1);
            duration = duration.max(quantized[i].2);
            i += 1;
        }

        let gap = onset - cursor;
        if gap >= grid {
            elements.push(ScoreElement::Rest { duration: gap });
        }
        let pitches: Vec<u8> = pitches.into_iter().collect();
        elements.push(if pitches.len() == 1 {
            ScoreElement::Note { pitch: pitches[0], duration }
        } else {
            ScoreElement::Chord { pitches, duration }
        });
        cursor = onset + duration;
    }
    Ok(elements)
}

/// Lay elements end to end as a single-track format-0 document.
///
/// Inverse of [`extract_elements`] for grid-aligned streams. All notes are
/// written at velocity 80.
pub fn elements_to_midi(
    elements: &[ScoreElement],
    tpq: u16,
    tempo_us_per_quarter: u32,
) -> Result<MidiDocument, MidiError> {
    let tpq_r = i64::from(tpq);
    let mut track = Vec::new();
    let mut cursor = QuarterLength::ZERO;
    for el in elements {
        let dur_ticks = el.duration() * tpq_r;
        let onset_ticks = cursor * tpq_r;
        if dur_ticks.denom() != 1 || onset_ticks.denom() != 1 || !dur_ticks.is_positive() {
            return Err(MidiError::NonRepresentableDuration(el.duration(), tpq));
        }
        for &pitch in el.pitches() {
            track.push(NoteEvent {
                pitch,
                onset: onset_ticks.numer() as u64,
                duration: dur_ticks.numer() as u64,
                velocity: 80,
            });
        }
        cursor = cursor + el.duration();
    }
    let mut doc = MidiDocument::new(0, tpq, vec![track]);
    doc.tempo_us_per_quarter = tempo_us_per_quarter;
    Ok(doc)
}
