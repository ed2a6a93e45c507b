//! Binary Standard MIDI File reader and writer.
//!
//! Reads formats 0 and 1 with running status, matches note-on/note-off pairs
//! FIFO per pitch, and honors set-tempo (0x51) and end-of-track (0x2F) meta
//! events; everything else is skipped by length. Writing never relies on
//! running status.

use super::{MidiDocument, MidiError, NoteEvent, DEFAULT_TEMPO};
use std::collections::{BTreeMap, VecDeque};

const VARLEN_MAX: u32 = 0x0FFF_FFFF;

/// Decode one variable-length quantity from the start of `bytes`.
///
/// Returns the value and the number of bytes consumed (1 to 4).
pub fn decode_varlen(bytes: &[u8]) -> Result<(u32, usize), MidiError> {
    let mut value = 0u32;
    for i in 0..4 {
        let &b = bytes.get(i).ok_or(MidiError::TruncatedVarlen)?;
        value = (value << 7) | u32::from(b & 0x7F);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(MidiError::OverlongVarlen)
}

/// Encode a value as a shortest-form variable-length quantity.
pub fn encode_varlen(value: u32) -> Result<Vec<u8>, MidiError> {
    if value > VARLEN_MAX {
        return Err(MidiError::ValueOutOfRange(value));
    }
    let mut out = vec![(value & 0x7F) as u8];
    let mut rest = value >> 7;
    while rest > 0 {
        out.push((rest & 0x7F) as u8 | 0x80);
        rest >>= 7;
    }
    out.reverse();
    Ok(out)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], MidiError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or(MidiError::TruncatedChunk(what))?;
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, MidiError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16be(&mut self, what: &'static str) -> Result<u16, MidiError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32be(&mut self, what: &'static str) -> Result<u32, MidiError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varlen(&mut self) -> Result<u32, MidiError> {
        let (value, consumed) = decode_varlen(&self.data[self.pos..])?;
        self.pos += consumed;
        Ok(value)
    }

    fn done(&self) -> bool {
        self.pos >= self.data.len()
    }
}

/// Parse a Standard MIDI File into matched note events.
pub fn parse_midi(data: &[u8]) -> Result<MidiDocument, MidiError> {
    let mut r = Reader::new(data);
    if r.take(4, "MThd").map_err(|_| MidiError::BadHeader)? != b"MThd" {
        return Err(MidiError::BadHeader);
    }
    let header_len = r.u32be("MThd").map_err(|_| MidiError::BadHeader)?;
    if header_len < 6 {
        return Err(MidiError::BadHeader);
    }
    let format = r.u16be("MThd").map_err(|_| MidiError::BadHeader)?;
    let ntrks = r.u16be("MThd").map_err(|_| MidiError::BadHeader)?;
    let division = r.u16be("MThd").map_err(|_| MidiError::BadHeader)?;
    r.take(header_len as usize - 6, "MThd").map_err(|_| MidiError::BadHeader)?;

    if format > 1 {
        return Err(MidiError::UnsupportedFormat(format));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::SmpteTimeDivision);
    }
    if division < 24 {
        return Err(MidiError::BadHeader);
    }

    let mut tracks = Vec::new();
    let mut tempo: Option<u32> = None;
    while tracks.len() < usize::from(ntrks) {
        let tag = r.take(4, "chunk header")?;
        let len = r.u32be("chunk header")? as usize;
        let body = r.take(len, "MTrk")?;
        if tag == b"MTrk" {
            let (events, track_tempo) = parse_track(body)?;
            tempo = tempo.or(track_tempo);
            tracks.push(events);
        }
    }

    let mut doc = MidiDocument::new(format, division, tracks);
    doc.tempo_us_per_quarter = tempo.unwrap_or(DEFAULT_TEMPO);
    Ok(doc)
}

fn parse_track(body: &[u8]) -> Result<(Vec<NoteEvent>, Option<u32>), MidiError> {
    let mut r = Reader::new(body);
    let mut tick = 0u64;
    let mut running_status: Option<u8> = None;
    let mut open: BTreeMap<u8, VecDeque<(u64, u8)>> = BTreeMap::new();
    let mut events = Vec::new();
    let mut tempo: Option<u32> = None;

    let close = |pitch: u8, tick: u64, open: &mut BTreeMap<u8, VecDeque<(u64, u8)>>, events: &mut Vec<NoteEvent>| {
        match open.get_mut(&pitch).and_then(VecDeque::pop_front) {
            Some((onset, velocity)) => events.push(NoteEvent {
                pitch,
                onset,
                duration: tick.saturating_sub(onset).max(1),
                velocity,
            }),
            None => log::warn!("event=orphan_note_off pitch={pitch} tick={tick}"),
        }
    };

    while !r.done() {
        tick += u64::from(r.varlen()?);
        let mut status = r.u8("event")?;
        if status < 0x80 {
            status = running_status.ok_or(MidiError::TruncatedChunk("running status"))?;
            r.pos -= 1;
        } else if status < 0xF0 {
            running_status = Some(status);
        } else {
            running_status = None;
        }

        match status & 0xF0 {
            0x90 => {
                let pitch = r.u8("note on")? & 0x7F;
                let velocity = r.u8("note on")? & 0x7F;
                if velocity > 0 {
                    open.entry(pitch).or_default().push_back((tick, velocity));
                } else {
                    close(pitch, tick, &mut open, &mut events);
                }
            }
            0x80 => {
                let pitch = r.u8("note off")? & 0x7F;
                r.u8("note off")?;
                close(pitch, tick, &mut open, &mut events);
            }
            0xA0 | 0xB0 | 0xE0 => {
                r.take(2, "channel event")?;
            }
            0xC0 | 0xD0 => {
                r.take(1, "channel event")?;
            }
            0xF0 => match status {
                0xFF => {
                    let kind = r.u8("meta event")?;
                    let len = r.varlen()? as usize;
                    let payload = r.take(len, "meta event")?;
                    match kind {
                        0x2F => break,
                        0x51 if len == 3 => {
                            let us = u32::from_be_bytes([0, payload[0], payload[1], payload[2]]);
                            tempo = tempo.or(Some(us));
                        }
                        _ => {}
                    }
                }
                0xF0 | 0xF7 => {
                    let len = r.varlen()? as usize;
                    r.take(len, "sysex event")?;
                }
                _ => return Err(MidiError::TruncatedChunk("unknown system event")),
            },
            _ => unreachable!(),
        }
    }

    // Anything still sounding closes at the end-of-track tick.
    let track_end = tick;
    for (&pitch, queue) in &mut open {
        for &(onset, velocity) in queue.iter() {
            events.push(NoteEvent {
                pitch,
                onset,
                duration: track_end.saturating_sub(onset).max(1),
                velocity,
            });
        }
        queue.clear();
    }

    events.sort_by_key(|e| (e.onset, e.pitch));
    Ok((events, tempo))
}

/// Serialize a document as SMF bytes.
///
/// Format 0 merges every track into one; format 1 keeps tracks separate.
/// The tempo is written at tick 0 of the first track. Note-offs sort before
/// note-ons at equal ticks so back-to-back repeated pitches stay unambiguous.
pub fn write_midi(doc: &MidiDocument) -> Result<Vec<u8>, MidiError> {
    doc.validate()?;

    let merged;
    let tracks: Vec<&[NoteEvent]> = if doc.format == 0 {
        merged = {
            let mut all: Vec<NoteEvent> = doc.tracks.iter().flatten().copied().collect();
            all.sort_by_key(|e| (e.onset, e.pitch));
            all
        };
        vec![&merged]
    } else {
        doc.tracks.iter().map(Vec::as_slice).collect()
    };

    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&doc.format.to_be_bytes());
    out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&doc.ticks_per_quarter.to_be_bytes());

    for (index, track) in tracks.iter().enumerate() {
        let mut body = Vec::new();
        if index == 0 {
            let t = doc.tempo_us_per_quarter.to_be_bytes();
            body.extend_from_slice(&[0x00, 0xFF, 0x51, 0x03, t[1], t[2], t[3]]);
        }

        // (tick, class, pitch, velocity); offs (class 0) precede ons.
        let mut items: Vec<(u64, u8, u8, u8)> = Vec::with_capacity(track.len() * 2);
        for ev in *track {
            items.push((ev.onset, 1, ev.pitch, ev.velocity));
            items.push((ev.onset + ev.duration, 0, ev.pitch, 0x40));
        }
        items.sort_unstable();

        let mut prev_tick = 0u64;
        for (tick, class, pitch, velocity) in items {
            let delta = u32::try_from(tick - prev_tick)
                .ok()
                .filter(|&d| d <= VARLEN_MAX)
                .ok_or(MidiError::ValueOutOfRange(u32::MAX))?;
            body.extend_from_slice(&encode_varlen(delta)?);
            let status = if class == 1 { 0x90 } else { 0x80 };
            body.extend_from_slice(&[status, pitch, velocity]);
            prev_tick = tick;
        }
        body.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    Ok(out)
}
