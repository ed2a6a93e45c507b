//! Note.Duration feature encoding.
//!
//! Each non-rest element of a piece becomes one numeric column: a note is its
//! pitch combined with its duration, a chord is the product of its members'
//! values. Rows are padded with zeros (or truncated) to a fixed width so every
//! piece occupies one CSV row of the same shape.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::midi_io::ScoreElement;
use crate::ql::QuarterLength;

/// Default row width: the upper bound of the generator's piece-length range.
pub const DEFAULT_FEATURE_WIDTH: usize = 1200;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("pitch {0} outside 0..=127")]
    InvalidPitch(u8),
    #[error("duration {0} is not positive")]
    NonPositiveDuration(QuarterLength),
    #[error("chord needs at least 2 pitches, got {0}")]
    TooFewPitches(usize),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("piece {0} has no notes after dropping rests")]
    EmptyAfterRests(String),
    #[error("invalid feature table: {0}")]
    InvalidTable(String),
    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
    #[error("feature I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

/// How a note's pitch and duration combine into one real number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EncodingMode {
    /// pitch + duration. The default; collides once durations reach a whole
    /// quarter length (e.g. 72 + 3/1 = 74 + 1/1 = 75).
    Additive,
    /// pitch + 0.digits(numer)digits(denom): duration digits packed below the
    /// decimal point, so distinct pitches can never collide.
    Concatenated,
}

impl std::fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncodingMode::Additive => "additive",
            EncodingMode::Concatenated => "concatenated",
        })
    }
}

fn check_note(pitch: u8, duration: QuarterLength) -> Result<(), FeatureError> {
    if pitch > 127 {
        return Err(FeatureError::InvalidPitch(pitch));
    }
    if !duration.is_positive() {
        return Err(FeatureError::NonPositiveDuration(duration));
    }
    Ok(())
}

/// pitch + duration as a real number.
pub fn note_value(pitch: u8, duration: QuarterLength) -> Result<f64, FeatureError> {
    check_note(pitch, duration)?;
    Ok(f64::from(pitch) + duration.to_f64())
}

fn concatenated_note_value(pitch: u8, duration: QuarterLength) -> Result<f64, FeatureError> {
    check_note(pitch, duration)?;
    let digits = format!("{}{}", duration.numer(), duration.denom());
    let packed: f64 = digits.parse().expect("decimal digits");
    Ok(f64::from(pitch) + packed / 10f64.powi(digits.len() as i32))
}

fn encoded_note_value(
    mode: EncodingMode,
    pitch: u8,
    duration: QuarterLength,
) -> Result<f64, FeatureError> {
    match mode {
        EncodingMode::Additive => note_value(pitch, duration),
        EncodingMode::Concatenated => concatenated_note_value(pitch, duration),
    }
}

/// Product of the members' note values; the pitch list must be strictly ascending.
pub fn chord_value(pitches: &[u8], duration: QuarterLength) -> Result<f64, FeatureError> {
    encoded_chord_value(EncodingMode::Additive, pitches, duration)
}

fn encoded_chord_value(
    mode: EncodingMode,
    pitches: &[u8],
    duration: QuarterLength,
) -> Result<f64, FeatureError> {
    if pitches.len() < 2 {
        return Err(FeatureError::TooFewPitches(pitches.len()));
    }
    if !pitches.windows(2).all(|w| w[0] < w[1]) {
        return Err(FeatureError::InvariantViolation(format!(
            "chord pitches not strictly ascending: {pitches:?}"
        )));
    }
    let mut product = 1.0;
    for &p in pitches {
        product *= encoded_note_value(mode, p, duration)?;
    }
    Ok(product)
}

/// One piece as a fixed-width labeled row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub piece_id: String,
    /// +1 by composer, -1 generated.
    pub label: i8,
    pub values: Vec<f64>,
}

/// A set of rows sharing one width with unique piece ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    width: usize,
    rows: Vec<FeatureRow>,
}

impl FeatureTable {
    /// Validates widths, labels, id uniqueness and charset, and the
    /// zeros-only-at-the-tail padding rule.
    pub fn new(width: usize, rows: Vec<FeatureRow>) -> Result<Self, FeatureError> {
        let mut seen = std::collections::BTreeSet::new();
        for row in &rows {
            if row.values.len() != width {
                return Err(FeatureError::InvalidTable(format!(
                    "row {} has width {}, table width {width}",
                    row.piece_id,
                    row.values.len()
                )));
            }
            if row.label != 1 && row.label != -1 {
                return Err(FeatureError::InvalidTable(format!(
                    "row {} has label {}, expected 1 or -1",
                    row.piece_id, row.label
                )));
            }
            if row.piece_id.is_empty()
                || !row
                    .piece_id
                    .bytes()
                    .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
            {
                return Err(FeatureError::InvalidTable(format!(
                    "piece id {:?} not in [A-Za-z0-9_-]+",
                    row.piece_id
                )));
            }
            if !seen.insert(row.piece_id.clone()) {
                return Err(FeatureError::InvalidTable(format!(
                    "duplicate piece id {}",
                    row.piece_id
                )));
            }
            let mut padding = false;
            for &v in &row.values {
                if !v.is_finite() || v < 0.0 {
                    return Err(FeatureError::InvalidTable(format!(
                        "row {} has non-finite or negative value {v}",
                        row.piece_id
                    )));
                }
                if v == 0.0 {
                    padding = true;
                } else if padding {
                    return Err(FeatureError::InvalidTable(format!(
                        "row {} has a zero before a nonzero value",
                        row.piece_id
                    )));
                }
            }
        }
        Ok(FeatureTable { width, rows })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }
}

/// Encode one piece: rests dropped, notes and chords valued in order, then
/// zero-padded or truncated to width `n`.
pub fn encode_piece(
    elements: &[ScoreElement],
    n: usize,
    piece_id: &str,
    label: i8,
    mode: EncodingMode,
) -> Result<FeatureRow, FeatureError> {
    let mut values = Vec::new();
    for element in elements {
        match element {
            ScoreElement::Rest { .. } => {}
            ScoreElement::Note { pitch, duration } => {
                values.push(encoded_note_value(mode, *pitch, *duration)?);
            }
            ScoreElement::Chord { pitches, duration } => {
                values.push(encoded_chord_value(mode, pitches, *duration)?);
            }
        }
    }
    if values.is_empty() {
        return Err(FeatureError::EmptyAfterRests(piece_id.to_string()));
    }
    if values.len() > n {
        log::warn!(
            "event=feature_truncate piece_id={piece_id} kept={n} dropped={}",
            values.len() - n
        );
        values.truncate(n);
    }
    values.resize(n, 0.0);
    Ok(FeatureRow {
        piece_id: piece_id.to_string(),
        label,
        values,
    })
}

/// Pairs of distinct (pitch, duration) notes that map to the same additive value.
///
/// Scans pitches 0..=127 against the given durations; emitted as a diagnostic
/// so a run can report how collision-prone its duration vocabulary is.
pub fn collision_census(
    durations: &[QuarterLength],
) -> Vec<((u8, QuarterLength), (u8, QuarterLength))> {
    let mut by_value: BTreeMap<u64, Vec<(u8, QuarterLength)>> = BTreeMap::new();
    for pitch in 0..=127u8 {
        for &duration in durations {
            if let Ok(v) = note_value(pitch, duration) {
                by_value.entry(v.to_bits()).or_default().push((pitch, duration));
            }
        }
    }
    let mut pairs = Vec::new();
    for group in by_value.values() {
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                pairs.push((group[i], group[j]));
            }
        }
    }
    pairs
}

fn column_name(index: usize, n: usize) -> String {
    let width = n.to_string().len().max(4);
    format!("c{index:0width$}")
}

fn expected_header(n: usize) -> String {
    let mut header = String::from("piece_id,label");
    for i in 1..=n {
        header.push(',');
        header.push_str(&column_name(i, n));
    }
    header
}

/// Write `piece_id,label,c0001..cNNNN` rows. Values use the shortest decimal
/// form that parses back to the identical float, so a round trip is exact.
pub fn write_feature_csv(table: &FeatureTable, path: &Path) -> Result<(), FeatureError> {
    let mut out = expected_header(table.width());
    out.push('\n');
    for row in table.rows() {
        out.push_str(&row.piece_id);
        out.push(',');
        out.push_str(&row.label.to_string());
        for v in &row.values {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Exact inverse of [`write_feature_csv`].
pub fn read_feature_csv(path: &Path) -> Result<FeatureTable, FeatureError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(FeatureError::MalformedCsv {
        line: 1,
        message: "missing header".into(),
    })?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(FeatureError::MalformedCsv {
            line: 1,
            message: format!("header has {columns} columns, expected at least piece_id,label"),
        });
    }
    let n = columns - 2;
    if header != expected_header(n) {
        return Err(FeatureError::MalformedCsv {
            line: 1,
            message: format!("header does not match the {n}-column layout"),
        });
    }
    let mut rows = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        let mut cells = line.split(',');
        let piece_id = cells.next().unwrap_or_default().to_string();
        let label: i8 = cells
            .next()
            .ok_or_else(|| FeatureError::MalformedCsv {
                line: line_no,
                message: "missing label".into(),
            })?
            .parse()
            .map_err(|e| FeatureError::MalformedCsv {
                line: line_no,
                message: format!("bad label: {e}"),
            })?;
        if label != 1 && label != -1 {
            return Err(FeatureError::MalformedCsv {
                line: line_no,
                message: format!("label {label}, expected 1 or -1"),
            });
        }
        let values: Vec<f64> = cells
            .map(|c| {
                c.parse().map_err(|e| FeatureError::MalformedCsv {
                    line: line_no,
                    message: format!("bad value {c:?}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != n {
            return Err(FeatureError::MalformedCsv {
                line: line_no,
                message: format!("{} values, expected {n}", values.len()),
            });
        }
        rows.push(FeatureRow {
            piece_id,
            label,
            values,
        });
    }
    FeatureTable::new(n, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn ql(n: i64, d: i64) -> QuarterLength {
        QuarterLength::new(n, d)
    }

    #[test]
    fn note_value_oracles() {
        assert_eq!(note_value(60, ql(1, 2)).unwrap(), 60.5);
        assert_eq!(note_value(0, ql(1, 4)).unwrap(), 0.25);
        assert_eq!(note_value(72, ql(3, 1)).unwrap(), 75.0);
    }

    #[test]
    fn additive_collision_exists_and_is_reported() {
        let a = note_value(72, ql(3, 1)).unwrap();
        let b = note_value(74, ql(1, 1)).unwrap();
        assert_eq!(a, b);

        let durations: Vec<QuarterLength> =
            (1..=11).map(|n| ql(n, 12)).chain([ql(1, 1), ql(3, 1)]).collect();
        let census = collision_census(&durations);
        assert!(census.contains(&((72, ql(3, 1)), (74, ql(1, 1)))));
    }

    #[test]
    fn sub_quarter_twelfths_are_injective() {
        let mut seen = std::collections::BTreeSet::new();
        for pitch in 0..=127u8 {
            for n in 1..=11 {
                let v = note_value(pitch, ql(n, 12)).unwrap();
                assert!(seen.insert(v.to_bits()), "collision at pitch {pitch}, {n}/12");
            }
        }
        assert_eq!(seen.len(), 128 * 11);
        assert!(collision_census(&(1..=11).map(|n| ql(n, 12)).collect::<Vec<_>>()).is_empty());
    }

    #[test]
    fn chord_value_oracles() {
        assert_eq!(chord_value(&[60, 64], ql(1, 2)).unwrap(), 3902.25);
        assert_eq!(chord_value(&[60, 64, 67], ql(1, 1)).unwrap(), 269_620.0);
    }

    #[test]
    fn chord_rejects_bad_pitch_lists() {
        assert!(matches!(
            chord_value(&[60], ql(1, 2)),
            Err(FeatureError::TooFewPitches(1))
        ));
        assert!(matches!(
            chord_value(&[64, 60], ql(1, 2)),
            Err(FeatureError::InvariantViolation(_))
        ));
        assert!(matches!(
            chord_value(&[60, 60], ql(1, 2)),
            Err(FeatureError::InvariantViolation(_))
        ));
    }

    #[test]
    fn note_value_rejects_bad_input() {
        assert!(matches!(
            note_value(128, ql(1, 2)),
            Err(FeatureError::InvalidPitch(128))
        ));
        assert!(matches!(
            note_value(60, QuarterLength::ZERO),
            Err(FeatureError::NonPositiveDuration(_))
        ));
    }

    #[test]
    fn concatenated_mode_packs_duration_digits() {
        let v = encoded_note_value(EncodingMode::Concatenated, 60, ql(1, 2)).unwrap();
        assert!((v - 60.12).abs() < 1e-12, "got {v}");
        let a = encoded_note_value(EncodingMode::Concatenated, 72, ql(3, 1)).unwrap();
        let b = encoded_note_value(EncodingMode::Concatenated, 74, ql(1, 1)).unwrap();
        assert!((a - 72.31).abs() < 1e-12);
        assert!((b - 74.11).abs() < 1e-12);
        assert_ne!(a, b);
    }

    #[test]
    fn encode_pads_skips_rests_and_truncates() {
        let padded = encode_piece(
            &[ScoreElement::Note { pitch: 60, duration: ql(1, 1) }],
            3,
            "p",
            1,
            EncodingMode::Additive,
        )
        .unwrap();
        assert_eq!(padded.values, vec![61.0, 0.0, 0.0]);

        let mixed = encode_piece(
            &[
                ScoreElement::Rest { duration: ql(1, 1) },
                ScoreElement::Note { pitch: 60, duration: ql(1, 2) },
                ScoreElement::Chord { pitches: vec![60, 64], duration: ql(1, 2) },
            ],
            2,
            "q",
            -1,
            EncodingMode::Additive,
        )
        .unwrap();
        assert_eq!(mixed.values, vec![60.5, 3902.25]);

        let wide = encode_piece(
            &[ScoreElement::Note { pitch: 72, duration: ql(1, 4) }],
            1200,
            "r",
            1,
            EncodingMode::Additive,
        )
        .unwrap();
        assert_eq!(wide.values.len(), 1200);

        let truncated = encode_piece(
            &[
                ScoreElement::Note { pitch: 60, duration: ql(1, 4) },
                ScoreElement::Note { pitch: 62, duration: ql(1, 4) },
                ScoreElement::Note { pitch: 64, duration: ql(1, 4) },
            ],
            2,
            "s",
            1,
            EncodingMode::Additive,
        )
        .unwrap();
        assert_eq!(truncated.values, vec![60.25, 62.25]);
    }

    #[test]
    fn all_rests_is_an_error() {
        let err = encode_piece(
            &[ScoreElement::Rest { duration: ql(1, 1) }],
            4,
            "silent",
            1,
            EncodingMode::Additive,
        )
        .unwrap_err();
        assert!(matches!(err, FeatureError::EmptyAfterRests(id) if id == "silent"));
    }

    fn row(id: &str, label: i8, values: Vec<f64>) -> FeatureRow {
        FeatureRow { piece_id: id.into(), label, values }
    }

    #[test]
    fn table_validation_rejects_bad_rows() {
        let cases = [
            FeatureTable::new(2, vec![row("a", 1, vec![1.0])]),
            FeatureTable::new(2, vec![row("a", 0, vec![1.0, 0.0])]),
            FeatureTable::new(2, vec![row("a.b", 1, vec![1.0, 0.0])]),
            FeatureTable::new(2, vec![row("", 1, vec![1.0, 0.0])]),
            FeatureTable::new(
                2,
                vec![row("a", 1, vec![1.0, 0.0]), row("a", -1, vec![2.0, 0.0])],
            ),
            FeatureTable::new(2, vec![row("a", 1, vec![0.0, 1.0])]),
            FeatureTable::new(2, vec![row("a", 1, vec![-1.0, 0.0])]),
            FeatureTable::new(2, vec![row("a", 1, vec![f64::NAN, 0.0])]),
        ];
        for case in cases {
            assert!(matches!(case, Err(FeatureError::InvalidTable(_))));
        }
    }

    #[test]
    fn empty_table_round_trips_as_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        let table = FeatureTable::new(2, Vec::new()).unwrap();
        write_feature_csv(&table, &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "piece_id,label,c0001,c0002\n"
        );
        assert_eq!(read_feature_csv(&path).unwrap(), table);
    }

    #[test]
    fn single_row_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        let table = FeatureTable::new(2, vec![row("id", 1, vec![61.0, 0.0])]).unwrap();
        write_feature_csv(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "id,1,61,0");
        assert_eq!(read_feature_csv(&path).unwrap(), table);
    }

    #[test]
    fn random_tables_round_trip_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let dir = tempfile::tempdir().unwrap();
        for case in 0..50 {
            let width = rng.gen_range(1..=8);
            let n_rows = rng.gen_range(0..=12);
            let rows: Vec<FeatureRow> = (0..n_rows)
                .map(|i| {
                    let nonzero = rng.gen_range(0..=width);
                    let mut values = vec![0.0; width];
                    for v in &mut values[..nonzero] {
                        *v = rng.gen_range(1e-6..1e9);
                    }
                    row(
                        &format!("piece_{case}_{i}"),
                        if rng.gen_bool(0.5) { 1 } else { -1 },
                        values,
                    )
                })
                .collect();
            let table = FeatureTable::new(width, rows).unwrap();
            let path = dir.path().join(format!("t{case}.csv"));
            write_feature_csv(&table, &path).unwrap();
            assert_eq!(read_feature_csv(&path).unwrap(), table, "case {case}");
        }
    }

    #[test]
    fn malformed_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, text: &str| {
            let path = dir.path().join(name);
            std::fs::write(&path, text).unwrap();
            path
        };
        let bad_header = write("h.csv", "id,label,c0001\nx,1,1.0\n");
        let bad_label = write("l.csv", "piece_id,label,c0001\nx,2,1.0\n");
        let bad_value = write("v.csv", "piece_id,label,c0001\nx,1,abc\n");
        let bad_count = write("c.csv", "piece_id,label,c0001,c0002\nx,1,1.0\n");
        assert!(matches!(
            read_feature_csv(&bad_header),
            Err(FeatureError::MalformedCsv { line: 1, .. })
        ));
        assert!(matches!(
            read_feature_csv(&bad_label),
            Err(FeatureError::MalformedCsv { line: 2, .. })
        ));
        assert!(matches!(
            read_feature_csv(&bad_value),
            Err(FeatureError::MalformedCsv { line: 2, .. })
        ));
        assert!(matches!(
            read_feature_csv(&bad_count),
            Err(FeatureError::MalformedCsv { line: 2, .. })
        ));
    }
}
