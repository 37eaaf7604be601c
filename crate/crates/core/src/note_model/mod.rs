// SPDX-License-Identifier: MIT OR Apache-2.0

//! Canonical note sequences and their timing context.
//!
//! Everything downstream (graphs, features, evaluation) consumes a [`Piece`]:
//! an onset-sorted list of [`Note`]s in integer ticks plus the [`TimingContext`]
//! needed to express ticks as quarter-note beats or seconds. Ticks stay integral
//! until a value is reported, so tick equality is exact.

mod csv;
mod midi;

pub use self::csv::{parse_note_csv, to_note_csv, NoteCsvOptions};
pub use self::midi::{encode_midi, parse_midi, parse_midi_with, MidiOptions, TempoPolicy};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TICKS_PER_QUARTER: u32 = 480;
pub const DEFAULT_TEMPO_US_PER_QUARTER: u32 = 500_000;
pub const DEFAULT_VELOCITY: u8 = 64;

/// A single sounding note.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    pub onset_ticks: u64,
    pub offset_ticks: u64,
    pub velocity: u8,
    pub track: u16,
}

impl Note {
    pub fn new(pitch: u8, onset_ticks: u64, offset_ticks: u64) -> Self {
        Note {
            pitch,
            onset_ticks,
            offset_ticks,
            velocity: DEFAULT_VELOCITY,
            track: 0,
        }
    }

    pub fn with_velocity(mut self, velocity: u8) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn with_track(mut self, track: u16) -> Self {
        self.track = track;
        self
    }

    pub fn duration_ticks(&self) -> u64 {
        self.offset_ticks - self.onset_ticks
    }

    fn validate(&self) -> Result<()> {
        if self.pitch > 127 {
            return Err(Error::InvalidParams(format!(
                "pitch {} outside 0..=127",
                self.pitch
            )));
        }
        if self.velocity > 127 {
            return Err(Error::InvalidParams(format!(
                "velocity {} outside 0..=127",
                self.velocity
            )));
        }
        if self.offset_ticks <= self.onset_ticks {
            return Err(Error::InvalidParams(format!(
                "note offset {} is not after onset {}",
                self.offset_ticks, self.onset_ticks
            )));
        }
        Ok(())
    }
}

/// Time signature as written; the beat unit is always the quarter note.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeSignature {
    pub numerator: u8,
    pub denominator: u8,
}

impl TimeSignature {
    pub fn new(numerator: u8, denominator: u8) -> Result<Self> {
        if numerator == 0 || denominator == 0 {
            return Err(Error::InvalidParams(format!(
                "time signature {numerator}/{denominator} must be positive"
            )));
        }
        Ok(TimeSignature {
            numerator,
            denominator,
        })
    }

    /// Bar length in quarter-note beats: `numerator * 4 / denominator`.
    pub fn bar_length_beats(&self) -> f64 {
        f64::from(self.numerator) * 4.0 / f64::from(self.denominator)
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        TimeSignature {
            numerator: 4,
            denominator: 4,
        }
    }
}

impl std::fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl std::str::FromStr for TimeSignature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, d) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidParams(format!("time signature `{s}` is not n/d")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u8>()
                .map_err(|_| Error::InvalidParams(format!("time signature `{s}` is not n/d")))
        };
        TimeSignature::new(parse(n)?, parse(d)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimingContext {
    pub ticks_per_quarter: u32,
    pub tempo_us_per_quarter: u32,
    pub time_signature: TimeSignature,
}

impl Default for TimingContext {
    fn default() -> Self {
        TimingContext {
            ticks_per_quarter: DEFAULT_TICKS_PER_QUARTER,
            tempo_us_per_quarter: DEFAULT_TEMPO_US_PER_QUARTER,
            time_signature: TimeSignature::default(),
        }
    }
}

impl TimingContext {
    pub fn with_ticks_per_quarter(ticks_per_quarter: u32) -> Self {
        TimingContext {
            ticks_per_quarter,
            ..TimingContext::default()
        }
    }

    /// Quarter-note beats for a tick position; a single rounding step.
    pub fn beats(&self, ticks: u64) -> f64 {
        ticks as f64 / f64::from(self.ticks_per_quarter)
    }

    pub fn seconds(&self, ticks: u64) -> f64 {
        let micros = u128::from(ticks) * u128::from(self.tempo_us_per_quarter);
        micros as f64 / (f64::from(self.ticks_per_quarter) * 1e6)
    }

    pub fn bar_length_beats(&self) -> f64 {
        self.time_signature.bar_length_beats()
    }
}

/// Counters for irregularities tolerated during ingestion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Note-ons still sounding at the end of their track, closed at the last tick.
    pub unmatched_note_ons: usize,
    /// Note-offs with no sounding note to close.
    pub orphan_note_offs: usize,
    /// Zero-length notes that were discarded.
    pub dropped_notes: usize,
    /// CSV rows discarded for a non-positive duration or a negative onset.
    pub dropped_rows: usize,
}

/// An immutable, onset-sorted note sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    notes: Vec<Note>,
    timing: TimingContext,
    source_path: String,
    report: IngestReport,
}

impl Piece {
    /// Validates every note and sorts by `(onset, pitch)`; equal keys keep input order.
    pub fn new(
        mut notes: Vec<Note>,
        timing: TimingContext,
        source_path: impl Into<String>,
    ) -> Result<Self> {
        if timing.ticks_per_quarter == 0 {
            return Err(Error::InvalidParams("ticks_per_quarter must be positive".into()));
        }
        if timing.tempo_us_per_quarter == 0 {
            return Err(Error::InvalidParams("tempo must be positive".into()));
        }
        for note in &notes {
            note.validate()?;
        }
        notes.sort_by_key(|n| (n.onset_ticks, n.pitch));
        Ok(Piece {
            notes,
            timing,
            source_path: source_path.into(),
            report: IngestReport::default(),
        })
    }

    pub(crate) fn with_report(mut self, report: IngestReport) -> Self {
        self.report = report;
        self
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn timing(&self) -> &TimingContext {
        &self.timing
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    /// `(beats, seconds)` of the onset of note `index`.
    pub fn note_time(&self, index: usize) -> Result<(f64, f64)> {
        let note = self.notes.get(index).ok_or(Error::IndexOutOfRange {
            index,
            len: self.notes.len(),
        })?;
        Ok((
            self.timing.beats(note.onset_ticks),
            self.timing.seconds(note.onset_ticks),
        ))
    }

    pub fn onset_beats(&self, index: usize) -> Option<f64> {
        self.notes
            .get(index)
            .map(|n| self.timing.beats(n.onset_ticks))
    }

    /// Latest offset over all notes, i.e. the end of the piece.
    pub fn end_ticks(&self) -> u64 {
        self.notes.iter().map(|n| n.offset_ticks).max().unwrap_or(0)
    }

    pub fn duration_beats(&self) -> f64 {
        self.timing.beats(self.end_ticks())
    }

    pub(crate) fn require_notes(&self, required: usize) -> Result<()> {
        if self.notes.len() < required {
            return Err(Error::TooFewNotes {
                notes: self.notes.len(),
                required,
            });
        }
        Ok(())
    }
}

/// Column layout assumed for headerless note CSV files: onset, MIDI pitch,
/// morphetic pitch, duration, staff, measure.
pub const HEADERLESS_COLUMNS: [&str; 6] = ["onset", "pitch", "morph", "duration", "staff", "measure"];

/// Settings for [`load_piece`].
#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub tempo_policy: TempoPolicy,
    /// Tick resolution used for CSV input.
    pub ticks_per_quarter: u32,
    /// Explicit columns for headerless CSV; `None` detects a header row and
    /// falls back to [`HEADERLESS_COLUMNS`].
    pub csv_columns: Option<Vec<String>>,
    pub time_signature: Option<TimeSignature>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            tempo_policy: TempoPolicy::default(),
            ticks_per_quarter: DEFAULT_TICKS_PER_QUARTER,
            csv_columns: None,
            time_signature: None,
        }
    }
}

/// Parses MIDI (`.mid`, `.midi`) or note CSV (`.csv`) content.
pub fn load_piece_bytes(bytes: &[u8], path: &str, options: &LoadOptions) -> Result<Piece> {
    let ext = std::path::Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let mut piece = match ext.as_deref() {
        Some("mid" | "midi") => parse_midi_with(
            bytes,
            &MidiOptions {
                tempo_policy: options.tempo_policy,
                source_path: path.to_string(),
            },
        )?,
        Some("csv") => {
            let text = std::str::from_utf8(bytes).map_err(|_| Error::MalformedFile(format!("{path}: not UTF-8")))?;
            let columns = options.csv_columns.clone().or_else(|| {
                let first = text.lines().next().unwrap_or("").split(',').next().unwrap_or("").trim();
                first
                    .parse::<f64>()
                    .is_ok()
                    .then(|| HEADERLESS_COLUMNS.map(String::from).to_vec())
            });
            parse_note_csv(
                text,
                &NoteCsvOptions {
                    timing: TimingContext::with_ticks_per_quarter(options.ticks_per_quarter),
                    columns,
                    source_path: path.to_string(),
                },
            )?
        }
        _ => return Err(Error::UnsupportedFormat(format!("{path}: expected .mid, .midi or .csv"))),
    };
    if let Some(ts) = options.time_signature {
        piece.timing.time_signature = ts;
    }
    Ok(piece)
}

pub fn load_piece(path: &std::path::Path, options: &LoadOptions) -> Result<Piece> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_piece_bytes(&bytes, &path.to_string_lossy(), options)
}

/// Free-function form of [`Piece::note_time`].
pub fn note_time(piece: &Piece, note_index: usize) -> Result<(f64, f64)> {
    piece.note_time(note_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piece(onsets: &[u64]) -> Piece {
        let notes = onsets.iter().map(|&t| Note::new(60, t, t + 240)).collect();
        Piece::new(notes, TimingContext::default(), "t").unwrap()
    }

    #[test]
    fn note_time_examples() {
        let p = piece(&[0, 480, 720]);
        assert_eq!(p.note_time(1).unwrap(), (1.0, 0.5));
        assert_eq!(p.note_time(0).unwrap(), (0.0, 0.0));
        assert_eq!(p.note_time(2).unwrap(), (1.5, 0.75));
        assert!(matches!(
            p.note_time(3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn sorting_is_stable_on_onset_then_pitch() {
        let notes = vec![
            Note::new(64, 480, 960),
            Note::new(60, 0, 480).with_track(1),
            Note::new(60, 0, 960).with_track(2),
            Note::new(55, 0, 480),
        ];
        let p = Piece::new(notes, TimingContext::default(), "t").unwrap();
        let keys: Vec<_> = p.notes().iter().map(|n| (n.onset_ticks, n.pitch, n.track)).collect();
        assert_eq!(keys, vec![(0, 55, 0), (0, 60, 1), (0, 60, 2), (480, 64, 0)]);
    }

    #[test]
    fn rejects_invalid_notes() {
        let bad = vec![Note::new(60, 10, 10)];
        assert!(Piece::new(bad, TimingContext::default(), "t").is_err());
        let bad = vec![Note::new(128, 0, 10)];
        assert!(Piece::new(bad, TimingContext::default(), "t").is_err());
    }

    #[test]
    fn bar_lengths_use_quarter_note_beats() {
        assert_eq!(TimeSignature::new(4, 4).unwrap().bar_length_beats(), 4.0);
        assert_eq!(TimeSignature::new(3, 8).unwrap().bar_length_beats(), 1.5);
        assert_eq!(TimeSignature::new(6, 8).unwrap().bar_length_beats(), 3.0);
        assert_eq!("12/8".parse::<TimeSignature>().unwrap().bar_length_beats(), 6.0);
        assert!("0/4".parse::<TimeSignature>().is_err());
    }

    #[test]
    fn duration_is_latest_offset() {
        let notes = vec![Note::new(60, 0, 1920), Note::new(62, 480, 960)];
        let p = Piece::new(notes, TimingContext::default(), "t").unwrap();
        assert_eq!(p.duration_beats(), 4.0);
    }

    #[test]
    fn load_by_extension() {
        let options = LoadOptions::default();
        let headed = load_piece_bytes(b"onset,pitch,duration\n0,60,1\n", "a.csv", &options).unwrap();
        let bare = load_piece_bytes(b"0.0,60,59,1.0,1,0\n", "b.CSV", &options).unwrap();
        assert_eq!(headed.notes(), bare.notes());
        let midi = encode_midi(&headed);
        assert_eq!(load_piece_bytes(&midi, "c.mid", &options).unwrap().notes(), headed.notes());
        assert!(matches!(load_piece_bytes(b"", "d.txt", &options), Err(Error::UnsupportedFormat(_))));
        let forced = LoadOptions {
            time_signature: Some(TimeSignature::new(3, 4).unwrap()),
            ..LoadOptions::default()
        };
        let p = load_piece_bytes(&midi, "c.mid", &forced).unwrap();
        assert_eq!(p.timing().bar_length_beats(), 3.0);
    }

}
