// SPDX-License-Identifier: MIT OR Apache-2.0

//! Note-list CSV ingestion.
//!
//! Required columns are `onset` and `pitch`, plus either `duration` or
//! `offset`; `velocity` and `track` are optional and anything else is ignored.
//! Beat values accept decimals (`1.5`) and fractions (`3/2`) and are converted
//! to ticks with integer arithmetic.

use std::fmt::Write as _;

use super::{IngestReport, Note, Piece, TimingContext, DEFAULT_VELOCITY};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct NoteCsvOptions {
    pub timing: TimingContext,
    /// Column names for headerless input; `None` reads them from the first row.
    pub columns: Option<Vec<String>>,
    pub source_path: String,
}

#[derive(Default)]
struct Columns {
    onset: Option<usize>,
    pitch: Option<usize>,
    duration: Option<usize>,
    offset: Option<usize>,
    velocity: Option<usize>,
    track: Option<usize>,
}

impl Columns {
    fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut cols = Columns::default();
        for (i, name) in names.into_iter().enumerate() {
            let slot = match name.trim().to_ascii_lowercase().as_str() {
                "onset" => &mut cols.onset,
                "pitch" => &mut cols.pitch,
                "duration" => &mut cols.duration,
                "offset" => &mut cols.offset,
                "velocity" => &mut cols.velocity,
                "track" => &mut cols.track,
                _ => continue,
            };
            slot.get_or_insert(i);
        }
        if cols.onset.is_none() {
            return Err(Error::MissingColumn("onset".into()));
        }
        if cols.pitch.is_none() {
            return Err(Error::MissingColumn("pitch".into()));
        }
        if cols.duration.is_none() && cols.offset.is_none() {
            return Err(Error::MissingColumn("duration".into()));
        }
        Ok(cols)
    }
}

pub fn parse_note_csv(text: &str, options: &NoteCsvOptions) -> Result<Piece> {
    let tpq = options.timing.ticks_per_quarter;
    if tpq == 0 {
        return Err(Error::InvalidParams("ticks_per_quarter must be positive".into()));
    }
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(options.columns.is_none())
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes());
    let cols = match &options.columns {
        Some(names) => Columns::from_names(names.iter().map(String::as_str))?,
        None => Columns::from_names(reader.headers()?.iter())?,
    };

    let mut report = IngestReport::default();
    let mut notes = Vec::new();
    for (row_index, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_index + 1;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let field = |col: Option<usize>| col.and_then(|c| record.get(c)).filter(|s| !s.is_empty());
        let required = |col: Option<usize>, name: &str| {
            field(col).ok_or_else(|| Error::MalformedRow {
                row,
                message: format!("empty `{name}`"),
            })
        };

        let onset = beats_to_ticks(required(cols.onset, "onset")?, tpq, row)?;
        let offset = match (field(cols.offset), field(cols.duration)) {
            (Some(off), _) => beats_to_ticks(off, tpq, row)?,
            (None, Some(dur)) => onset + beats_to_ticks(dur, tpq, row)?,
            (None, None) => {
                return Err(Error::MalformedRow {
                    row,
                    message: "neither duration nor offset given".into(),
                })
            }
        };
        let pitch = parse_int(required(cols.pitch, "pitch")?, row, "pitch", 0, 127)?;
        let velocity = match field(cols.velocity) {
            Some(v) => parse_int(v, row, "velocity", 0, 127)?,
            None => i64::from(DEFAULT_VELOCITY),
        };
        let track = match field(cols.track) {
            Some(v) => parse_int(v, row, "track", 0, i64::from(u16::MAX))?,
            None => 0,
        };

        if onset < 0 || offset <= onset {
            report.dropped_rows += 1;
            continue;
        }
        notes.push(Note {
            pitch: pitch as u8,
            onset_ticks: onset as u64,
            offset_ticks: offset as u64,
            velocity: velocity as u8,
            track: track as u16,
        });
    }
    Ok(Piece::new(notes, options.timing, options.source_path.clone())?.with_report(report))
}

/// Serializes with exact fractional beats so that re-parsing at the same
/// `ticks_per_quarter` reproduces every tick value.
pub fn to_note_csv(piece: &Piece) -> String {
    let tpq = u64::from(piece.timing().ticks_per_quarter);
    let mut out = String::from("onset,pitch,duration,velocity,track\n");
    for n in piece.notes() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            ticks_to_beats_text(n.onset_ticks, tpq),
            n.pitch,
            ticks_to_beats_text(n.duration_ticks(), tpq),
            n.velocity,
            n.track
        );
    }
    out
}

fn ticks_to_beats_text(ticks: u64, tpq: u64) -> String {
    let g = gcd(ticks, tpq);
    let (num, den) = (ticks / g, tpq / g);
    if den == 1 {
        num.to_string()
    } else {
        format!("{num}/{den}")
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn parse_int(text: &str, row: usize, name: &str, min: i64, max: i64) -> Result<i64> {
    let bad = || Error::MalformedRow {
        row,
        message: format!("`{name}` value `{text}` is not an integer in {min}..={max}"),
    };
    let value = match text.parse::<i64>() {
        Ok(v) => v,
        Err(_) => {
            let f: f64 = text.parse().map_err(|_| bad())?;
            if f.fract() != 0.0 || !f.is_finite() {
                return Err(bad());
            }
            f as i64
        }
    };
    if !(min..=max).contains(&value) {
        return Err(bad());
    }
    Ok(value)
}

/// Parses a decimal or `a/b` beat value into (numerator, denominator).
fn parse_rational(text: &str) -> Option<(i128, i128)> {
    if let Some((num, den)) = text.split_once('/') {
        let num: i128 = num.trim().parse().ok()?;
        let den: i128 = den.trim().parse().ok()?;
        return (den != 0).then(|| if den < 0 { (-num, -den) } else { (num, den) });
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    if int_part.len() > 18 || frac_part.len() > 18 {
        return None;
    }
    let int: i128 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let frac: i128 = if frac_part.is_empty() { 0 } else { frac_part.parse().ok()? };
    let den = 10i128.pow(frac_part.len() as u32);
    let num = int * den + frac;
    Some((if negative { -num } else { num }, den))
}

/// Nearest tick, halves rounded away from zero.
fn beats_to_ticks(text: &str, tpq: u32, row: usize) -> Result<i64> {
    let (num, den) = parse_rational(text).ok_or_else(|| Error::MalformedRow {
        row,
        message: format!("`{text}` is not a beat value"),
    })?;
    let scaled = num * i128::from(tpq);
    let rounded = (2 * scaled.abs() + den) / (2 * den);
    let ticks = if scaled < 0 { -rounded } else { rounded };
    i64::try_from(ticks).map_err(|_| Error::MalformedRow {
        row,
        message: format!("`{text}` is out of range"),
    })
}
