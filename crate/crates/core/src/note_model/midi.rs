// SPDX-License-Identifier: MIT OR Apache-2.0

//! Standard MIDI File reading and a minimal writer.

use std::collections::{HashMap, VecDeque};

use super::{IngestReport, Note, Piece, TimeSignature, TimingContext};
use crate::error::{Error, Result};

const META_END_OF_TRACK: u8 = 0x2F;
const META_TEMPO: u8 = 0x51;
const META_TIME_SIGNATURE: u8 = 0x58;

/// How files with more than one distinct tempo are handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TempoPolicy {
    /// Reject with [`Error::TempoChange`].
    #[default]
    Reject,
    /// Keep the earliest tempo and ignore the rest.
    UseFirst,
}

#[derive(Clone, Debug, Default)]
pub struct MidiOptions {
    pub tempo_policy: TempoPolicy,
    pub source_path: String,
}

pub fn parse_midi(bytes: &[u8]) -> Result<Piece> {
    parse_midi_with(bytes, &MidiOptions::default())
}

pub fn parse_midi_with(bytes: &[u8], options: &MidiOptions) -> Result<Piece> {
    let mut reader = Reader::new(bytes);

    let magic = reader.take(4)?;
    if magic != b"MThd" {
        return Err(malformed("missing MThd header chunk"));
    }
    let header_len = reader.u32()? as usize;
    if header_len < 6 {
        return Err(malformed("header chunk shorter than 6 bytes"));
    }
    let header = reader.take(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let declared_tracks = u16::from_be_bytes([header[2], header[3]]) as usize;
    let division = u16::from_be_bytes([header[4], header[5]]);
    match format {
        0 | 1 => {}
        2 => return Err(Error::UnsupportedFormat("SMF format 2".into())),
        other => return Err(Error::UnsupportedFormat(format!("SMF format {other}"))),
    }
    if division & 0x8000 != 0 {
        return Err(Error::UnsupportedFormat("SMPTE time division".into()));
    }
    if division == 0 {
        return Err(malformed("zero ticks per quarter note"));
    }

    let mut state = ParseState::default();
    let mut track_index: u16 = 0;
    while !reader.is_empty() {
        let id = reader.take(4)?;
        let len = reader.u32()? as usize;
        let body = reader.take(len)?;
        if id == b"MTrk" {
            parse_track(body, track_index, &mut state)?;
            track_index = track_index.saturating_add(1);
        }
    }
    if (track_index as usize) < declared_tracks {
        return Err(malformed(format!(
            "header declares {declared_tracks} tracks but only {track_index} present"
        )));
    }

    // Meta events are ordered by tick, then by file order.
    state.tempos.sort_by_key(|&(tick, order, _)| (tick, order));
    state.time_signatures.sort_by_key(|&(tick, order, _)| (tick, order));
    let mut distinct: Vec<u32> = state.tempos.iter().map(|&(_, _, t)| t).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() > 1 && options.tempo_policy == TempoPolicy::Reject {
        return Err(Error::TempoChange {
            count: distinct.len(),
        });
    }

    let mut timing = TimingContext::with_ticks_per_quarter(u32::from(division));
    if let Some(&(_, _, tempo)) = state.tempos.first() {
        timing.tempo_us_per_quarter = tempo;
    }
    if let Some(&(_, _, ts)) = state.time_signatures.first() {
        timing.time_signature = ts;
    }
    Ok(Piece::new(state.notes, timing, options.source_path.clone())?.with_report(state.report))
}

#[derive(Default)]
struct ParseState {
    notes: Vec<Note>,
    tempos: Vec<(u64, usize, u32)>,
    time_signatures: Vec<(u64, usize, TimeSignature)>,
    meta_order: usize,
    report: IngestReport,
}

fn parse_track(body: &[u8], track: u16, state: &mut ParseState) -> Result<()> {
    let mut reader = Reader::new(body);
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    // Open notes keyed by (channel, pitch); FIFO pairing.
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();

    while !reader.is_empty() {
        tick += u64::from(reader.vlq()?);
        let first = reader.u8()?;
        match first {
            0xFF => {
                running = None;
                let kind = reader.u8()?;
                let len = reader.vlq()? as usize;
                let data = reader.take(len)?;
                match kind {
                    META_END_OF_TRACK => break,
                    META_TEMPO => {
                        if data.len() != 3 {
                            return Err(malformed("tempo meta event must carry 3 bytes"));
                        }
                        let tempo = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if tempo == 0 {
                            return Err(malformed("zero tempo"));
                        }
                        state.tempos.push((tick, state.meta_order, tempo));
                        state.meta_order += 1;
                    }
                    META_TIME_SIGNATURE => {
                        if data.len() < 2 {
                            return Err(malformed("time signature meta event too short"));
                        }
                        if data[0] == 0 || data[1] > 7 {
                            return Err(malformed("invalid time signature"));
                        }
                        let ts = TimeSignature {
                            numerator: data[0],
                            denominator: 1u8 << data[1],
                        };
                        state.time_signatures.push((tick, state.meta_order, ts));
                        state.meta_order += 1;
                    }
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = reader.vlq()? as usize;
                reader.take(len)?;
            }
            0xF1..=0xFE => {
                return Err(malformed(format!("unexpected system message 0x{first:02X}")));
            }
            0x80..=0xEF => {
                running = Some(first);
                let data0 = reader.data_byte()?;
                channel_message(first, data0, &mut reader, tick, track, &mut open, state)?;
            }
            _ => {
                let status = running.ok_or_else(|| malformed("data byte without running status"))?;
                channel_message(status, first, &mut reader, tick, track, &mut open, state)?;
            }
        }
    }

    let mut leftovers: Vec<_> = open.into_iter().collect();
    leftovers.sort_by_key(|&(key, _)| key);
    for ((_, pitch), queue) in leftovers {
        for (onset, velocity) in queue {
            state.report.unmatched_note_ons += 1;
            push_note(state, pitch, onset, tick, velocity, track);
        }
    }
    Ok(())
}

fn channel_message(
    status: u8,
    data0: u8,
    reader: &mut Reader<'_>,
    tick: u64,
    track: u16,
    open: &mut HashMap<(u8, u8), VecDeque<(u64, u8)>>,
    state: &mut ParseState,
) -> Result<()> {
    if data0 >= 0x80 {
        return Err(malformed("status byte where data byte expected"));
    }
    let kind = status & 0xF0;
    let channel = status & 0x0F;
    let data1 = match kind {
        0xC0 | 0xD0 => None,
        _ => Some(reader.data_byte()?),
    };
    match (kind, data1) {
        (0x90, Some(velocity)) if velocity > 0 => {
            open.entry((channel, data0))
                .or_default()
                .push_back((tick, velocity));
        }
        (0x80, Some(_)) | (0x90, Some(_)) => {
            match open.get_mut(&(channel, data0)).and_then(VecDeque::pop_front) {
                Some((onset, velocity)) => push_note(state, data0, onset, tick, velocity, track),
                None => state.report.orphan_note_offs += 1,
            }
        }
        _ => {}
    }
    Ok(())
}

fn push_note(state: &mut ParseState, pitch: u8, onset: u64, offset: u64, velocity: u8, track: u16) {
    if offset > onset {
        state.notes.push(Note {
            pitch,
            onset_ticks: onset,
            offset_ticks: offset,
            velocity,
            track,
        });
    } else {
        state.report.dropped_notes += 1;
    }
}

fn malformed(message: impl Into<String>) -> Error {
    Error::MalformedFile(message.into())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&end| end <= self.data.len())
            .ok_or_else(|| malformed(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn data_byte(&mut self) -> Result<u8> {
        let b = self.u8()?;
        if b >= 0x80 {
            return Err(malformed("status byte where data byte expected"));
        }
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity; at most four bytes.
    fn vlq(&mut self) -> Result<u32> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(malformed("variable-length quantity longer than 4 bytes"))
    }
}

/// Writes a format-1 SMF: one chunk per track index, tempo and time signature in
/// track 0. Same-pitch overlapping notes on one track may re-pair on read.
pub fn encode_midi(piece: &Piece) -> Vec<u8> {
    let timing = piece.timing();
    let track_count = piece
        .notes()
        .iter()
        .map(|n| usize::from(n.track) + 1)
        .max()
        .unwrap_or(1);

    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(track_count as u16).to_be_bytes());
    out.extend_from_slice(&(timing.ticks_per_quarter.min(0x7FFF) as u16).to_be_bytes());

    for track in 0..track_count {
        // (tick, order, bytes); offs sort before ons at the same tick.
        let mut events: Vec<(u64, u8, Vec<u8>)> = Vec::new();
        if track == 0 {
            let t = timing.tempo_us_per_quarter.to_be_bytes();
            events.push((0, 0, vec![0xFF, META_TEMPO, 3, t[1], t[2], t[3]]));
            let ts = timing.time_signature;
            let denom_pow = ts.denominator.max(1).trailing_zeros() as u8;
            events.push((
                0,
                0,
                vec![0xFF, META_TIME_SIGNATURE, 4, ts.numerator, denom_pow, 24, 8],
            ));
        }
        for note in piece.notes().iter().filter(|n| usize::from(n.track) == track) {
            let velocity = note.velocity.clamp(1, 127);
            events.push((note.onset_ticks, 2, vec![0x90, note.pitch & 0x7F, velocity]));
            events.push((note.offset_ticks, 1, vec![0x80, note.pitch & 0x7F, 0]));
        }
        events.sort_by_key(|(tick, order, _)| (*tick, *order));

        let mut body = Vec::new();
        let mut last = 0u64;
        for (tick, _, bytes) in events {
            write_vlq(&mut body, (tick - last) as u32);
            body.extend_from_slice(&bytes);
            last = tick;
        }
        write_vlq(&mut body, 0);
        body.extend_from_slice(&[0xFF, META_END_OF_TRACK, 0]);

        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7F) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = 0x80 | (value & 0x7F) as u8;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}
