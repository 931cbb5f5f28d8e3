//! Prophesee / ATIS `.dat` recordings of 2D change-detection events.
//!
//! Layout: ASCII header lines starting with `%`, then (only when at least one
//! header line is present) two bytes giving the event type and record size,
//! then 8-byte little-endian records:
//!
//! ```text
//! bytes 0..4  u32 timestamp in microseconds
//! bytes 4..8  u32 packed word: x = bits 0..14, y = bits 14..28, polarity = bits 28..32
//! ```

use super::{Event, EventError, EventStream, Polarity};

/// Sensor resolution assumed when the header carries no geometry.
pub const DEFAULT_WIDTH: u16 = 304;
pub const DEFAULT_HEIGHT: u16 = 240;

const RECORD_SIZE: usize = 8;
const CD_EVENT_TYPES: [u8; 2] = [0x00, 0x0C];
const X_MASK: u32 = 0x0000_3FFF;
const Y_MASK: u32 = 0x0FFF_C000;
const Y_SHIFT: u32 = 14;
const P_SHIFT: u32 = 28;

struct Header {
    width: Option<u16>,
    height: Option<u16>,
    duration_us: Option<u64>,
    body_offset: usize,
}

fn header_value<T: std::str::FromStr>(words: &[&str], key: &str) -> Result<Option<T>, EventError> {
    if words.first() != Some(&key) {
        return Ok(None);
    }
    let raw = words
        .get(1)
        .ok_or_else(|| EventError::MalformedHeader(format!("`{key}` without a value")))?;
    raw.parse()
        .map(Some)
        .map_err(|_| EventError::MalformedHeader(format!("bad `{key}` value `{raw}`")))
}

fn parse_header(bytes: &[u8]) -> Result<Header, EventError> {
    let mut pos = 0;
    let mut lines = 0;
    let mut header = Header {
        width: None,
        height: None,
        duration_us: None,
        body_offset: 0,
    };
    while bytes.get(pos) == Some(&b'%') {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| EventError::MalformedHeader("unterminated header line".into()))?;
        let line = String::from_utf8_lossy(&bytes[pos + 1..pos + end]);
        let words: Vec<&str> = line.split_whitespace().collect();
        if let Some(w) = header_value(&words, "Width")? {
            header.width = Some(w);
        }
        if let Some(h) = header_value(&words, "Height")? {
            header.height = Some(h);
        }
        if let Some(d) = header_value(&words, "Duration")? {
            header.duration_us = Some(d);
        }
        pos += end + 1;
        lines += 1;
    }
    if lines > 0 {
        let [ev_type, ev_size] = bytes
            .get(pos..pos + 2)
            .and_then(|s| <[u8; 2]>::try_from(s).ok())
            .ok_or_else(|| EventError::MalformedHeader("missing event type/size bytes".into()))?;
        if !CD_EVENT_TYPES.contains(&ev_type) || ev_size as usize != RECORD_SIZE {
            return Err(EventError::UnsupportedEventType { ev_type, ev_size });
        }
        pos += 2;
    }
    header.body_offset = pos;
    Ok(header)
}

/// Decodes a DAT recording. Events are returned sorted by timestamp.
pub fn parse_dat(bytes: &[u8]) -> Result<EventStream, EventError> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_offset..];
    if !body.len().is_multiple_of(RECORD_SIZE) {
        return Err(EventError::TruncatedRecord {
            len: body.len(),
            record_size: RECORD_SIZE,
        });
    }
    let width = header.width.unwrap_or(DEFAULT_WIDTH);
    let height = header.height.unwrap_or(DEFAULT_HEIGHT);
    let mut events = Vec::with_capacity(body.len() / RECORD_SIZE);
    for (index, rec) in body.chunks_exact(RECORD_SIZE).enumerate() {
        let t = u32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]);
        let word = u32::from_le_bytes([rec[4], rec[5], rec[6], rec[7]]);
        let x = word & X_MASK;
        let y = (word & Y_MASK) >> Y_SHIFT;
        let raw_p = word >> P_SHIFT;
        if x >= u32::from(width) || y >= u32::from(height) {
            return Err(EventError::OutOfBoundsEvent {
                index,
                x,
                y,
                width,
                height,
            });
        }
        let p = Polarity::from_bit(raw_p).ok_or(EventError::InvalidPolarity {
            index,
            value: raw_p,
        })?;
        events.push(Event::new(t.into(), x as u16, y as u16, p));
    }
    EventStream::from_unsorted(width, height, events, None, header.duration_us)
}

/// Encodes a stream as a DAT recording with a geometry/duration header.
pub fn write_dat(stream: &EventStream) -> Result<Vec<u8>, EventError> {
    let header = format!(
        "% Data file containing CD events.\n% Version 2\n% Width {}\n% Height {}\n% Duration {}\n",
        stream.width(),
        stream.height(),
        stream.duration_us()
    );
    let mut out = Vec::with_capacity(header.len() + 2 + stream.len() * RECORD_SIZE);
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&[CD_EVENT_TYPES[0], RECORD_SIZE as u8]);
    for e in stream.events() {
        let t = u32::try_from(e.t).map_err(|_| EventError::TimestampOverflow(e.t))?;
        let word = u32::from(e.x) | (u32::from(e.y) << Y_SHIFT) | ((e.p as u32) << P_SHIFT);
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&word.to_le_bytes());
    }
    Ok(out)
}
