//! Portable `.evt.csv` text format.
//!
//! First line `width,height,duration_us,label` (label `0`, `1` or `-` when
//! unlabeled), then one `t,x,y,p` line per event. Blank lines are ignored.

use std::fmt::Write;

use super::{Event, EventError, EventStream, Polarity};

fn fields<const N: usize>(line: &str, lineno: usize) -> Result<[&str; N], EventError> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    <[&str; N]>::try_from(parts.as_slice()).map_err(|_| EventError::MalformedLine {
        line: lineno,
        reason: format!("expected {N} comma-separated fields"),
    })
}

fn num<T: std::str::FromStr>(raw: &str, what: &str, lineno: usize) -> Result<T, EventError> {
    raw.parse().map_err(|_| EventError::MalformedLine {
        line: lineno,
        reason: format!("invalid {what} `{raw}`"),
    })
}

pub fn parse_evtcsv(text: &str) -> Result<EventStream, EventError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or(EventError::MalformedLine {
        line: 1,
        reason: "missing header line".into(),
    })?;
    let [w, h, d, label] = fields::<4>(header, hl)?;
    let width: u16 = num(w, "width", hl)?;
    let height: u16 = num(h, "height", hl)?;
    let duration_us: u64 = num(d, "duration", hl)?;
    let label = match label {
        "-" | "" => None,
        other => Some(num::<u8>(other, "label", hl)?),
    };

    let mut events = Vec::new();
    let mut prev = 0u64;
    for (lineno, line) in lines {
        let [t, x, y, p] = fields::<4>(line, lineno)?;
        let t: u64 = num(t, "timestamp", lineno)?;
        let x: u32 = num(x, "x", lineno)?;
        let y: u32 = num(y, "y", lineno)?;
        let raw_p: u32 = num(p, "polarity", lineno)?;
        let index = events.len();
        if x >= u32::from(width) || y >= u32::from(height) {
            return Err(EventError::OutOfBoundsEvent {
                index,
                x,
                y,
                width,
                height,
            });
        }
        if t < prev {
            return Err(EventError::NonMonotonicTimestamp { index, prev, t });
        }
        let p = Polarity::from_bit(raw_p).ok_or(EventError::InvalidPolarity {
            index,
            value: raw_p,
        })?;
        prev = t;
        events.push(Event::new(t, x as u16, y as u16, p));
    }
    EventStream::new(width, height, events, label, duration_us)
}

pub fn write_evtcsv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(16 * (stream.len() + 1));
    let label = stream
        .label()
        .map_or_else(|| "-".to_string(), |l| l.to_string());
    let _ = writeln!(
        out,
        "{},{},{},{}",
        stream.width(),
        stream.height(),
        stream.duration_us(),
        label
    );
    for e in stream.events() {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p as u8);
    }
    out
}
