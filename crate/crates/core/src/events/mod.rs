//! Event streams and their on-disk formats.

mod dat;
mod dataset;
mod evtcsv;
mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dat::{parse_dat, write_dat, DEFAULT_HEIGHT, DEFAULT_WIDTH};
pub use dataset::{load_dataset, write_dataset, Dataset, DatasetFormat, CLASS_NAMES};
pub use evtcsv::{parse_evtcsv, write_evtcsv};
pub use synthetic::{gen_synthetic, Pattern, SyntheticSpec};

/// Class id of background samples.
pub const BACKGROUND: u8 = 0;
/// Class id of car samples.
pub const CAR: u8 = 1;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported event type {ev_type} with record size {ev_size}")]
    UnsupportedEventType { ev_type: u8, ev_size: u8 },
    #[error("payload of {len} bytes is not a multiple of the {record_size}-byte record size")]
    TruncatedRecord { len: usize, record_size: usize },
    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBoundsEvent {
        index: usize,
        x: u32,
        y: u32,
        width: u16,
        height: u16,
    },
    #[error("event {index} has invalid polarity value {value}")]
    InvalidPolarity { index: usize, value: u32 },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("event {index}: timestamp {t} precedes previous timestamp {prev}")]
    NonMonotonicTimestamp { index: usize, prev: u64, t: u64 },
    #[error("duration {duration_us} us is shorter than last event time {last_t} us")]
    DurationTooShort { duration_us: u64, last_t: u64 },
    #[error("timestamp {0} us does not fit the 32-bit DAT record")]
    TimestampOverflow(u64),
    #[error("missing split directory {0}")]
    MissingSplit(PathBuf),
    #[error("no event files in class directory {0}")]
    EmptyClassDirectory(PathBuf),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        source: Box<EventError>,
    },
}

/// Brightness change direction. OFF maps to input channel 0, ON to channel 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn from_bit(bit: u32) -> Option<Polarity> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }
}

/// One pixel event. `y` counts rows upward from the bottom edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Event { t, x, y, p }
    }
}

/// A time-ordered recording on a `width`x`height` sensor.
///
/// Construction validates that events are sorted, in bounds, and that the
/// duration covers the last event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStream {
    width: u16,
    height: u16,
    events: Vec<Event>,
    label: Option<u8>,
    duration_us: u64,
}

impl EventStream {
    pub fn new(
        width: u16,
        height: u16,
        events: Vec<Event>,
        label: Option<u8>,
        duration_us: u64,
    ) -> Result<Self, EventError> {
        let mut prev = 0u64;
        for (index, e) in events.iter().enumerate() {
            if e.x >= width || e.y >= height {
                return Err(EventError::OutOfBoundsEvent {
                    index,
                    x: e.x.into(),
                    y: e.y.into(),
                    width,
                    height,
                });
            }
            if e.t < prev {
                return Err(EventError::NonMonotonicTimestamp {
                    index,
                    prev,
                    t: e.t,
                });
            }
            prev = e.t;
        }
        if let Some(last) = events.last() {
            if duration_us < last.t {
                return Err(EventError::DurationTooShort {
                    duration_us,
                    last_t: last.t,
                });
            }
        }
        Ok(EventStream {
            width,
            height,
            events,
            label,
            duration_us,
        })
    }

    /// Builds a stream from unordered events, sorting them stably by time and
    /// taking the duration from the last event when none is given.
    pub fn from_unsorted(
        width: u16,
        height: u16,
        mut events: Vec<Event>,
        label: Option<u8>,
        duration_us: Option<u64>,
    ) -> Result<Self, EventError> {
        events.sort_by_key(|e| e.t);
        let last = events.last().map_or(0, |e| e.t);
        EventStream::new(width, height, events, label, duration_us.unwrap_or(last))
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn label(&self) -> Option<u8> {
        self.label
    }

    pub fn duration_us(&self) -> u64 {
        self.duration_us
    }

    pub fn with_label(mut self, label: Option<u8>) -> Self {
        self.label = label;
        self
    }

    /// Events with `t0 <= t < t1`.
    pub fn window(&self, t0: u64, t1: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t < t1);
        &self.events[lo..hi.max(lo)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_out_of_bounds() {
        let a = Event::new(5, 1, 1, Polarity::On);
        let b = Event::new(3, 1, 1, Polarity::On);
        assert!(matches!(
            EventStream::new(4, 4, vec![a, b], None, 10),
            Err(EventError::NonMonotonicTimestamp { index: 1, .. })
        ));
        let c = Event::new(3, 4, 0, Polarity::Off);
        assert!(matches!(
            EventStream::new(4, 4, vec![c], None, 10),
            Err(EventError::OutOfBoundsEvent { .. })
        ));
        assert!(matches!(
            EventStream::new(4, 4, vec![a], None, 4),
            Err(EventError::DurationTooShort { .. })
        ));
    }

    #[test]
    fn window_is_half_open() {
        let ev: Vec<_> = [0, 5, 5, 9, 10]
            .iter()
            .map(|&t| Event::new(t, 0, 0, Polarity::On))
            .collect();
        let s = EventStream::new(1, 1, ev, None, 10).unwrap();
        assert_eq!(s.window(5, 10).len(), 3);
        assert_eq!(s.window(0, 5).len(), 1);
        assert_eq!(s.window(10, 11).len(), 1);
        assert_eq!(s.window(7, 3).len(), 0);
    }
}
