//! Occurrence statistics, attention windows and spike-frame accumulation.
//!
//! Coordinates use a bottom-left origin: `(0, 0)` is the bottom-left pixel and
//! `y` grows upward, so a window anchored at the origin is the bottom-left
//! corner of the canvas.

mod frame;
mod occurrence;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Event, EventStream};

pub use frame::{accumulate, accumulate_on_canvas, sample_frames, SpikeFrame, CHANNELS};
pub use occurrence::{event_occurrence_map, OccurrenceMap, TileShare};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("no streams given")]
    EmptyInput,
    #[error("window {0:?} is empty after clamping to the frame")]
    DegenerateWindow(AttentionWindow),
    #[error("invalid accumulation config: {0}")]
    InvalidConfig(String),
}

/// Axis-aligned crop region; `origin` is its bottom-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttentionWindow {
    pub origin_x: u16,
    pub origin_y: u16,
    pub width: u16,
    pub height: u16,
}

impl AttentionWindow {
    pub fn new(origin_x: u16, origin_y: u16, width: u16, height: u16) -> Self {
        AttentionWindow {
            origin_x,
            origin_y,
            width,
            height,
        }
    }

    /// Square window anchored at the bottom-left corner.
    pub fn bottom_left(size: u16) -> Self {
        AttentionWindow::new(0, 0, size, size)
    }

    /// Restricts the window to a `width`x`height` frame.
    pub fn clamp_to(&self, width: u16, height: u16) -> Result<AttentionWindow, PreprocessError> {
        let x1 = (u32::from(self.origin_x) + u32::from(self.width)).min(width.into());
        let y1 = (u32::from(self.origin_y) + u32::from(self.height)).min(height.into());
        if x1 <= u32::from(self.origin_x) || y1 <= u32::from(self.origin_y) {
            return Err(PreprocessError::DegenerateWindow(*self));
        }
        Ok(AttentionWindow::new(
            self.origin_x,
            self.origin_y,
            (x1 - u32::from(self.origin_x)) as u16,
            (y1 - u32::from(self.origin_y)) as u16,
        ))
    }

    pub fn contains(&self, x: u16, y: u16) -> bool {
        x >= self.origin_x
            && y >= self.origin_y
            && u32::from(x) < u32::from(self.origin_x) + u32::from(self.width)
            && u32::from(y) < u32::from(self.origin_y) + u32::from(self.height)
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

impl std::str::FromStr for AttentionWindow {
    type Err = String;

    /// Parses `x,y,width,height`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<u16> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u16>()
                    .map_err(|e| format!("bad window component `{p}`: {e}"))
            })
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [x, y, w, h] => Ok(AttentionWindow::new(x, y, w, h)),
            _ => Err("window must be `x,y,width,height`".into()),
        }
    }
}

/// Drops events outside `window` and re-bases the rest so the window origin
/// becomes `(0, 0)`. Timestamps are untouched.
pub fn crop(
    stream: &EventStream,
    window: &AttentionWindow,
) -> Result<EventStream, PreprocessError> {
    let w = window.clamp_to(stream.width(), stream.height())?;
    let events: Vec<Event> = stream
        .events()
        .iter()
        .filter(|e| w.contains(e.x, e.y))
        .map(|e| Event::new(e.t, e.x - w.origin_x, e.y - w.origin_y, e.p))
        .collect();
    // Filtering preserves order and the bounds hold by construction.
    Ok(EventStream::new(
        w.width,
        w.height,
        events,
        stream.label(),
        stream.duration_us(),
    )
    .expect("cropped stream keeps stream invariants"))
}

/// Sample time, sample length and how long each frame is held at the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccumulationConfig {
    pub t_sample_us: u64,
    pub t_length_us: u64,
    pub frame_repeat: usize,
}

impl Default for AccumulationConfig {
    fn default() -> Self {
        AccumulationConfig {
            t_sample_us: 1_000,
            t_length_us: 10_000,
            frame_repeat: 20,
        }
    }
}

impl AccumulationConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.t_sample_us == 0 {
            return Err(PreprocessError::InvalidConfig(
                "t_sample_us must be > 0".into(),
            ));
        }
        if self.t_length_us == 0 || !self.t_length_us.is_multiple_of(self.t_sample_us) {
            return Err(PreprocessError::InvalidConfig(format!(
                "t_length_us ({}) must be a positive multiple of t_sample_us ({})",
                self.t_length_us, self.t_sample_us
            )));
        }
        if self.frame_repeat == 0 {
            return Err(PreprocessError::InvalidConfig(
                "frame_repeat must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn frames_per_clip(&self) -> usize {
        (self.t_length_us / self.t_sample_us) as usize
    }
}

/// Uniform clip start in `[0, duration - t_length]`; 0 when the stream is
/// not longer than the clip.
pub fn random_clip<R: Rng + ?Sized>(stream: &EventStream, t_length_us: u64, rng: &mut R) -> u64 {
    match stream.duration_us().checked_sub(t_length_us) {
        Some(slack) if slack > 0 => rng.random_range(0..=slack),
        _ => 0,
    }
}
