use serde::{Deserialize, Serialize};

use super::{AccumulationConfig, AttentionWindow, PreprocessError};
use crate::events::EventStream;

pub const CHANNELS: usize = 2;

/// Binary two-channel image; bit `(c, y, x)` is set when at least one event of
/// polarity `c` hit pixel `(x, y)` during the accumulation interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpikeFrame {
    width: u16,
    height: u16,
    bits: Vec<u8>,
}

impl SpikeFrame {
    pub fn zeros(width: u16, height: u16) -> Self {
        SpikeFrame {
            width,
            height,
            bits: vec![0; CHANNELS * usize::from(width) * usize::from(height)],
        }
    }

    /// Builds a frame from `[c][y][x]` ordered bits; nonzero entries count as 1.
    pub fn from_bits(width: u16, height: u16, bits: &[u8]) -> Option<Self> {
        (bits.len() == CHANNELS * usize::from(width) * usize::from(height)).then(|| SpikeFrame {
            width,
            height,
            bits: bits.iter().map(|&b| u8::from(b != 0)).collect(),
        })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    fn index(&self, c: usize, y: u16, x: u16) -> usize {
        (c * usize::from(self.height) + usize::from(y)) * usize::from(self.width) + usize::from(x)
    }

    pub fn get(&self, c: usize, y: u16, x: u16) -> bool {
        self.bits[self.index(c, y, x)] != 0
    }

    pub fn set(&mut self, c: usize, y: u16, x: u16) {
        let i = self.index(c, y, x);
        self.bits[i] = 1;
    }

    /// Bits in `[channel][row][column]` order.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    /// Network input vector in `[c][y][x]` order.
    pub fn to_input(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    /// Spatial crop of the frame, re-based to the window origin.
    pub fn crop(&self, window: &AttentionWindow) -> Result<SpikeFrame, PreprocessError> {
        let w = window.clamp_to(self.width, self.height)?;
        let mut out = SpikeFrame::zeros(w.width, w.height);
        for c in 0..CHANNELS {
            for y in 0..w.height {
                for x in 0..w.width {
                    if self.get(c, y + w.origin_y, x + w.origin_x) {
                        out.set(c, y, x);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Saturating OR of the events in `[t0, t0 + t_sample)` on the stream's own canvas.
pub fn accumulate(stream: &EventStream, t0_us: u64, t_sample_us: u64) -> SpikeFrame {
    accumulate_on_canvas(stream, t0_us, t_sample_us, stream.width(), stream.height())
}

/// Like [`accumulate`] but on a `width`x`height` canvas anchored at the
/// bottom-left corner; events outside the canvas produce no spikes.
pub fn accumulate_on_canvas(
    stream: &EventStream,
    t0_us: u64,
    t_sample_us: u64,
    width: u16,
    height: u16,
) -> SpikeFrame {
    let mut frame = SpikeFrame::zeros(width, height);
    for e in stream.window(t0_us, t0_us.saturating_add(t_sample_us)) {
        if e.x < width && e.y < height {
            frame.set(e.p.channel(), e.y, e.x);
        }
    }
    frame
}

/// Splits the clip `[t0, t0 + t_length)` into `t_length / t_sample` frames.
///
/// A clip running past the end of the stream is shifted back to fit; when the
/// stream is shorter than the clip it starts at 0 and the trailing frames are
/// empty.
pub fn sample_frames(
    stream: &EventStream,
    t0_us: u64,
    config: &AccumulationConfig,
    canvas: (u16, u16),
) -> Result<Vec<SpikeFrame>, PreprocessError> {
    config.validate()?;
    let latest = stream.duration_us().saturating_sub(config.t_length_us);
    let t0 = t0_us.min(latest);
    Ok((0..config.frames_per_clip() as u64)
        .map(|k| {
            accumulate_on_canvas(
                stream,
                t0 + k * config.t_sample_us,
                config.t_sample_us,
                canvas.0,
                canvas.1,
            )
        })
        .collect())
}
