use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AttentionWindow, PreprocessError};
use crate::events::EventStream;

/// Per-pixel event totals (both polarities) over a set of streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurrenceMap {
    pub width: u16,
    pub height: u16,
    /// Row-major, row 0 is the bottom row.
    pub counts: Vec<u64>,
}

/// Event share of one tile of the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileShare {
    pub window: AttentionWindow,
    pub events: u64,
    pub share: f64,
}

/// Counts events per pixel. Streams of different sizes share a bottom-left
/// aligned canvas as large as the largest stream.
pub fn event_occurrence_map(streams: &[EventStream]) -> Result<OccurrenceMap, PreprocessError> {
    let width = streams
        .iter()
        .map(EventStream::width)
        .max()
        .ok_or(PreprocessError::EmptyInput)?;
    let height = streams.iter().map(EventStream::height).max().unwrap_or(0);
    let mut map = OccurrenceMap {
        width,
        height,
        counts: vec![0; usize::from(width) * usize::from(height)],
    };
    for s in streams {
        for e in s.events() {
            map.counts[usize::from(e.y) * usize::from(width) + usize::from(e.x)] += 1;
        }
    }
    Ok(map)
}

impl OccurrenceMap {
    pub fn get(&self, x: u16, y: u16) -> u64 {
        self.counts[usize::from(y) * usize::from(self.width) + usize::from(x)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn window_count(&self, window: &AttentionWindow) -> u64 {
        let Ok(w) = window.clamp_to(self.width, self.height) else {
            return 0;
        };
        (w.origin_y..w.origin_y + w.height)
            .flat_map(|y| (w.origin_x..w.origin_x + w.width).map(move |x| (x, y)))
            .map(|(x, y)| self.get(x, y))
            .sum()
    }

    /// Tiles the canvas with `size`x`size` windows starting at the bottom-left
    /// corner (edge tiles are clipped) and reports each tile's share.
    pub fn tiles(&self, size: u16) -> Vec<TileShare> {
        let total = self.total().max(1) as f64;
        let step = usize::from(size.max(1));
        let mut out = Vec::new();
        for y in (0..self.height).step_by(step) {
            for x in (0..self.width).step_by(step) {
                let window =
                    AttentionWindow::new(x, y, size.min(self.width - x), size.min(self.height - y));
                let events = self.window_count(&window);
                out.push(TileShare {
                    window,
                    events,
                    share: events as f64 / total,
                });
            }
        }
        out
    }

    /// Tile with the most events; ties go to the tile closest to the origin.
    pub fn densest_tile(&self, size: u16) -> Option<TileShare> {
        self.tiles(size)
            .into_iter()
            .reduce(|best, t| if t.events > best.events { t } else { best })
    }

    /// CSV grid in image orientation: the first line is the top row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for y in (0..self.height).rev() {
            let row: Vec<String> = (0..self.width)
                .map(|x| self.get(x, y).to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Binary PGM (P5) heatmap, linearly scaled to 0..=255, top row first.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                out.push((self.get(x, y) as f64 / max * 255.0).round() as u8);
            }
        }
        out
    }
}
