//! Desk-scale synthetic stand-in for a labeled car/background corpus.
//!
//! Class 1 streams carry a spatial structure (a moving bar or a blob), class 0
//! streams are uniform noise. Both classes draw their event count from the same
//! distribution, so the count alone does not separate them.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Event, EventError, EventStream, Polarity, BACKGROUND, CAR};
use crate::rng::{item_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    MovingBar,
    Blob,
    UniformNoise,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "moving-bar" => Ok(Pattern::MovingBar),
            "blob" => Ok(Pattern::Blob),
            "uniform-noise" => Ok(Pattern::UniformNoise),
            other => Err(format!(
                "unknown pattern `{other}` (moving-bar | blob | uniform-noise)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: u16,
    pub height: u16,
    /// Streams per class in each split.
    pub n_per_class: usize,
    pub duration_us: u64,
    pub pattern: Pattern,
    /// Mean events per millisecond.
    pub event_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            width: 50,
            height: 50,
            n_per_class: 100,
            duration_us: 100_000,
            pattern: Pattern::MovingBar,
            event_rate: 500.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), EventError> {
        if self.n_per_class == 0 {
            return Err(EventError::InvalidSpec("n_per_class must be > 0".into()));
        }
        if !(self.event_rate > 0.0 && self.event_rate.is_finite()) {
            return Err(EventError::InvalidSpec(
                "event_rate must be a positive number".into(),
            ));
        }
        if self.width < 4 || self.height < 4 {
            return Err(EventError::InvalidSpec(
                "canvas must be at least 4x4".into(),
            ));
        }
        if self.duration_us == 0 {
            return Err(EventError::InvalidSpec("duration_us must be > 0".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn random_polarity(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.random_bool(0.5) {
        Polarity::On
    } else {
        Polarity::Off
    }
}

fn gen_stream(
    spec: &SyntheticSpec,
    label: u8,
    rng: &mut ChaCha8Rng,
) -> Result<EventStream, EventError> {
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let duration_ms = spec.duration_us as f64 / 1000.0;
    let count = (spec.event_rate * duration_ms * rng.random_range(0.9..1.1)).round() as usize;
    let mut times: Vec<u64> = (0..count)
        .map(|_| rng.random_range(0..spec.duration_us))
        .collect();
    times.sort_unstable();

    let pattern = if label == CAR {
        spec.pattern
    } else {
        Pattern::UniformNoise
    };
    let mut events = Vec::with_capacity(count);
    match pattern {
        Pattern::UniformNoise => {
            for t in times {
                let x = rng.random_range(0..spec.width);
                let y = rng.random_range(0..spec.height);
                events.push(Event::new(t, x, y, random_polarity(rng)));
            }
        }
        Pattern::MovingBar => {
            let bar_w = (w / 4.0).max(2.0);
            let extent = h * rng.random_range(0.8..1.0);
            let y0 = rng.random_range(0.0..(h - extent).max(f64::MIN_POSITIVE));
            let speed = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let start = rng.random_range(0.0..w);
            for t in times {
                let offset = rng.random_range(0.0..bar_w);
                let pos = (start + speed * t as f64 / 1000.0 + offset).rem_euclid(w);
                let leading = (offset >= bar_w / 2.0) == (speed > 0.0);
                let y = y0 + rng.random_range(0.0..extent);
                let p = if leading { Polarity::On } else { Polarity::Off };
                events.push(Event::new(
                    t,
                    (pos as u16).min(spec.width - 1),
                    (y as u16).min(spec.height - 1),
                    p,
                ));
            }
        }
        Pattern::Blob => {
            let sigma = w.min(h) / 8.0;
            let cx = w / 4.0 + gaussian(rng) * w / 20.0;
            let cy = h / 4.0 + gaussian(rng) * h / 20.0;
            let drift = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            for t in times {
                let ms = t as f64 / 1000.0;
                let (x, y) = loop {
                    let x = cx + drift.0 * ms + gaussian(rng) * sigma;
                    let y = cy + drift.1 * ms + gaussian(rng) * sigma;
                    if (0.0..w).contains(&x) && (0.0..h).contains(&y) {
                        break (x, y);
                    }
                };
                events.push(Event::new(t, x as u16, y as u16, random_polarity(rng)));
            }
        }
    }
    EventStream::new(
        spec.width,
        spec.height,
        events,
        Some(label),
        spec.duration_us,
    )
}

/// Generates `n_per_class` streams per class for both splits, background first.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset, EventError> {
    spec.validate()?;
    let mut splits = Vec::with_capacity(2);
    for split in 0..2u64 {
        let mut streams = Vec::with_capacity(2 * spec.n_per_class);
        for label in [BACKGROUND, CAR] {
            for i in 0..spec.n_per_class {
                let item = (split << 40) | (u64::from(label) << 32) | i as u64;
                let mut rng = item_rng(spec.seed, Stream::Synthetic, item);
                streams.push(gen_stream(spec, label, &mut rng)?);
            }
        }
        splits.push(streams);
    }
    let test = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(Dataset::new(train, test))
}
