use evsnn::events::{
    gen_synthetic, parse_dat, parse_evtcsv, write_dat, write_evtcsv, SyntheticSpec,
};
use evsnn::preprocess::{
    accumulate, event_occurrence_map, sample_frames, AccumulationConfig, AttentionWindow,
};
use evsnn::{Event, EventStream, Polarity};
use proptest::prelude::*;

fn stream_strategy() -> impl Strategy<Value = EventStream> {
    (1u16..40, 1u16..40).prop_flat_map(|(w, h)| {
        prop::collection::vec((0u64..50_000, 0..w, 0..h, any::<bool>()), 0..300).prop_map(
            move |raw| {
                let events = raw
                    .into_iter()
                    .map(|(t, x, y, on)| {
                        Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
                    })
                    .collect();
                EventStream::from_unsorted(w, h, events, None, Some(50_000)).unwrap()
            },
        )
    })
}

fn record(t: u32, x: u32, y: u32, p: u32) -> [u8; 8] {
    let mut r = [0u8; 8];
    r[..4].copy_from_slice(&t.to_le_bytes());
    r[4..].copy_from_slice(&(x | y << 14 | p << 28).to_le_bytes());
    r
}

#[test]
fn parses_hand_built_dat() {
    let mut bytes = b"% Height 240\n% Width 304\n".to_vec();
    bytes.extend([0x0C, 8]);
    bytes.extend(record(20, 303, 0, 1));
    bytes.extend(record(10, 5, 239, 0));
    let s = parse_dat(&bytes).unwrap();
    assert_eq!((s.width(), s.height()), (304, 240));
    assert_eq!(
        s.events(),
        &[
            Event::new(10, 5, 239, Polarity::Off),
            Event::new(20, 303, 0, Polarity::On)
        ]
    );
}

#[test]
fn rejects_bad_dat() {
    let mut bytes = b"% Width 10\n% Height 10\n".to_vec();
    bytes.extend([0x0C, 8]);
    bytes.extend(record(1, 10, 0, 0));
    assert!(parse_dat(&bytes).is_err());
    let mut bytes = b"% Width 10\n% Height 10\n".to_vec();
    bytes.extend([0x0C, 8]);
    bytes.extend(record(1, 1, 1, 2));
    assert!(parse_dat(&bytes).is_err());
    let mut bytes = b"% Width 10\n% Height 10\n".to_vec();
    bytes.extend([0x0C, 8, 1, 2, 3]);
    assert!(parse_dat(&bytes).is_err());
}

#[test]
fn synthetic_generation_is_seeded() {
    let spec = SyntheticSpec {
        n_per_class: 3,
        ..SyntheticSpec::default()
    };
    let a = gen_synthetic(&spec).unwrap();
    let b = gen_synthetic(&spec).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    assert_eq!(a.train.len(), 6);
    let c = gen_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
    assert_ne!(a.train, c.train);
}

proptest! {
    #[test]
    fn dat_round_trip(s in stream_strategy()) {
        prop_assert_eq!(parse_dat(&write_dat(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn evtcsv_round_trip(s in stream_strategy()) {
        prop_assert_eq!(parse_evtcsv(&write_evtcsv(&s)).unwrap(), s);
    }

    #[test]
    fn frame_bits_are_event_or(s in stream_strategy(), t0 in 0u64..50_000, len in 1u64..5_000) {
        let f = accumulate(&s, t0, len);
        for c in 0..2 {
            for y in 0..s.height() {
                for x in 0..s.width() {
                    let want = s.events().iter().any(|e| {
                        e.t >= t0 && e.t < t0 + len && e.x == x && e.y == y && e.p as usize == c
                    });
                    prop_assert_eq!(f.get(c, y, x), want);
                }
            }
        }
    }

    #[test]
    fn clip_has_one_frame_per_sample(s in stream_strategy(), t0 in 0u64..60_000, k in 1u64..20) {
        let cfg = AccumulationConfig { t_sample_us: 1_000, t_length_us: 1_000 * k, frame_repeat: 1 };
        let frames = sample_frames(&s, t0, &cfg, (s.width(), s.height())).unwrap();
        prop_assert_eq!(frames.len() as u64, k);
        let start = t0.min(s.duration_us().saturating_sub(cfg.t_length_us));
        let hits = s.events().iter().filter(|e| e.t >= start && e.t < start + cfg.t_length_us).count();
        let ones: usize = frames.iter().map(|f| f.count_ones()).sum();
        prop_assert!(ones <= hits);
        prop_assert_eq!(ones == 0, hits == 0);
    }

    #[test]
    fn occurrence_counts_every_event(s in stream_strategy(), w in 1u16..20, h in 1u16..20) {
        let map = event_occurrence_map(std::slice::from_ref(&s)).unwrap();
        prop_assert_eq!(map.total(), s.len() as u64);
        let win = AttentionWindow::new(0, 0, w, h);
        let inside = s.events().iter().filter(|e| e.x < w && e.y < h).count() as u64;
        prop_assert_eq!(map.window_count(&win), inside);
    }
}
