mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nrt_core::event::{parse_event_log, slice_window, write_event_log};
use nrt_core::synth::generate_participant;
use proptest::prelude::*;

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn canonical_files_round_trip(seed in 0u64..1_000) {
        let log = generate_participant(&common::small_generator(seed, 1, 2), 0).log;
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a/P01"), tmp.path().join("b/P01"));
        write_event_log(&log, &a).unwrap();
        let parsed = parse_event_log(&a).unwrap();
        write_event_log(&parsed, &b).unwrap();
        let (fa, fb) = (read_tree(&a), read_tree(&b));
        prop_assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
        for (name, bytes) in &fa {
            prop_assert!(bytes == &fb[name], "{} differs after a round trip", name);
        }
        // a second parse sees the same log
        prop_assert_eq!(parse_event_log(&b).unwrap(), parsed);
    }

    #[test]
    fn physio_sample_times_increase(seed in 0u64..1_000) {
        let log = generate_participant(&common::small_generator(seed, 1, 1), 0).log;
        let tmp = tempfile::tempdir().unwrap();
        write_event_log(&log, tmp.path()).unwrap();
        let parsed = parse_event_log(tmp.path()).unwrap();
        prop_assert!(!parsed.physio.channels.is_empty());
        for ch in parsed.physio.channels.values() {
            let n = ch.samples.len();
            prop_assert!(n > 1);
            let times: Vec<f64> = (0..n).map(|i| ch.sample_time_seconds(i)).collect();
            prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
            let want = ch.start.utc_millis as f64 / 1000.0 + (n - 1) as f64 / ch.rate_hz;
            prop_assert!((times[n - 1] - want).abs() < 1e-6);
        }
    }

    #[test]
    fn slice_window_is_contiguous(
        mut times in prop::collection::vec(-10_000i64..10_000, 0..200),
        end in -12_000i64..12_000,
        duration in 1i64..25_000,
    ) {
        times.sort_unstable();
        let got = slice_window(&times, end, duration);
        let want: Vec<i64> = times.iter().copied().filter(|&t| t >= end - duration && t < end).collect();
        prop_assert_eq!(got, want.as_slice());
        if !got.is_empty() {
            let offset = (got.as_ptr() as usize - times.as_ptr() as usize) / std::mem::size_of::<i64>();
            prop_assert_eq!(&times[offset..offset + got.len()], got);
        }
    }
}
