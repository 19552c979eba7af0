#![no_main]

use koopgait::io::{format_smoothed_track, parse_detections};
use koopgait::track::{select_largest, smooth_track, SmoothingParams};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(series) = parse_detections(text) else { return };
    let Ok(track) = select_largest(&series) else { return };
    if track.len() > 10_000 {
        return;
    }
    for params in [SmoothingParams::default(), SmoothingParams { window: 4, stride: 1 }] {
        if let Ok(smoothed) = smooth_track(&track, params) {
            assert_eq!(smoothed.points.len(), track.len());
            let _ = format_smoothed_track(&smoothed);
        }
    }
});
