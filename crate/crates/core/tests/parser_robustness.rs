use koopgait::io::{
    apply_train_config, decode_model, encode_model, format_sequence, format_smoothed_track, parse_detections, parse_manifest,
    parse_sequence,
};
use koopgait::track::{select_largest, smooth_track, SmoothingParams};
use koopgait::train::TrainConfig;
use proptest::prelude::*;

const SEQUENCE_SEED: &str = include_str!("../../../fuzz/corpus/sequence/two_frames.seq");
const MANIFEST_SEED: &str = include_str!("../../../fuzz/corpus/manifest/small.txt");
const TRACK_SEED: &str = include_str!("../../../fuzz/corpus/track_csv/walk.csv");
const CONFIG_SEED: &str = include_str!("../../../fuzz/corpus/config/train.cfg");
const MODEL_SEED: &[u8] = include_bytes!("../../../fuzz/corpus/model/lds_header.bin");

fn check_sequence(text: &str) {
    if let Ok(record) = parse_sequence(text) {
        let written = format_sequence(&record).unwrap();
        assert_eq!(format_sequence(&parse_sequence(&written).unwrap()).unwrap(), written);
    }
}

fn check_manifest(text: &str) {
    if let Ok(manifest) = parse_manifest(text) {
        assert_eq!(parse_manifest(&manifest.format().unwrap()).unwrap(), manifest);
    }
}

fn check_track(text: &str) {
    let Ok(series) = parse_detections(text) else { return };
    let Ok(track) = select_largest(&series) else { return };
    if track.len() > 10_000 {
        return;
    }
    for params in [SmoothingParams::default(), SmoothingParams { window: 4, stride: 1 }] {
        if let Ok(smoothed) = smooth_track(&track, params) {
            assert_eq!(smoothed.points.len(), track.len());
            format_smoothed_track(&smoothed);
        }
    }
}

fn check_config(text: &str) {
    let mut config = TrainConfig::default();
    if apply_train_config(text, &mut config).is_ok() {
        config.validate().unwrap();
    }
}

fn check_model(data: &[u8]) {
    let Some((&mode, rest)) = data.split_first() else { return };
    let mut bytes = rest.to_vec();
    if mode & 1 == 1 {
        bytes.extend_from_slice(&crc32fast::hash(rest).to_le_bytes());
    }
    if let Ok(bundle) = decode_model(&bytes) {
        assert_eq!(encode_model(&bundle), bytes);
    }
}

fn mutate(seed: &[u8], edits: &[(usize, u8, u8)]) -> Vec<u8> {
    let mut out = seed.to_vec();
    for &(pos, byte, op) in edits {
        let i = if out.is_empty() { 0 } else { pos % (out.len() + 1) };
        match op % 3 {
            0 if i < out.len() => out[i] = byte,
            1 => out.insert(i, byte),
            _ if i < out.len() => {
                out.remove(i);
            }
            _ => out.push(byte),
        }
    }
    out
}

fn edits() -> impl Strategy<Value = Vec<(usize, u8, u8)>> {
    prop::collection::vec((any::<usize>(), prop::sample::select(b"0123456789.,-=e\n#abfx \xff".to_vec()), any::<u8>()), 0..8)
}

#[test]
fn seeds_are_accepted() {
    assert!(parse_sequence(SEQUENCE_SEED).is_ok());
    assert!(parse_manifest(MANIFEST_SEED).is_ok());
    let track = select_largest(&parse_detections(TRACK_SEED).unwrap()).unwrap();
    assert!(smooth_track(&track, SmoothingParams::default()).is_ok());
    assert!(apply_train_config(CONFIG_SEED, &mut TrainConfig::default()).is_ok());
    assert_eq!(MODEL_SEED[0] & 1, 1);
    assert!(decode_model(&MODEL_SEED[1..]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn mutated_sequences(e in edits()) {
        check_sequence(&String::from_utf8_lossy(&mutate(SEQUENCE_SEED.as_bytes(), &e)));
    }

    #[test]
    fn mutated_manifests(e in edits()) {
        check_manifest(&String::from_utf8_lossy(&mutate(MANIFEST_SEED.as_bytes(), &e)));
    }

    #[test]
    fn mutated_tracks(e in edits()) {
        check_track(&String::from_utf8_lossy(&mutate(TRACK_SEED.as_bytes(), &e)));
    }

    #[test]
    fn mutated_configs(e in edits()) {
        check_config(&String::from_utf8_lossy(&mutate(CONFIG_SEED.as_bytes(), &e)));
    }

    #[test]
    fn mutated_model_headers(e in edits()) {
        check_model(&mutate(MODEL_SEED, &e));
    }

    #[test]
    fn arbitrary_text(s in "\\PC{0,200}") {
        check_sequence(&s);
        check_manifest(&s);
        check_track(&s);
        check_config(&s);
    }
}
