#![no_main]

use koopgait::io::{format_sequence, parse_sequence};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(record) = parse_sequence(text) else { return };
    let written = format_sequence(&record).expect("a parsed record must be writable");
    let again = parse_sequence(&written).expect("written text must parse");
    assert_eq!(format_sequence(&again).expect("writable"), written);
});
