#![no_main]

use koopgait::io::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(manifest) = parse_manifest(text) else { return };
    let written = manifest.format().expect("a parsed manifest must be writable");
    assert_eq!(parse_manifest(&written).expect("written text must parse"), manifest);
});
