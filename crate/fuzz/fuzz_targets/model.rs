#![no_main]

//! The first byte selects the mode. Even: the input is decoded as is. Odd: the
//! rest is a model body and the matching CRC-32 is appended, so mutations reach
//! the structural checks behind the checksum.

use koopgait::io::{decode_model, encode_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&mode, rest)) = data.split_first() else { return };
    let bytes = if mode & 1 == 1 {
        let mut body = rest.to_vec();
        body.extend_from_slice(&crc32fast::hash(rest).to_le_bytes());
        body
    } else {
        rest.to_vec()
    };
    if let Ok(bundle) = decode_model(&bytes) {
        assert_eq!(encode_model(&bundle), bytes);
    }
});
