#![no_main]

use koopgait::io::{apply_train_config, parse_key_values};
use koopgait::train::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if parse_key_values(text).is_err() {
        return;
    }
    let mut config = TrainConfig::default();
    if apply_train_config(text, &mut config).is_ok() {
        config.validate().expect("an applied config is valid");
    }
});
