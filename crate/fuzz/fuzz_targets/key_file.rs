#![no_main]

use libfuzzer_sys::fuzz_target;
use mcs_core::formats::{emit_key_file, parse_key_file};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(key) = parse_key_file(text) {
        assert_eq!(parse_key_file(&emit_key_file(&key)), Ok(key));
    }
});
