#![no_main]

use libfuzzer_sys::fuzz_target;
use mcs_core::formats::{read_equivalent_key, write_equivalent_key};

fuzz_target!(|data: &[u8]| {
    if let Ok(ek) = read_equivalent_key(data) {
        assert_eq!(write_equivalent_key(&ek), data);
        let ct = vec![0u8; ek.num_blocks() * 16];
        let _ = mcs_core::attack::ees_decrypt(&ct, &ek);
    }
});
