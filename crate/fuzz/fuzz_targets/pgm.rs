#![no_main]

use libfuzzer_sys::fuzz_target;
use mcs_core::formats::PgmImage;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = PgmImage::parse(data) {
        let bytes = img.to_bytes();
        assert_eq!(PgmImage::parse(&bytes).as_ref(), Ok(&img));
        let _ = img.recorded_pad();
    }
});
