#![no_main]

use libfuzzer_sys::fuzz_target;
use lvdisc::imaging::decode_image;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_image(data) {
        assert!(img.pixels().iter().all(|v| v.is_finite()));
    }
});
