#![no_main]

use libfuzzer_sys::fuzz_target;
use lvdisc::imaging::png_io::parse_png;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = parse_png(data) {
        assert_eq!(r.samples.len(), r.width * r.height);
        assert!(r.samples.iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
