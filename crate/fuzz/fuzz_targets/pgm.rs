#![no_main]

use libfuzzer_sys::fuzz_target;
use lvdisc::imaging::pgm::parse_pgm;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = parse_pgm(data) {
        assert_eq!(r.samples.len(), r.width * r.height);
    }
});
