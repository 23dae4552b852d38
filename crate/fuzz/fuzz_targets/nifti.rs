#![no_main]

use libfuzzer_sys::fuzz_target;
use lvdisc::imaging::nifti::parse_nifti;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = parse_nifti(data) {
        let n: usize = v.header.dims.iter().product();
        assert_eq!(v.data.len(), n);
    }
});
