#![no_main]

use libfuzzer_sys::fuzz_target;
use lvdisc::cardiac::StudyReport;

// anything that parses must survive a write/read cycle unchanged
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(r) = StudyReport::from_json(text) {
        let again = StudyReport::from_json(&r.to_json()).expect("own output parses");
        assert_eq!(r.to_json(), again.to_json());
    }
});
