#![no_main]

use libfuzzer_sys::fuzz_target;
use lvdisc_app::api::SeedRequest;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<SeedRequest>(data);
});
