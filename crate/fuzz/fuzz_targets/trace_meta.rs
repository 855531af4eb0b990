#![no_main]

use libfuzzer_sys::fuzz_target;
use tubecav::resonfit::TraceMeta;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<TraceMeta>(data);
});
