#![no_main]

use libfuzzer_sys::fuzz_target;
use tubecav::modesolver::FieldSidecar;

// sidecar JSON, then a NUL, then the raw dump
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    if let Ok(text) = std::str::from_utf8(&data[..split]) {
        if let Ok(s) = FieldSidecar::from_json(text) {
            let _ = s.decode(data.get(split + 1..).unwrap_or(&[]));
        }
    }
});
