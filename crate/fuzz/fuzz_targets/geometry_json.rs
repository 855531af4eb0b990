#![no_main]

use libfuzzer_sys::fuzz_target;
use tubecav::geometry::CavityGeometry;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(g) = CavityGeometry::from_json(text) {
            let back = g.to_json().unwrap();
            CavityGeometry::from_json(&back).unwrap();
        }
    }
});
