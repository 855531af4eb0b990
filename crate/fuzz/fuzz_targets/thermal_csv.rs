#![no_main]

use libfuzzer_sys::fuzz_target;
use tubecav::cryo::{fit_thermal_series, read_series, MBParams};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = read_series(data) {
        if s.len() <= 256 {
            let _ = fit_thermal_series(&s, 98.2e9, &MBParams::niobium());
        }
    }
});
