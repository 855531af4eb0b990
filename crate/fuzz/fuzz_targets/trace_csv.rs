#![no_main]

use libfuzzer_sys::fuzz_target;
use tubecav::resonfit::{fit_reflection, ReflectionTrace};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = ReflectionTrace::read_csv(data) {
        if t.len() <= 4096 {
            let _ = fit_reflection(&t, None);
        }
    }
});
