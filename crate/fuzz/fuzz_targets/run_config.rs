#![no_main]

use libfuzzer_sys::fuzz_target;
use tubecav_cli::{config, sweep};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = config::parse(text) {
            if let Some(s) = &cfg.sweep {
                let _ = sweep::grid_len(s);
            }
        }
    }
});
