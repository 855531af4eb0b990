#![no_main]

use libfuzzer_sys::fuzz_target;
use tubecav_cli::config::{PlotKind, RenderConfig};
use tubecav_cli::svg::{render, Table};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if Table::parse(text).is_err() {
        return;
    }
    let header = text.lines().next().unwrap_or_default();
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if cols.len() < 2 {
        return;
    }
    for kind in [PlotKind::Scatter, PlotKind::Line, PlotKind::Dual] {
        let spec = RenderConfig {
            csv: vec![],
            x: cols[0].clone(),
            y: cols[1..].to_vec(),
            kind,
            log_x: kind == PlotKind::Scatter,
            log_y: false,
            title: String::new(),
            output: "fuzz.svg".into(),
        };
        let _ = render(&spec, &[text.to_string()]);
    }
});
