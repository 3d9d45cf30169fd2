//! Fuzz the experiment-config JSON parser: arbitrary text must either be
//! rejected with an error or produce a config that re-serializes cleanly.

#![no_main]

use libfuzzer_sys::fuzz_target;
use nhym_core::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        serde_json::to_string(&cfg).expect("accepted config must re-serialize");
    }
});
