//! Fuzz the key=value config parser: arbitrary text must yield a validated
//! config or a structured error, never panic.

#![no_main]

use eoi::config::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = TrainConfig::parse(text, &[]) {
        // Accepted configs re-serialize losslessly.
        let back = TrainConfig::parse(&cfg.to_text(), &[]).expect("round trip");
        assert_eq!(back, cfg);
    }
});
