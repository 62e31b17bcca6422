//! Fuzz the ASCII map parser: arbitrary text must parse into a validated
//! grid or fail with a structured error, never panic.

#![no_main]

use eoi::envs::map::GridMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(map) = GridMap::parse(text) {
        // Accepted maps satisfy the advertised invariants.
        assert!(map.width >= 3 && map.height >= 3);
        assert!(!map.spawns.is_empty());
    }
});
