//! Fuzz the binary checkpoint decoder: arbitrary bytes must either parse or
//! return a structured error, never panic, hang or over-allocate.

#![no_main]

use eoi::nnkit::checkpoint::{read_tensors, write_tensors};
use libfuzzer_sys::fuzz_target;
use std::io::Cursor;

fuzz_target!(|data: &[u8]| {
    if let Ok(dict) = read_tensors(&mut Cursor::new(data)) {
        // Anything accepted must survive a write/read round trip.
        let mut buf = Vec::new();
        write_tensors(&mut buf, &dict).expect("re-encoding a parsed checkpoint");
        let again = read_tensors(&mut Cursor::new(&buf[..])).expect("re-decoding");
        assert_eq!(again.len(), dict.len());
    }
});
