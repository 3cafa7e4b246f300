#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::corpus::parse_batch;

fuzz_target!(|data: &str| {
    if let Ok(entries) = parse_batch(data) {
        assert!(entries.len() <= data.lines().count());
    }
});
