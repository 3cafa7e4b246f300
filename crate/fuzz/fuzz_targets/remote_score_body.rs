#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::scaffold::parse_score_body;

fuzz_target!(|data: &str| {
    if let Ok(scores) = parse_score_body(data) {
        for (_, &v) in scores.iter() {
            assert!((0.0..=10.0).contains(&v));
        }
    }
});
