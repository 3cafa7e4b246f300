#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::instruments::{parse_rating, Part};

fuzz_target!(|data: &str| {
    for part in [Part::Relevance, Part::Dilemma] {
        let scale = part.scale();
        if let Ok(parsed) = parse_rating(data, scale) {
            assert!(scale.contains(parsed.rating));
        }
    }
});
