#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::corpus::clean_text;

fuzz_target!(|data: &str| {
    let once = clean_text(data);
    assert_eq!(clean_text(&once), once);
});
