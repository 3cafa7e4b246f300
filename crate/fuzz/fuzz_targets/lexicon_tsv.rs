#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::scaffold::Lexicon;

fuzz_target!(|data: &str| {
    let _ = Lexicon::parse(data);
});
