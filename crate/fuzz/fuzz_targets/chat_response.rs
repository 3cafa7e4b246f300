#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::gateway::parse_chat_response;

fuzz_target!(|data: &str| {
    let _ = parse_chat_response(data);
});
