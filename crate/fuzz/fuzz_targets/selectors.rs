#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::corpus::Source;
use persona_lab::experiment::parse_versions;
use persona_lab::foundation::Foundation;
use persona_lab::report::parse_formats;

// Short command-line selectors share one target.
fuzz_target!(|data: &str| {
    let _ = parse_versions(data);
    let _ = parse_formats(data);
    let _ = data.parse::<Source>();
    let _ = data.parse::<Foundation>();
});
