#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::config::LabConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = LabConfig::parse(data) {
        assert!(cfg.validate().is_ok());
    }
});
