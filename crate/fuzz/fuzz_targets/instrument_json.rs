#![no_main]

use libfuzzer_sys::fuzz_target;
use persona_lab::experiment::HumanBenchmark;
use persona_lab::instruments::Instrument;

fuzz_target!(|data: &str| {
    if let Ok(inst) = Instrument::from_json(data) {
        assert!(inst.validate().is_ok());
    }
    let _ = HumanBenchmark::from_json(data);
});
