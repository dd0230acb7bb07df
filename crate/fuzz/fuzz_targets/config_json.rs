#![no_main]
use libfuzzer_sys::fuzz_target;

use dissonance::experiment::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json_str(text) {
        let again = ExperimentConfig::from_json_str(&cfg.to_json_pretty()).expect("re-parse");
        assert_eq!(again, cfg);
    }
});
