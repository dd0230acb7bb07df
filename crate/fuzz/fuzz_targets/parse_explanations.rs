#![no_main]
use libfuzzer_sys::fuzz_target;

use dissonance::explain::parse_explanations;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_explanations(data) {
        let text = table.to_csv_string();
        let again = parse_explanations(text.as_bytes()).expect("re-parse");
        assert_eq!(again.to_csv_string(), text);
    }
});
