#![no_main]
use libfuzzer_sys::fuzz_target;

use dissonance::dataset::{parse_csv, TaskKind};

// First byte picks the task; the rest is the file. Anything that parses
// must survive a write/parse round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Some((&mode, body)) = data.split_first() else { return };
    let task = if mode & 1 == 0 { TaskKind::Regression } else { TaskKind::Classification };
    let drop = if mode & 2 == 0 { vec![] } else { vec!["drop".to_string()] };
    if let Ok(ds) = parse_csv(body, "fuzz", "target", &drop, task) {
        let text = ds.to_csv_string();
        let again = parse_csv(text.as_bytes(), "fuzz", ds.target_name(), &[], task).expect("re-parse");
        assert_eq!(again.to_csv_string(), text);
    }
});
