//! Runs the fuzz targets' round-trip checks over the checked-in seeds and
//! random mutations of them.

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use dissonance::dataset::{parse_csv, TaskKind};
use dissonance::experiment::ExperimentConfig;
use dissonance::explain::parse_explanations;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut paths: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn dataset_round_trip(data: &[u8]) -> bool {
    let Some((&mode, body)) = data.split_first() else { return false };
    let task = if mode & 1 == 0 { TaskKind::Regression } else { TaskKind::Classification };
    let drop = if mode & 2 == 0 { vec![] } else { vec!["drop".to_string()] };
    match parse_csv(body, "fuzz", "target", &drop, task) {
        Ok(ds) => {
            let text = ds.to_csv_string();
            let again = parse_csv(text.as_bytes(), "fuzz", ds.target_name(), &[], task).expect("re-parse");
            assert_eq!(again.to_csv_string(), text);
            true
        }
        Err(_) => false,
    }
}

fn explanations_round_trip(data: &[u8]) -> bool {
    match parse_explanations(data) {
        Ok(t) => {
            let text = t.to_csv_string();
            assert_eq!(parse_explanations(text.as_bytes()).expect("re-parse").to_csv_string(), text);
            true
        }
        Err(_) => false,
    }
}

fn config_round_trip(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    match ExperimentConfig::from_json_str(text) {
        Ok(cfg) => {
            assert_eq!(ExperimentConfig::from_json_str(&cfg.to_json_pretty()).expect("re-parse"), cfg);
            true
        }
        Err(_) => false,
    }
}

#[test]
fn seeds_parse_and_round_trip() {
    let ok = |name: &str, f: fn(&[u8]) -> bool| seeds(name).iter().filter(|s| f(s)).count();
    assert!(ok("parse_csv", dataset_round_trip) >= 3);
    assert_eq!(ok("parse_explanations", explanations_round_trip), seeds("parse_explanations").len());
    assert_eq!(ok("config_json", config_round_trip), seeds("config_json").len());
}

fn mutate(seed: &[u8], edits: &[(usize, u8, u8)]) -> Vec<u8> {
    let mut out = seed.to_vec();
    for &(pos, op, byte) in edits {
        if out.is_empty() {
            out.push(byte);
            continue;
        }
        let at = pos % out.len();
        match op % 4 {
            0 => out[at] = byte,
            1 => out.insert(at, byte),
            2 => {
                out.remove(at);
            }
            _ => out.truncate(at),
        }
    }
    out
}

proptest! {
    #[test]
    fn mutated_inputs_never_panic(which in 0usize..3, pick in any::<usize>(), edits in proptest::collection::vec((any::<usize>(), any::<u8>(), any::<u8>()), 0..8)) {
        let (name, f): (&str, fn(&[u8]) -> bool) = [
            ("parse_csv", dataset_round_trip as fn(&[u8]) -> bool),
            ("parse_explanations", explanations_round_trip),
            ("config_json", config_round_trip),
        ][which];
        let all = seeds(name);
        let input = mutate(&all[pick % all.len()], &edits);
        f(&input);
    }
}
