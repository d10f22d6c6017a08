//! Replays the fuzz corpus seeds through the fuzz-target assertions.

use std::fs;
use std::path::PathBuf;

use degenctl_core::experiment::{ExperimentConfig, Samples, U0Spec};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (name, data) in seeds("config_json") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(cfg) = ExperimentConfig::from_json(text) {
            assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted > 0);
}

#[test]
fn u0_seeds() {
    for (name, data) in seeds("u0_spec") {
        let spec: U0Spec = std::str::from_utf8(&data).unwrap().parse().unwrap();
        assert_eq!(spec.to_string().parse::<U0Spec>().unwrap(), spec, "{name}");
    }
}

#[test]
fn samples_seeds() {
    for (name, data) in seeds("samples_csv") {
        if let Ok(s) = Samples::from_reader(data.as_slice()) {
            assert!(s.x().windows(2).all(|w| w[0] < w[1]), "{name}");
            assert!(s.x().iter().all(|&p| s.eval(p).is_finite()), "{name}");
        }
    }
}
