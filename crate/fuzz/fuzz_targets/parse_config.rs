#![no_main]

use libfuzzer_sys::fuzz_target;
use mono_split_cli::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Both decoders, regardless of what the text looks like.
    for hint in [None, Some(std::path::Path::new("c.json")), Some(std::path::Path::new("c.toml"))] {
        if let Ok(cfg) = ExperimentConfig::parse(text, hint) {
            assert!(cfg.n_trials >= 2);
            assert!(!cfg.solvers.is_empty());
            let json = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::parse(&json, None).unwrap(), cfg);
        }
    }
});
