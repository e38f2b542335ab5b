#![no_main]

use libfuzzer_sys::fuzz_target;
use sparseloco::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml_str(text) {
        let _ = cfg.expand();
        let round = cfg.to_toml_string().expect("valid config serializes");
        assert_eq!(RunConfig::from_toml_str(&round).expect("round trip parses"), cfg);
    }
});
