#![no_main]

use libfuzzer_sys::fuzz_target;
use vidspeed_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        assert_eq!(RunConfig::from_json(&cfg.to_json()).expect("echoed config parses"), cfg);
    }
});
