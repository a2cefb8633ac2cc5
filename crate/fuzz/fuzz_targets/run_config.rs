#![no_main]

use libfuzzer_sys::fuzz_target;
use ppdfl::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(text) {
        // accepted configs must survive a round trip and build a protocol config
        let back = RunConfig::from_json(&cfg.to_json_pretty()).expect("re-parse");
        assert_eq!(back.to_json_pretty(), cfg.to_json_pretty());
        let _ = cfg.protocol_config();
    }
});
