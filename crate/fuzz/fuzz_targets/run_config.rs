#![no_main]

use libfuzzer_sys::fuzz_target;
use rhodrift::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = RunConfig::from_toml(text) {
        let _ = config.initial_len(10_000);
        if let Ok(again) = config.to_toml() {
            assert!(RunConfig::from_toml(&again).is_ok());
        }
    }
});
