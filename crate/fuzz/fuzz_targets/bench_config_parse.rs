#![no_main]

use csum_core::bench::BenchConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = BenchConfig::from_toml(text) {
        assert!(cfg.validate().is_ok());
    }
});
