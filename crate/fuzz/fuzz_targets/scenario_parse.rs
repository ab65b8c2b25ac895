#![no_main]

use csum_core::simnet::{run_scenario, Scenario};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mut s) = Scenario::from_toml(text) else {
        return;
    };
    // Bound the work a parsed scenario can ask for.
    if s.chain_length > 64 || s.update_count() > 16 {
        return;
    }
    s.max_ticks = s.max_ticks.min(500);
    if let Some(r) = &mut s.random_payloads {
        r.max_len = r.max_len.min(256);
        r.min_len = r.min_len.min(r.max_len);
    }
    for a in &mut s.script {
        if let csum_core::simnet::ChannelAction::Flood { count } = a {
            *count = (*count).min(16);
        }
    }
    if let Some(r) = &mut s.adversary {
        r.max_flood = r.max_flood.min(16);
    }
    if let Ok(t) = run_scenario(&s) {
        assert_eq!(t.summary.forgeries_accepted, 0);
        assert_eq!(t.summary.genuine_rejected, 0);
        assert_eq!(t.summary.isolation_violations, 0);
    }
});
